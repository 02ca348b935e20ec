//! Experiment configuration files.
//!
//! The format is a flat sectioned key-value text:
//!
//! ```text
//! # comment
//! [section]
//! key = value   # trailing comment
//! ```
//!
//! Values are scalars, words or bracketed lists (`[1, 2, 3]`). Every error
//! carries the line it was found on.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use thiserror::Error;

use crate::background::{BackgroundSpec, Ctmc, GeneratorMatrix, MmisFeed};
use crate::modulation::{Modulation, RateMap};
use crate::paths::{StateSpace, StepPath};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ConfigError {
    #[error("line {line}: {message}")]
    Syntax { line: usize, message: String },
    #[error("line {line}: [{section}] {key}: {message}")]
    Value { line: usize, section: String, key: String, message: String },
    #[error("missing [{section}] {key}")]
    Missing { section: String, key: String },
    #[error("missing section [{0}]")]
    MissingSection(String),
    #[error("line {line}: unknown key [{section}] {key}")]
    UnknownKey { line: usize, section: String, key: String },
    #[error("line {line}: unknown section [{section}]")]
    UnknownSection { line: usize, section: String },
    #[error("{0}")]
    Invalid(String),
    #[error("cannot read {path}: {message}")]
    Io { path: String, message: String },
}

#[derive(Debug, Clone, PartialEq)]
struct Entry {
    value: String,
    line: usize,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Section {
    name: String,
    line: usize,
    entries: BTreeMap<String, Entry>,
}

const KNOWN: &[(&str, &[&str])] = &[
    ("queue", &["t", "space", "lambda", "kappa", "mu"]),
    (
        "background",
        &["kind", "generator", "initial", "epsilon", "n", "x0", "step", "path", "arrival", "work"],
    ),
    ("phi", &["path", "grid"]),
    ("simulate", &["mode", "replicas"]),
    ("verify", &["replicas"]),
    ("attainable", &["m", "p", "tol", "refinements", "oracle_jumps", "oracle_grid", "levels", "k0", "doublings"]),
    ("rate", &["regime", "interval", "rho", "grid", "values", "a", "resolution", "m", "lo", "hi", "points"]),
    ("ldp", &["n", "set", "replicas", "target"]),
    ("schilder", &["targets", "m"]),
];

impl Section {
    pub fn name(&self) -> &str {
        &self.name
    }

    fn value_error(&self, key: &str, line: usize, message: impl fmt::Display) -> ConfigError {
        ConfigError::Value { line, section: self.name.clone(), key: key.to_string(), message: message.to_string() }
    }

    pub fn raw(&self, key: &str) -> Option<(&str, usize)> {
        self.entries.get(key).map(|e| (e.value.as_str(), e.line))
    }

    pub fn has(&self, key: &str) -> bool {
        self.entries.contains_key(key)
    }

    pub fn line_of(&self, key: &str) -> usize {
        self.entries.get(key).map_or(self.line, |e| e.line)
    }

    pub fn str(&self, key: &str) -> Result<&str, ConfigError> {
        self.raw(key)
            .map(|(v, _)| v)
            .ok_or_else(|| ConfigError::Missing { section: self.name.clone(), key: key.to_string() })
    }

    pub fn parse<T: FromStr>(&self, key: &str) -> Result<T, ConfigError>
    where
        T::Err: fmt::Display,
    {
        let (value, line) = self
            .raw(key)
            .ok_or_else(|| ConfigError::Missing { section: self.name.clone(), key: key.to_string() })?;
        value.parse::<T>().map_err(|e| self.value_error(key, line, format!("cannot parse {value:?}: {e}")))
    }

    pub fn parse_or<T: FromStr>(&self, key: &str, default: T) -> Result<T, ConfigError>
    where
        T::Err: fmt::Display,
    {
        if self.has(key) {
            self.parse(key)
        } else {
            Ok(default)
        }
    }

    pub fn list<T: FromStr>(&self, key: &str) -> Result<Vec<T>, ConfigError>
    where
        T::Err: fmt::Display,
    {
        let (value, line) = self
            .raw(key)
            .ok_or_else(|| ConfigError::Missing { section: self.name.clone(), key: key.to_string() })?;
        parse_list(value).map_err(|m| self.value_error(key, line, m))
    }

    /// A list of reals, either explicit or `linspace <lo> <hi> <count>`.
    pub fn floats(&self, key: &str) -> Result<Vec<f64>, ConfigError> {
        let (value, line) = self
            .raw(key)
            .ok_or_else(|| ConfigError::Missing { section: self.name.clone(), key: key.to_string() })?;
        match value.strip_prefix("linspace") {
            Some(args) => {
                let parts: Vec<&str> = args.split_whitespace().collect();
                let [lo, hi, count] = parts.as_slice() else {
                    return Err(self.value_error(key, line, "expected `linspace <lo> <hi> <count>`"));
                };
                let err = |e: &dyn fmt::Display| self.value_error(key, line, e.to_string());
                let lo: f64 = lo.parse().map_err(|e| err(&e))?;
                let hi: f64 = hi.parse().map_err(|e| err(&e))?;
                let count: usize = count.parse().map_err(|e| err(&e))?;
                if count < 2 || !(hi > lo) {
                    return Err(self.value_error(key, line, "linspace needs count >= 2 and lo < hi"));
                }
                Ok((0..count).map(|i| lo + (hi - lo) * i as f64 / (count - 1) as f64).collect())
            }
            None => self.list(key),
        }
    }

    pub fn error(&self, key: &str, message: impl fmt::Display) -> ConfigError {
        self.value_error(key, self.line_of(key), message)
    }
}

/// Parses `[a, b, c]`, `[a b c]` or a bare `a, b, c`.
pub fn parse_list<T: FromStr>(value: &str) -> Result<Vec<T>, String>
where
    T::Err: fmt::Display,
{
    let inner = value.trim();
    let inner = match (inner.strip_prefix('['), inner.ends_with(']')) {
        (Some(rest), true) => &rest[..rest.len() - 1],
        (None, false) => inner,
        _ => return Err(format!("unbalanced brackets in {value:?}")),
    };
    inner
        .split(|c: char| c == ',' || c.is_whitespace())
        .filter(|t| !t.is_empty())
        .map(|t| t.parse::<T>().map_err(|e| format!("cannot parse {t:?}: {e}")))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Config {
    sections: BTreeMap<String, Section>,
    /// Directory relative paths in the file are resolved against.
    base: PathBuf,
}

impl Config {
    pub fn parse_str(text: &str) -> Result<Config, ConfigError> {
        let mut sections: BTreeMap<String, Section> = BTreeMap::new();
        let mut current: Option<String> = None;
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let content = raw.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            if let Some(rest) = content.strip_prefix('[') {
                let name = rest
                    .strip_suffix(']')
                    .ok_or_else(|| ConfigError::Syntax { line, message: format!("unterminated section header {content:?}") })?
                    .trim()
                    .to_string();
                if !KNOWN.iter().any(|(s, _)| *s == name) {
                    return Err(ConfigError::UnknownSection { line, section: name });
                }
                if sections.contains_key(&name) {
                    return Err(ConfigError::Syntax { line, message: format!("section [{name}] appears twice") });
                }
                sections.insert(name.clone(), Section { name: name.clone(), line, entries: BTreeMap::new() });
                current = Some(name);
                continue;
            }
            let (key, value) = content
                .split_once('=')
                .ok_or_else(|| ConfigError::Syntax { line, message: format!("expected `key = value`, found {content:?}") })?;
            let (key, value) = (key.trim().to_string(), value.trim().to_string());
            if key.is_empty() || value.is_empty() {
                return Err(ConfigError::Syntax { line, message: "empty key or value".into() });
            }
            let Some(name) = &current else {
                return Err(ConfigError::Syntax { line, message: "key outside of any section".into() });
            };
            let known = KNOWN.iter().find(|(s, _)| s == name).map(|(_, k)| *k).unwrap_or(&[]);
            if !known.contains(&key.as_str()) {
                return Err(ConfigError::UnknownKey { line, section: name.clone(), key });
            }
            let section = sections.get_mut(name).expect("section registered");
            if section.entries.insert(key.clone(), Entry { value, line }).is_some() {
                return Err(ConfigError::Syntax { line, message: format!("duplicate key {key}") });
            }
        }
        Ok(Config { sections, base: PathBuf::from(".") })
    }

    pub fn load(path: &Path) -> Result<Config, ConfigError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ConfigError::Io { path: path.display().to_string(), message: e.to_string() })?;
        let mut config = Config::parse_str(&text)?;
        config.base = path.parent().map(Path::to_path_buf).unwrap_or_else(|| PathBuf::from("."));
        Ok(config)
    }

    pub fn section(&self, name: &str) -> Option<&Section> {
        self.sections.get(name)
    }

    pub fn require(&self, name: &str) -> Result<&Section, ConfigError> {
        self.section(name).ok_or_else(|| ConfigError::MissingSection(name.to_string()))
    }

    /// An empty section stands in for an absent optional one.
    pub fn optional(&self, name: &str) -> Section {
        self.section(name).cloned().unwrap_or_else(|| Section { name: name.to_string(), ..Section::default() })
    }

    pub fn resolve(&self, relative: &str) -> PathBuf {
        let p = Path::new(relative);
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base.join(p)
        }
    }

    /// `[queue]`: the horizon and the modulation.
    pub fn queue(&self) -> Result<(Modulation, f64), ConfigError> {
        let q = self.require("queue")?;
        let t: f64 = q.parse("t")?;
        if !(t.is_finite() && t >= 0.0) {
            return Err(q.error("t", format!("horizon {t} must be finite and non-negative")));
        }
        let space = parse_space(q.str("space")?).map_err(|m| q.error("space", m))?;
        let map = |key: &str| parse_rate_map(q.str(key)?).map_err(|m| q.error(key, m));
        let modulation = Modulation::new(map("lambda")?, map("kappa")?, map("mu")?, space)
            .map_err(|e| ConfigError::Value { line: q.line, section: "queue".into(), key: "lambda/kappa/mu".into(), message: e.to_string() })?;
        Ok((modulation, t))
    }

    /// `[background]`, checked against the modulation's state space.
    pub fn background(&self, modulation: &Modulation) -> Result<BackgroundSpec, ConfigError> {
        let b = self.require("background")?;
        let kind = b.str("kind")?;
        let chain = || -> Result<Ctmc, ConfigError> {
            let entries: Vec<f64> = b.list("generator")?;
            let q = GeneratorMatrix::new(entries).map_err(|e| b.error("generator", e))?;
            let initial: Vec<f64> = if b.has("initial") {
                b.list("initial")?
            } else {
                let mut v = vec![0.0; q.dim()];
                v[0] = 1.0;
                v
            };
            Ctmc::new(q, initial).map_err(|e| b.error("initial", e))
        };
        let spec = match kind {
            "ctmc" => BackgroundSpec::Ctmc(chain()?),
            "time-scaled-ctmc" => {
                BackgroundSpec::time_scaled_ctmc(chain()?, b.parse("epsilon")?, b.parse_or("n", 1u64)?)
                    .map_err(|e| b.error("epsilon", e))?
            }
            "reflected-bm" => BackgroundSpec::reflected_bm(b.parse_or("x0", 0.5)?, b.parse_or("step", 1e-3)?)
                .map_err(|e| b.error("x0", e))?,
            "scaled-bm" => BackgroundSpec::scaled_bm(b.parse_or("n", 1u64)?, b.parse_or("step", 1e-3)?)
                .map_err(|e| b.error("step", e))?,
            "mmis-feed" => {
                let feed = MmisFeed::new(chain()?, b.list("arrival")?, b.list("work")?).map_err(|e| b.error("arrival", e))?;
                BackgroundSpec::MmisFeed(feed)
            }
            "deterministic" => {
                let file = self.resolve(b.str("path")?);
                let text = std::fs::read_to_string(&file)
                    .map_err(|e| ConfigError::Io { path: file.display().to_string(), message: e.to_string() })?;
                let path = StepPath::read_csv(text.as_bytes(), modulation.space().clone()).map_err(|e| b.error("path", e))?;
                BackgroundSpec::Deterministic(path)
            }
            other => return Err(b.error("kind", format!("unknown background kind {other:?}"))),
        };
        check_dimensions(&spec, modulation).map_err(|m| b.error("kind", m))?;
        Ok(spec)
    }
}

fn check_dimensions(spec: &BackgroundSpec, modulation: &Modulation) -> Result<(), String> {
    let bg = spec.state_space();
    let ms = modulation.space();
    let ok = match (ms, &bg) {
        (StateSpace::Finite { .. }, StateSpace::Finite { .. }) => ms.size() == bg.size(),
        (StateSpace::Real, b) => !b.is_finite(),
        (StateSpace::Interval { lo, hi }, StateSpace::Interval { lo: l2, hi: h2 }) => lo <= l2 && h2 <= hi,
        (a, b) => a == b,
    };
    if ok {
        Ok(())
    } else {
        Err(format!("background lives on {bg} but the modulation is defined on {ms}"))
    }
}

/// `finite <d>`, `labels <a> <b> ...`, `nonneg-int`, `interval <lo> <hi>` or `real`.
pub fn parse_space(value: &str) -> Result<StateSpace, String> {
    let words: Vec<&str> = value.split_whitespace().collect();
    let num = |s: &str| s.parse::<f64>().map_err(|e| format!("cannot parse {s:?}: {e}"));
    match words.as_slice() {
        ["finite", d] => {
            let d: usize = d.parse().map_err(|e| format!("cannot parse {d:?}: {e}"))?;
            StateSpace::indexed(d).map_err(|e| e.to_string())
        }
        ["labels", labels @ ..] => StateSpace::finite(labels.iter().copied()).map_err(|e| e.to_string()),
        ["nonneg-int"] => Ok(StateSpace::NonNegInt),
        ["interval", lo, hi] => StateSpace::interval(num(lo)?, num(hi)?).map_err(|e| e.to_string()),
        ["real"] => Ok(StateSpace::Real),
        _ => Err(format!("unknown state space {value:?}")),
    }
}

/// `constant c`, `table [..]`, `affine <offset> <slope>`, `identity`, `one-minus` or `ramp <c>`.
pub fn parse_rate_map(value: &str) -> Result<RateMap, String> {
    let value = value.trim();
    let (head, rest) = value.split_once(char::is_whitespace).unwrap_or((value, ""));
    let rest = rest.trim();
    let num = |s: &str| s.parse::<f64>().map_err(|e| format!("cannot parse {s:?}: {e}"));
    let args: Vec<&str> = rest.split_whitespace().collect();
    match (head, args.as_slice()) {
        ("constant", [c]) => Ok(RateMap::Constant(num(c)?)),
        ("table", _) if !rest.is_empty() => Ok(RateMap::Table(parse_list(rest)?)),
        ("affine", [o, s]) => Ok(RateMap::Affine { offset: num(o)?, slope: num(s)? }),
        ("identity", []) => Ok(RateMap::Identity),
        ("one-minus", []) => Ok(RateMap::OneMinus),
        ("ramp", [c]) => Ok(RateMap::Ramp(num(c)?)),
        _ => Err(format!("unknown rate map {value:?}")),
    }
}
