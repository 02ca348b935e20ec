mod common;

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use modinf::ldp::{rate_i_unscaled, AttainableInterval};
use modinf::modulation::phi;
use modinf::paths::{StateSpace, StepPath};

const TWO_STATE: &str = "
[queue]
t = 1
space = finite 2
lambda = table [1, 2]
kappa = constant 1
mu = table [2, 1]

[background]
kind = ctmc
generator = [-1, 1, 1, -1]
initial = [0.5, 0.5]

[verify]
replicas = 100000
";

const UNIT_WORK: &str = "
[queue]
t = 1
space = finite 2
lambda = table [1, 2]
kappa = constant 1
mu = constant 1

[attainable]
m = 64
p = 257
oracle_jumps = 2
oracle_grid = 10
";

struct Workspace {
    dir: tempfile::TempDir,
}

impl Workspace {
    fn new() -> Self {
        Workspace { dir: tempfile::tempdir().unwrap() }
    }

    fn write(&self, name: &str, text: &str) -> PathBuf {
        let path = self.dir.path().join(name);
        std::fs::write(&path, text).unwrap();
        path
    }

    fn out(&self, name: &str) -> PathBuf {
        self.dir.path().join(name)
    }
}

fn modinf(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_modinf")).args(args).env_remove("CI").output().unwrap()
}

fn run(command: &str, config: &Path, out: &Path, extra: &[&str]) -> Output {
    let mut args = vec![command, "--config", config.to_str().unwrap(), "--out", out.to_str().unwrap()];
    args.extend_from_slice(extra);
    modinf(&args)
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

/// Rows of a CSV file after the header, split on commas.
fn rows(path: &Path) -> (String, Vec<Vec<String>>) {
    let text = std::fs::read_to_string(path).unwrap();
    let mut lines = text.lines();
    let header = lines.next().unwrap().to_owned();
    (header, lines.map(|l| l.split(',').map(str::to_owned).collect()).collect())
}

#[test]
fn usage_errors_exit_with_one() {
    assert_eq!(modinf(&["frobnicate"]).status.code(), Some(1));
    assert_eq!(modinf(&["rate"]).status.code(), Some(1));
    assert_eq!(modinf(&["rate", "--config", "/nonexistent/file.cfg"]).status.code(), Some(1));
    assert_eq!(modinf(&["--help"]).status.code(), Some(0));
}

#[test]
fn config_errors_report_line_numbers() {
    let ws = Workspace::new();
    let bad = ws.write("bad.cfg", "[queue]\nt = 1\nspace = finite 2\nthis is not a pair\n");
    let o = run("phi", &bad, &ws.out("o"), &[]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("line 4"), "{}", stderr(&o));

    let unknown = ws.write("unknown.cfg", &format!("{TWO_STATE}\n[verify]\nspeed = 3\n"));
    let o = run("verify-mixture", &unknown, &ws.out("o"), &["--seed", "1"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("line"), "{}", stderr(&o));

    let mismatch = ws.write("mismatch.cfg", &TWO_STATE.replace("[-1, 1, 1, -1]", "[-2, 1, 1, 1, -2, 1, 1, 1, -2]"));
    let o = run("simulate", &mismatch, &ws.out("o"), &["--seed", "1"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("line 12"), "{}", stderr(&o));
}

#[test]
fn ci_mode_requires_a_seed() {
    let ws = Workspace::new();
    let cfg = ws.write("two.cfg", TWO_STATE);
    let o = run("simulate", &cfg, &ws.out("o"), &["--ci"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("--seed"));
    let o = Command::new(env!("CARGO_BIN_EXE_modinf"))
        .args(["simulate", "--config", cfg.to_str().unwrap(), "--out", ws.out("o").to_str().unwrap()])
        .env("CI", "true")
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(1));
    // Outside CI a timestamp seed is drawn and reported.
    let o = run("simulate", &cfg, &ws.out("o"), &[]);
    assert_eq!(o.status.code(), Some(0));
    assert!(stderr(&o).contains("seed = "));
}

#[test]
fn verify_mixture_on_two_state_chain() {
    let ws = Workspace::new();
    let cfg = ws.write("two.cfg", TWO_STATE);
    let out = ws.out("verify");
    let o = run("verify-mixture", &cfg, &out, &["--seed", "3"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let (header, body) = rows(&out.join("verify.csv"));
    assert_eq!(header, "replicas,tv_distance,chi_square,dof,p_value");
    let tv: f64 = body[0][1].parse().unwrap();
    assert!(tv <= 0.02, "TV {tv}");
    let (header, _) = rows(&out.join("pmf.csv"));
    assert_eq!(header, "count,direct,conditional");
}

#[test]
fn rate_row_inside_interval_is_zero() {
    let ws = Workspace::new();
    let cfg = ws.write("rate.cfg", "[rate]\nregime = unscaled\ninterval = [1, 2]\na = [-0.5, 0.5, 1.5, 3]\n");
    let out = ws.out("rate");
    let o = run("rate", &cfg, &out, &[]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let (header, body) = rows(&out.join("rate.csv"));
    assert_eq!(header, "a,I(a)");
    let interval = AttainableInterval::new(1.0, 2.0).unwrap();
    for row in &body {
        let a: f64 = row[0].parse().unwrap();
        let value: f64 = row[1].parse().unwrap();
        let expected = rate_i_unscaled(&interval, a);
        if expected.is_infinite() {
            assert_eq!(value, expected);
        } else {
            assert!((value - expected).abs() <= 1e-12 * expected.max(1.0));
        }
    }
    assert_eq!(body[2], ["1.5", "0"]);
    assert_eq!(body[0][1], "inf");
}

#[test]
fn attainable_unit_work_case() {
    let ws = Workspace::new();
    let cfg = ws.write("unit.cfg", UNIT_WORK);
    let out = ws.out("att");
    let o = run("attainable", &cfg, &out, &[]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let (header, body) = rows(&out.join("attainable.csv"));
    assert_eq!(header, "method,time_steps,r_steps,max_jumps,jump_grid,a_minus,a_plus,converged");
    let interval = body.iter().find(|r| r[0] == "interval").unwrap();
    let (lo, hi): (f64, f64) = (interval[5].parse().unwrap(), interval[6].parse().unwrap());
    assert!((lo - 0.632_121).abs() < 1e-3 && (hi - 1.264_241).abs() < 1e-3, "[{lo}, {hi}]");
    assert!(body.iter().any(|r| r[0] == "oracle"));
    assert!(body.iter().any(|r| r[7] == "true"));
}

#[test]
fn attainable_on_countable_space_reports_truncations() {
    let ws = Workspace::new();
    let cfg = ws.write(
        "mmis.cfg",
        "[queue]\nt = 1\nspace = nonneg-int\nlambda = affine 1 1\nkappa = constant 1\nmu = constant 1\n\
         [attainable]\nk0 = 4\ndoublings = 3\nm = 32\np = 257\n",
    );
    let out = ws.out("mmis");
    let o = run("attainable", &cfg, &out, &[]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let (header, body) = rows(&out.join("truncation.csv"));
    assert_eq!(header, "k,a_plus");
    assert_eq!(body.len(), 4);
    let (_, att) = rows(&out.join("attainable.csv"));
    assert_eq!(att.last().unwrap()[6], "inf");
}

#[test]
fn phi_output_round_trips() {
    let ws = Workspace::new();
    let space = StateSpace::indexed(2).unwrap();
    let path = StepPath::new(space, &[(0.0, 0.0), (0.3, 1.0), (0.71, 0.0)], 1.0).unwrap();
    ws.write("path.csv", &path.to_csv_string());
    let cfg = ws.write("phi.cfg", &format!("{TWO_STATE}\n[phi]\npath = path.csv\ngrid = linspace 0 1 11\n"));
    let out = ws.out("phi");
    let o = run("phi", &cfg, &out, &[]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let (_, m) = common::two_state_fixture();
    let (header, body) = rows(&out.join("phi.csv"));
    assert_eq!(header, "t,phi");
    assert_eq!(body.len(), 11);
    for row in body {
        let t: f64 = row[0].parse().unwrap();
        let value: f64 = row[1].parse().unwrap();
        let exact = phi(&path, &m, t).unwrap();
        assert!((value - exact).abs() <= 1e-12 * exact.max(1.0), "t = {t}: {value} vs {exact}");
    }
}

#[test]
fn unattainable_schilder_target_exits_with_two() {
    let ws = Workspace::new();
    let cfg = ws.write(
        "schilder.cfg",
        "[queue]\nt = 1\nspace = real\nlambda = ramp 1\nkappa = constant 1\nmu = constant 1\n\
         [schilder]\ntargets = [0.2, -0.5]\nm = [8, 16]\n",
    );
    let out = ws.out("s");
    let o = run("schilder", &cfg, &out, &[]);
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
    let (header, body) = rows(&out.join("schilder.csv"));
    assert_eq!(header, "target,m,value,residual");
    assert_eq!(body.iter().filter(|r| r[0] == "0.2").count(), 2);
    assert!(body.iter().any(|r| r[0] == "-0.5" && r[2] == "inf"));
    let (header, paths) = rows(&out.join("schilder_paths.csv"));
    assert_eq!(header, "target,m,s,f");
    assert_eq!(paths.len(), 9 + 17);
}

#[test]
fn simulate_is_identical_across_thread_counts() {
    let ws = Workspace::new();
    let cfg = ws.write("two.cfg", &format!("{TWO_STATE}\n[simulate]\nmode = direct\nreplicas = 5000\n"));
    let files: Vec<Vec<u8>> = [1, 3]
        .iter()
        .flat_map(|threads| {
            let out = ws.out(&format!("sim{threads}"));
            let o = run("simulate", &cfg, &out, &["--seed", "9", "--threads", &threads.to_string()]);
            assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
            ["replicas.csv", "pmf.csv"].map(|f| std::fs::read(out.join(f)).unwrap())
        })
        .collect();
    assert_eq!(files[0], files[2]);
    assert_eq!(files[1], files[3]);
}
