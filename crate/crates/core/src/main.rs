fn main() { std::process::exit(modinf::cli::main_with_args(std::env::args_os())); }
