fn main() {
    std::process::exit(riskmin_cli::run_cli(std::env::args_os()));
}
