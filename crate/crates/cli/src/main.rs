fn main() {
    std::process::exit(mzr_cli::run_cli(std::env::args_os()));
}
