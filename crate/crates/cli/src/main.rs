fn main() {
    std::process::exit(tvls_cli::run(std::env::args_os()));
}
