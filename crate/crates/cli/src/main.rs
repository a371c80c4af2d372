fn main() {
    std::process::exit(evcon_cli::run_cli(std::env::args_os()));
}
