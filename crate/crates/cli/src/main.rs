fn main() {
    std::process::exit(plasmo_cli::run(std::env::args_os()));
}
