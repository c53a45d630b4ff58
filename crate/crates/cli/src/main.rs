fn main() {
    std::process::exit(gompertz_cli::run(std::env::args_os()));
}
