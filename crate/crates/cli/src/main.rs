fn main() {
    std::process::exit(poisint_cli::run(std::env::args_os()));
}
