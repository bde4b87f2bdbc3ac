fn main() {
    std::process::exit(resilience_cli::run(std::env::args_os()));
}
