fn main() {
    env_logger::init();
    std::process::exit(sparse360::cli::run_from(std::env::args_os()));
}
