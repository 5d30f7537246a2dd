fn main() {
    pairaug::cli::init_logging();
    std::process::exit(pairaug::cli::run_from(std::env::args_os()));
}
