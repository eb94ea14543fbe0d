fn main() {
    std::process::exit(opcm::cli::run(std::env::args_os()));
}
