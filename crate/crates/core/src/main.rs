fn main() {
    std::process::exit(dlac::cli::run(std::env::args_os()));
}
