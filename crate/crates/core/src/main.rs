fn main() {
    std::process::exit(fairgt::cli::run(std::env::args_os()));
}
