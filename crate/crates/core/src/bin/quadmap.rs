fn main() {
    std::process::exit(quadmap::cli::run(std::env::args_os()));
}
