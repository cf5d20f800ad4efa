fn main() {
    std::process::exit(hypou::cli::run(std::env::args_os()));
}
