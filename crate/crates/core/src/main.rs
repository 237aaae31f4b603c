fn main() {
    std::process::exit(finslerkit::cli::run(std::env::args_os()));
}
