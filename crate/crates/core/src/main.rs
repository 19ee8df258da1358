fn main() {
    std::process::exit(adaptft::cli::run(std::env::args().collect()));
}
