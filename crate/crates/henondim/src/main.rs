fn main() {
    std::process::exit(henondim::cli::run(std::env::args().collect()));
}
