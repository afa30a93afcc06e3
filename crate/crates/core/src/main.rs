fn main() {
    std::process::exit(martest::cli::run());
}
