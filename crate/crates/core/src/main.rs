fn main() {
    std::process::exit(svae::cli::run());
}
