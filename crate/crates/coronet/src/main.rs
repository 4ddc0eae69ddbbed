fn main() {
    std::process::exit(coronet::cli::run(std::env::args()));
}
