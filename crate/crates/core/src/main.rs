fn main() {
    std::process::exit(twinfock::cli::parse_and_dispatch(std::env::args()));
}
