fn main() {
    std::process::exit(photonpair::cli::run());
}
