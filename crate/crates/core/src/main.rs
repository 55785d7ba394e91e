fn main() {
    std::process::exit(mwclust::cli::main());
}
