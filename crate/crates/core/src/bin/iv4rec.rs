fn main() {
    std::process::exit(iv4rec::cli::main());
}
