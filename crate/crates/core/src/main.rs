fn main() {
    std::process::exit(multiphoton::cli::main());
}
