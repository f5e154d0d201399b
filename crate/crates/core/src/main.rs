fn main() {
    std::process::exit(forgeguard::cli::main());
}
