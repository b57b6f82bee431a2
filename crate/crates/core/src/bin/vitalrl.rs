fn main() {
    std::process::exit(vitalrl::cli::main());
}
