fn main() {
    std::process::exit(bifrank::cli::main());
}
