fn main() {
    std::process::exit(graphmc::cli::main());
}
