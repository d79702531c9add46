fn main() {
    std::process::exit(fdipole::cli::main());
}
