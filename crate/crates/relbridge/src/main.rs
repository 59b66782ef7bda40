fn main() {
    std::process::exit(relbridge::cli::main_entry());
}
