fn main() {
    std::process::exit(advstrings::cli::main_entry());
}
