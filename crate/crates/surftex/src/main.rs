fn main() {
    std::process::exit(surftex::cli::main_entry());
}
