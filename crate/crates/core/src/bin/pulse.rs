fn main() {
    std::process::exit(pulse::cli::main_exit_code());
}
