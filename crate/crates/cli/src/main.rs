fn main() {
    std::process::exit(fcert_cli::main_with_os_args());
}
