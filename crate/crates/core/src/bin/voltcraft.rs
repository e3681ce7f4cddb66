fn main() {
    std::process::exit(voltcraft::cli::main_from(std::env::args_os()));
}
