fn main() {
    std::process::exit(mechlearn::cli::main_with_args(std::env::args_os()));
}
