fn main() {
    std::process::exit(carsfit::cli::main_with_args(std::env::args_os()));
}
