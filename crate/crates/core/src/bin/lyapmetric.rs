fn main() {
    std::process::exit(lyapmetric::cli::main_with_args(std::env::args_os()));
}
