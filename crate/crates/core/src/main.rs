fn main() {
    std::process::exit(invariant_tt::cli::main_with_args(std::env::args_os()));
}
