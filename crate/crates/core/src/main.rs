fn main() {
    std::process::exit(entropy_lab_core::cli::main_with_args(std::env::args_os()));
}
