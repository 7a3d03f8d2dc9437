fn main() {
    std::process::exit(mrn::cli::main_with_args(std::env::args_os()));
}
