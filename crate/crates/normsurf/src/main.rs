fn main() {
    std::process::exit(normsurf::cli::main_with_args(std::env::args_os()));
}
