fn main() {
    std::process::exit(sliced_steering::cli::main_with_args(std::env::args_os()));
}
