fn main() {
    std::process::exit(twophase::cli::main_with_args(std::env::args_os()));
}
