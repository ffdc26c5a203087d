fn main() {
    std::process::exit(samoe::cli::main_with_args(std::env::args_os()));
}
