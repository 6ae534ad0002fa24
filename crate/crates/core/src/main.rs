fn main() {
    std::process::exit(wireshape::cli::main_with_args(std::env::args_os()));
}
