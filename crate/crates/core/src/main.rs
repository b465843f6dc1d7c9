fn main() {
    std::process::exit(tnet::cli::main_with_args(std::env::args_os()));
}
