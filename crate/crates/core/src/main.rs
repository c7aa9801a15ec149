fn main() {
    std::process::exit(ssf::cli::main_with_args(std::env::args_os()));
}
