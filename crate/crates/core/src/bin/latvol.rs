fn main() {
    std::process::exit(latvol::cli::main_with_args(std::env::args_os()));
}
