fn main() {
    std::process::exit(pdwg::cli::main_with(std::env::args_os()));
}
