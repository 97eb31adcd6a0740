fn main() {
    std::process::exit(iiclab::cli::main_with(std::env::args_os()));
}
