fn main() {
    let code = tertium::cli::main(std::env::args_os());
    std::process::exit(code);
}
