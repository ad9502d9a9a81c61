fn main() {
    cartan_kak::cli::init_logging();
    let code = cartan_kak::cli::main_with(std::env::args_os(), &mut std::io::stdout(), &mut std::io::stderr());
    std::process::exit(code);
}
