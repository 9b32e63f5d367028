fn main() {
    if let Err(e) = underlap::cli::main_with_args(std::env::args_os()) {
        eprintln!("error: {e}");
        std::process::exit(1);
    }
}
