fn main() {
    let code = match streamskip_cli::main_with_args(std::env::args_os()) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("streamskip: {e}");
            e.exit_code()
        }
    };
    std::process::exit(code);
}
