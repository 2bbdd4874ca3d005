fn main() {
    let code = match std::panic::catch_unwind(gapmon::cli::main) {
        Ok(code) => code,
        Err(_) => {
            eprintln!("gapmon: internal error");
            5
        }
    };
    std::process::exit(code);
}
