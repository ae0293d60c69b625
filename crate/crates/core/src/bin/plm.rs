fn main() {
    let code = plm::cli::run_cli(std::env::args_os());
    plm::cli::flush();
    std::process::exit(code);
}
