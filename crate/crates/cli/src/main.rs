fn main() {
    std::process::exit(pcst_cli::run(std::env::args_os()));
}
