fn main() {
    std::process::exit(hsiseg_cli::run(std::env::args_os()));
}
