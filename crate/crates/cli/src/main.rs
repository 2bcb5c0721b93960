fn main() {
    std::process::exit(glr_cli::run(std::env::args_os()));
}
