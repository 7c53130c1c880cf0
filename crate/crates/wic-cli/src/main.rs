fn main() {
    std::process::exit(wic_cli::run(std::env::args_os()));
}
