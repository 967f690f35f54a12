fn main() {
    std::process::exit(obbfuse_cli::run(std::env::args_os()));
}
