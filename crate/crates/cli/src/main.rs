fn main() {
    std::process::exit(volcast_cli::run(std::env::args_os()));
}
