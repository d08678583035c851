fn main() {
    std::process::exit(circles_cli::run(std::env::args_os()));
}
