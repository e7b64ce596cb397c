fn main() {
    std::process::exit(fns::run_cli(std::env::args_os()));
}
