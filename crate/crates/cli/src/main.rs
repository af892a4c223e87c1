fn main() {
    std::process::exit(mrsim::run_cli(std::env::args_os()));
}
