fn main() {
    std::process::exit(ksctl::run_cli(std::env::args_os()));
}
