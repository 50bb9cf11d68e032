fn main() {
    std::process::exit(devpanel::cli::run_cli(std::env::args_os()));
}
