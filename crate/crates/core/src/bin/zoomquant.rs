fn main() {
    std::process::exit(zoomquant::cli::run_cli(std::env::args_os()));
}
