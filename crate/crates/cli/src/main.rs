fn main() {
    std::process::exit(curate_cli::run(std::env::args_os()));
}
