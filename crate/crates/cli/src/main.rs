fn main() {
    std::process::exit(kitaev_cli::run(std::env::args_os()));
}
