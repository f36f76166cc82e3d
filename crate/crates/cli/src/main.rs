fn main() {
    std::process::exit(geovortex_cli::run(std::env::args_os()));
}
