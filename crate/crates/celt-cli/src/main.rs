fn main() {
    std::process::exit(celt_cli::run(std::env::args_os()));
}
