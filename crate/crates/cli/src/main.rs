fn main() {
    std::process::exit(cpoverlap_cli::run(std::env::args_os()));
}
