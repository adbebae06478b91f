fn main() {
    std::process::exit(smn_cli::run(std::env::args_os()));
}
