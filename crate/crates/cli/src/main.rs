fn main() {
    std::process::exit(bnmf_cli::run(std::env::args_os()));
}
