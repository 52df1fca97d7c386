fn main() {
    std::process::exit(svplab_cli::run(std::env::args_os()));
}
