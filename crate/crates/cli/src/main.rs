fn main() {
    std::process::exit(dtnlab_cli::run(std::env::args_os()));
}
