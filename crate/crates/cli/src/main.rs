fn main() {
    std::process::exit(routhlab_cli::run_from_args(std::env::args_os()));
}
