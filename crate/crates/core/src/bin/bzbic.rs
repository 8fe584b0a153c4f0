fn main() {
    std::process::exit(bzbic::cli::run_from_args(std::env::args_os()));
}
