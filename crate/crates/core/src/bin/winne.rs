fn main() {
    std::process::exit(winne::cli::run_from(std::env::args_os()));
}
