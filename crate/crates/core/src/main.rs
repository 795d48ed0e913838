fn main() {
    std::process::exit(nmpl::cli::run(std::env::args_os()));
}
