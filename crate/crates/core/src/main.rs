fn main() {
    std::process::exit(nvmlens::cli::run(std::env::args_os()));
}
