fn main() {
    std::process::exit(lanetopo::cli::run(std::env::args_os()));
}
