fn main() {
    std::process::exit(heval::cli::run(std::env::args_os()));
}
