fn main() {
    std::process::exit(kbtext::cli::run(std::env::args_os()));
}
