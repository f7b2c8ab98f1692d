fn main() {
    std::process::exit(dyncgan::cli::run(std::env::args_os()));
}
