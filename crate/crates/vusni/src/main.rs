fn main() {
    std::process::exit(vusni::cli::run(std::env::args_os()));
}
