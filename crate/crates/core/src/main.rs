fn main() {
    std::process::exit(symode::cli::run(std::env::args_os()));
}
