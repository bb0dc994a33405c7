fn main() {
    std::process::exit(bimclass::cli::run(std::env::args_os()));
}
