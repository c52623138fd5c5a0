fn main() {
    std::process::exit(switched_iss::cli::run(std::env::args_os()));
}
