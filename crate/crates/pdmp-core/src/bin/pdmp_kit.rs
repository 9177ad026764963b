fn main() {
    std::process::exit(pdmp_core::cli::run(std::env::args_os()));
}
