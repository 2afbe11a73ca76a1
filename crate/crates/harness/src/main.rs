fn main() {
    std::process::exit(certmem::cli::run(std::env::args_os()));
}
