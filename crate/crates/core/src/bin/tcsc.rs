fn main() {
    std::process::exit(tcsc::harness::cli::run(std::env::args_os()));
}
