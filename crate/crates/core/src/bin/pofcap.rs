fn main() {
    std::process::exit(pofcap::cli::run(std::env::args_os()));
}
