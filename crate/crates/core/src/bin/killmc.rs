fn main() {
    std::process::exit(killmc::cli::run(std::env::args_os()));
}
