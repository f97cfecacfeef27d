fn main() {
    std::process::exit(advsmo::cli::run(std::env::args_os()));
}
