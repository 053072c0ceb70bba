fn main() {
    std::process::exit(tofnav::cli::run(std::env::args_os()));
}
