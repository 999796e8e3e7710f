fn main() {
    std::process::exit(stlrl::cli::run(std::env::args_os()));
}
