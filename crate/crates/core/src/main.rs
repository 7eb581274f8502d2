fn main() {
    std::process::exit(lrp::cli::run(std::env::args_os()));
}
