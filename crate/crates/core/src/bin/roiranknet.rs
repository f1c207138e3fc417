fn main() {
    std::process::exit(roiranknet::cli::run(std::env::args_os()));
}
