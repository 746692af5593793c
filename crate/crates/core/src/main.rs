fn main() {
    std::process::exit(progressive_nas::cli::main(std::env::args_os()));
}
