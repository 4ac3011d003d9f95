fn main() {
    std::process::exit(metapct::cli::run(std::env::args_os()));
}
