fn main() {
    std::process::exit(stfrontier_cli::run(std::env::args_os()));
}
