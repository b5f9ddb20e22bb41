fn main() {
    std::process::exit(fame::cli::run(std::env::args_os()));
}
