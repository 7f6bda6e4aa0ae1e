fn main() {
    std::process::exit(scis::cli::cli_main(std::env::args_os()));
}
