fn main() {
    std::process::exit(dipfill::cli::cli_main(std::env::args_os()));
}
