fn main() {
    std::process::exit(usdpc::cli::cli_main(std::env::args_os()));
}
