fn main() {
    std::process::exit(profit_harness::cli::main_with_args(std::env::args_os()));
}
