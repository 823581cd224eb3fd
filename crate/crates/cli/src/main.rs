fn main() {
    std::process::exit(filtersafe_cli::run(std::env::args_os()));
}
