fn main() {
    std::process::exit(dwl::cli::run_from(std::env::args_os()));
}
