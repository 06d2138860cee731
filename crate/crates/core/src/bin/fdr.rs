fn main() {
    std::process::exit(fdr::cli::run(std::env::args_os()));
}
