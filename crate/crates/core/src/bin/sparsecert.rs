fn main() {
    std::process::exit(sparsecert::cli::run(std::env::args_os()));
}
