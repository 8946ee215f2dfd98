fn main() {
    std::process::exit(edgegat::cli::run(std::env::args_os()));
}
