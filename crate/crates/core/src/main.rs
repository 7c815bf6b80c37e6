fn main() {
    std::process::exit(pourseq::cli::run(std::env::args_os()));
}
