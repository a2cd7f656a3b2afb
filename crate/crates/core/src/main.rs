fn main() {
    std::process::exit(trs_oden::cli::run(std::env::args().skip(1)));
}
