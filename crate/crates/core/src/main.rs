fn main() {
    std::process::exit(nscurve::cli::run(std::env::args_os()));
}
