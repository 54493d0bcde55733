fn main() {
    std::process::exit(freqreg::cli::run(std::env::args_os()));
}
