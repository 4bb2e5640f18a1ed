fn main() {
    std::process::exit(homodyne_bell::cli::run(std::env::args_os()));
}
