fn main() {
    std::process::exit(inblock::cli::run());
}
