fn main() {
    std::process::exit(inline_tomo::cli::run());
}
