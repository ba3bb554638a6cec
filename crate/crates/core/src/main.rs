fn main() {
    std::process::exit(align_forge::cli::run(std::env::args_os()));
}
