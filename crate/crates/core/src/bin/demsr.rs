fn main() {
    std::process::exit(demsr::cli::run(std::env::args_os()));
}
