fn main() {
    std::process::exit(dit_lab::cli::run(std::env::args_os()));
}
