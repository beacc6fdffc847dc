fn main() {
    std::process::exit(lightning_opd::cli::run(std::env::args_os()));
}
