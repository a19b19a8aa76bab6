fn main() {
    std::process::exit(decision_drive::cli::run(std::env::args_os()));
}
