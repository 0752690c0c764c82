fn main() {
    std::process::exit(tq::cli::run_command(std::env::args_os()));
}
