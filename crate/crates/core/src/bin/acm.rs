fn main() -> std::process::ExitCode {
    acm::cli::main_with_args(std::env::args_os())
}
