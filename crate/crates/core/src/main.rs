fn main() -> std::process::ExitCode {
    tranquil::cli::main_with_args(std::env::args_os())
}
