fn main() -> std::process::ExitCode {
    mwlab::cli::run(std::env::args_os())
}
