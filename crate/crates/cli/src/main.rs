use std::process::ExitCode;

fn main() -> ExitCode {
    ExitCode::from(stagewise_cli::run(std::env::args_os()))
}
