use std::process::ExitCode;

fn main() -> ExitCode {
    ExitCode::from(capteam::cli::run(std::env::args_os()))
}
