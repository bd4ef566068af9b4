use std::process::ExitCode;

fn main() -> ExitCode {
    ExitCode::from(perspect_cli::run(std::env::args()) as u8)
}
