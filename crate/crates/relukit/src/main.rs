use std::process::ExitCode;

fn main() -> ExitCode {
    ExitCode::from(relukit::cli::run(std::env::args()) as u8)
}
