use std::process::ExitCode;

fn main() -> ExitCode {
    ExitCode::from(nldiff::cli::run() as u8)
}
