use std::process::ExitCode;

fn main() -> ExitCode {
    gemmas::cli::run()
}
