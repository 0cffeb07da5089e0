use std::process::ExitCode;

fn main() -> ExitCode {
    match sdwatch_cli::run() {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            // single-line machine-parsable error
            eprintln!("ERROR: {err:#}");
            ExitCode::FAILURE
        }
    }
}
