use std::io::Write;
use std::process::ExitCode;

fn main() -> ExitCode {
    let result = evaltk::cli::run(std::env::args_os());
    if !result.stdout.is_empty() {
        let mut out = std::io::stdout().lock();
        if out.write_all(result.stdout.as_bytes()).is_err() {
            return ExitCode::from(3);
        }
    }
    if !result.stderr.is_empty() {
        eprint!("{}", result.stderr);
        if let Ok(payload) = serde_json::to_string(&result.payload) {
            println!("{payload}");
        }
    }
    ExitCode::from(result.exit_code as u8)
}
