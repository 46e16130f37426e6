use std::process::ExitCode;

use ccbart::cli;

fn main() -> ExitCode {
    let matches = cli::command().get_matches();
    match cli::invocation_from_matches(&matches).and_then(|inv| cli::execute(&inv)) {
        Ok(dir) => {
            println!("{}", dir.display());
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(cli::exit_code(&e) as u8)
        }
    }
}
