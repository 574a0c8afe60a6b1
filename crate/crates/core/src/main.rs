use std::process::ExitCode;

fn main() -> ExitCode {
    let argv: Vec<String> = std::env::args().skip(1).collect();
    let mut stdout = std::io::stdout().lock();
    match mock_theta::cli::parse(&argv) {
        Ok(cmd) => ExitCode::from(mock_theta::cli::execute(cmd, &mut stdout) as u8),
        Err(e) => {
            eprintln!("{e}");
            eprintln!();
            eprintln!("{}", mock_theta::cli::USAGE);
            ExitCode::from(2)
        }
    }
}
