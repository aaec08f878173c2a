use std::io::Write;
use std::process::ExitCode;

fn main() -> ExitCode {
    let out = esmc2::cli::run_cli(std::env::args_os());
    print!("{}", out.stdout);
    eprint!("{}", out.stderr);
    let _ = std::io::stdout().flush();
    ExitCode::from(out.code.clamp(0, 255) as u8)
}
