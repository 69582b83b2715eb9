use std::process::ExitCode;

use fcs_entangle::cli;

fn main() -> ExitCode {
    if let Some(n) = cli::configured_threads() {
        // ignored if a global pool already exists
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    let stdout = std::io::stdout();
    let stderr = std::io::stderr();
    let code = cli::run(std::env::args_os(), &mut stdout.lock(), &mut stderr.lock());
    ExitCode::from(code as u8)
}
