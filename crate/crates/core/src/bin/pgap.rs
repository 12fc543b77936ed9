use std::io::{stderr, stdout};
use std::process::ExitCode;

fn main() -> ExitCode {
    // PGAP_THREADS sizes the worker pool; output does not depend on it.
    if let Some(n) = std::env::var("PGAP_THREADS").ok().and_then(|v| v.parse::<usize>().ok()) {
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    let code = pgap::cli::run(std::env::args_os(), &mut stdout().lock(), &mut stderr().lock());
    ExitCode::from(code as u8)
}
