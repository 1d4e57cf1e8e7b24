//! Thin binary entry point: parse flags, set up logging, dispatch to the
//! library, and map outcomes to exit codes (0 success, 1 usage error,
//! 2 runtime error; `--help`/`--version` exit 0).

use clap::Parser;
use consilium::cli::{self, Cli};

fn main() {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = e.print();
            std::process::exit(code);
        }
    };
    init_logging(&cli.log);
    let runtime = tokio::runtime::Builder::new_multi_thread()
        .enable_all()
        .build()
        .expect("failed to start async runtime");
    if let Err(e) = runtime.block_on(cli::execute(cli)) {
        eprintln!("error: {e}");
        std::process::exit(2);
    }
}

/// `RUST_LOG` wins over `--log` so operators can raise verbosity without
/// touching saved command lines. Logs go to stderr; stdout stays reserved
/// for machine-readable command output.
fn init_logging(filter: &str) {
    use tracing_subscriber::EnvFilter;
    let filter = EnvFilter::try_from_default_env()
        .or_else(|_| EnvFilter::try_new(filter))
        .unwrap_or_else(|_| EnvFilter::new("warn"));
    let _ = tracing_subscriber::fmt()
        .with_env_filter(filter)
        .with_writer(std::io::stderr)
        .try_init();
}
