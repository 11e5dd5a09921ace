use clap::Parser;
use tracing_subscriber::EnvFilter;

fn main() {
    tracing_subscriber::fmt()
        .with_env_filter(EnvFilter::try_from_env("VIVA_LOG").unwrap_or_else(|_| EnvFilter::new("info")))
        .with_writer(std::io::stderr)
        .init();
    let cli = viva_cli::Cli::parse();
    let code = viva_cli::execute(cli, &mut std::io::stdin().lock(), &mut std::io::stdout(), &mut std::io::stderr());
    std::process::exit(code);
}
