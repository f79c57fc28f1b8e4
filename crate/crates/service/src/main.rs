use clap::error::ErrorKind;
use clap::Parser;
use stepwise_service::{run, Cli, CliError};

#[tokio::main]
async fn main() {
    tracing_subscriber::fmt()
        .with_env_filter(
            tracing_subscriber::EnvFilter::try_from_default_env()
                .unwrap_or_else(|_| tracing_subscriber::EnvFilter::new("info")),
        )
        .with_writer(std::io::stderr)
        .init();

    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) => e.exit(),
        Err(e) => fail(CliError::input("usage", e.kind().to_string() + ": " + first_line(&e.to_string()))),
    };
    if let Err(e) = run(cli).await {
        fail(e);
    }
}

fn first_line(s: &str) -> &str {
    s.lines().next().unwrap_or("").trim_start_matches("error: ")
}

fn fail(e: CliError) -> ! {
    eprintln!("{}", e.to_json_line());
    std::process::exit(e.exit)
}
