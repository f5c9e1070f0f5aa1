use clap::Parser;
use filtergen_cli::commands::{dispatch, Cli};
use filtergen_cli::CliError;

fn run(cli: &Cli) -> anyhow::Result<()> {
    dispatch(cli)?;
    Ok(())
}

fn main() {
    let cli = Cli::parse();
    if let Err(e) = run(&cli) {
        eprintln!("error: {e}");
        let code = e.downcast_ref::<CliError>().map_or(1, CliError::exit_code);
        std::process::exit(code);
    }
}
