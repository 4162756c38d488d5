use clap::Parser;
use pulsestream_cli::{run, Cli};

fn main() {
    let cli = Cli::parse();
    env_logger::Builder::new().parse_filters(&cli.log).parse_default_env().init();
    if let Err(e) = run(cli) {
        eprintln!("error: {e}");
        std::process::exit(e.exit_code());
    }
}
