use clap::Parser;

use capsule_cli::{run, Cli};

fn main() {
    let cli = Cli::parse();
    let stdout = std::io::stdout();
    if let Err(e) = run(&cli, &mut stdout.lock()) {
        eprintln!("capsim: {e}");
        std::process::exit(e.exit_code());
    }
}
