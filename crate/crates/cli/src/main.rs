use clap::Parser;

fn main() {
    if let Err(e) = snd_cli::run(snd_cli::Cli::parse()) {
        eprintln!("error: {e:#}");
        std::process::exit(1);
    }
}
