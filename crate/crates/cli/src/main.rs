use clap::Parser;

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = promptlab_cli::Cli::parse();
    match promptlab_cli::run(&cli) {
        Ok(summary) => println!("{summary}"),
        Err(e) => {
            eprintln!("promptlab: {e}");
            std::process::exit(e.exit_code());
        }
    }
}
