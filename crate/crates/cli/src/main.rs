//! `pixtrack`: simulate scenes, track them, score results and render frames.

mod eval;
mod render;
mod simulate;
mod track;

use std::process::ExitCode;

use clap::{Parser, Subcommand};

#[derive(Debug, Parser)]
#[command(name = "pixtrack", version, about = "Pixel-wise multi-object tracking")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a synthetic scene directory.
    Simulate(simulate::Args),
    /// Track a scene and write MOTChallenge result rows.
    Track(track::Args),
    /// Score result files against ground truth.
    Eval(eval::Args),
    /// Draw heatmaps and boxes into PPM images.
    Render(render::Args),
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Simulate(a) => simulate::run(a),
        Command::Track(a) => track::run(a),
        Command::Eval(a) => eval::run(a),
        Command::Render(a) => render::run(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            // library errors already embed their cause in the message
            let mut msg = e.to_string();
            for cause in e.chain().skip(1) {
                let c = cause.to_string();
                if !msg.contains(&c) {
                    msg = format!("{msg}: {c}");
                }
            }
            eprintln!("error: {msg}");
            ExitCode::FAILURE
        }
    }
}
