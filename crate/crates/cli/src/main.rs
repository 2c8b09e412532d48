use std::net::{IpAddr, SocketAddr};
use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Duration;

use clap::{Parser, Subcommand};

use mist_cli::commands::{run_eval, run_marker, run_segment, EngineArgs, EvalArgs, MarkerArgs, SegmentArgs};
use mist_cli::server::{serve, ServiceConfig};

#[derive(Parser)]
#[command(
    name = "mist",
    version,
    about = "Morphological marker plus iterative graph-cut segmentation"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Compute the automatic marker of an image.
    Marker(MarkerArgs),
    /// Segment an image inside a box, optionally with scribbles.
    Segment(SegmentArgs),
    /// Score methods over a corpus manifest.
    Eval(EvalArgs),
    /// Run the HTTP session service.
    Serve(ServeArgs),
}

#[derive(clap::Args)]
struct ServeArgs {
    #[arg(long, env = "MIST_PORT", default_value_t = 8080)]
    port: u16,
    #[arg(long, default_value = "127.0.0.1")]
    bind: IpAddr,
    /// Idle session lifetime in seconds.
    #[arg(long, default_value_t = 3600)]
    ttl: u64,
    /// Largest accepted image side in pixels.
    #[arg(long, default_value_t = 4096)]
    max_dim: usize,
    /// Persist sessions here and reload them on start.
    #[arg(long)]
    state_dir: Option<PathBuf>,
    #[command(flatten)]
    engine: EngineArgs,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Marker(args) => run_marker(&args).map(|_| ()),
        Command::Segment(args) => run_segment(&args).map(|(session, mask)| {
            println!(
                "{} foreground pixels after {} iteration(s)",
                mask.count(),
                session.iterations_run()
            );
        }),
        Command::Eval(args) => run_eval(&args).map(|(report, paths)| {
            for a in report.aggregates() {
                println!(
                    "{}: mean dice {} over {} row(s), {} error(s)",
                    a.method,
                    a.mean_dice.map_or("-".into(), |d| format!("{d:.4}")),
                    a.rows,
                    a.errors
                );
            }
            println!("errors: {}", report.error_count());
            for p in paths {
                println!("wrote {}", p.display());
            }
        }),
        Command::Serve(args) => {
            let cfg = ServiceConfig {
                ttl: Duration::from_secs(args.ttl),
                max_dim: args.max_dim,
                state_dir: args.state_dir,
                defaults: args.engine.config(),
            };
            let runtime = tokio::runtime::Runtime::new().expect("tokio runtime");
            return match runtime.block_on(serve(cfg, SocketAddr::new(args.bind, args.port))) {
                Ok(()) => ExitCode::SUCCESS,
                Err(e) => {
                    eprintln!("mist: {e}");
                    ExitCode::from(2)
                }
            };
        }
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("mist: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
