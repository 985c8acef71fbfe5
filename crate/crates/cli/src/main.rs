use std::process::ExitCode;

mod commands;
mod manifest;
mod opts;
mod report;

const USAGE: &str = "\
fusemot — synthetic multi-object tracking pipeline

Usage:
  fusemot simulate [--config <path>] [--seed <int>] [--out <dir>]
      Generate ground truth (gt.txt) and corrupted detections (det.txt).

  fusemot track <det.txt> [--config <path>] [--emit-coasted] [--out <dir>]
      Run the hierarchical tracker over a detection file -> results.txt.

  fusemot evaluate <gt.txt> <results.txt> [--iou-threshold <real>] [--out <dir>]
      Score results against ground truth -> metrics.txt / metrics.csv.

  fusemot fuse-stats [<rgb.params> <thermal.params>] [--config <path>]
                     [--seed <int>] [--out <dir>]
      Fuse and refine a modality pair (synthesized when no files are given),
      reporting feature statistics -> stats.txt / stats.csv, fused.params,
      enhanced.params.

Flags:
  --config <path>        key = value configuration file
  --seed <int>           override the config seed
  --out <dir>            output directory (default '.')
  --iou-threshold <real> evaluation match threshold (default 0.5)
  --emit-coasted         include coasted (unconfirmed) boxes in results

Every run writes a manifest.txt beside its outputs. Identical inputs,
config, and seed produce byte-identical outputs.
";

fn main() -> ExitCode {
    let args: Vec<String> = std::env::args().skip(1).collect();
    match run(&args) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn run(args: &[String]) -> anyhow::Result<()> {
    let Some(cmd) = args.first() else {
        eprint!("{USAGE}");
        anyhow::bail!("no command given");
    };
    match cmd.as_str() {
        "simulate" => commands::simulate(&args[1..]),
        "track" => commands::track(&args[1..]),
        "evaluate" => commands::evaluate(&args[1..]),
        "fuse-stats" => commands::fuse_stats(&args[1..]),
        "help" | "--help" | "-h" => {
            print!("{USAGE}");
            Ok(())
        }
        other => anyhow::bail!("unknown command '{other}' (try 'fusemot help')"),
    }
}
