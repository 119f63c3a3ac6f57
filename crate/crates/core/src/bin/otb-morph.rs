use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use otb_morph::error::{Error, Result};
use otb_morph::evaluation::OperatingPointName;
use otb_morph::experiment::{run_attack, run_demo, run_evaluate, run_simulate, ExperimentConfig, Layout};
use otb_morph::image::FaceImage;
use otb_morph::landmarks::LandmarkSet;
use otb_morph::morph::{morph_detailed, MorphParams};

#[derive(Parser, Debug)]
#[command(name = "otb-morph", version, about = "Time-varying morph-based cancelable biometrics simulator")]
struct Cli {
    /// Experiment configuration (TOML). Defaults apply when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the master seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Overrides the output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads (0 uses every core).
    #[arg(long, global = true, default_value_t = 0)]
    jobs: usize,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Morph face A toward face B and write the result.
    Morph {
        face_a: PathBuf,
        landmarks_a: PathBuf,
        face_b: PathBuf,
        landmarks_b: PathBuf,
        #[arg(long, default_value_t = 0.5)]
        alpha: f64,
        /// Output image; defaults to `morph.pgm` under `--out`.
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Calibrate thresholds and simulate enrollment plus verification sessions.
    Simulate,
    /// Run the hill-climbing attack campaign.
    Attack,
    /// Build the report from existing score and trace artifacts.
    Evaluate,
    /// Walk through enrollment, rotation, replay and impostor sessions on the
    /// sample world.
    Demo,
    /// Print the effective configuration.
    Config,
}

fn load_config(cli: &Cli, fallback: ExperimentConfig) -> Result<ExperimentConfig> {
    let mut cfg = match &cli.config {
        Some(path) => ExperimentConfig::load(path)?,
        None => fallback,
    };
    if let Some(seed) = cli.seed {
        cfg.master_seed = seed;
    }
    if let Some(out) = &cli.out {
        cfg.out_dir = out.clone();
    }
    cfg.validate()?;
    Ok(cfg)
}

fn cmd_morph(
    a: &Path,
    la: &Path,
    b: &Path,
    lb: &Path,
    alpha: f64,
    output: &Path,
) -> Result<()> {
    let (img_a, img_b) = (FaceImage::read_pnm(a)?, FaceImage::read_pnm(b)?);
    let (lm_a, lm_b) = (LandmarkSet::read(la)?, LandmarkSet::read(lb)?);
    let out = morph_detailed(&img_a, &lm_a, &img_b, &lm_b, &MorphParams::with_alpha(alpha)?)?;
    if let Some(dir) = output.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    out.image.write_pnm(output)?;
    let d = &out.diagnostics;
    println!(
        "wrote {} triangles={} degenerate_triangles={} uncovered_pixels={} clamp_events={}",
        output.display(),
        out.triangulation.triangles.len(),
        d.degenerate_triangles,
        d.uncovered_pixels,
        d.clamp_events
    );
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    if cli.jobs > 0 {
        // Fails only if a pool was already installed, which cannot happen here.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(cli.jobs).build_global();
    }
    match &cli.command {
        Command::Morph {
            face_a,
            landmarks_a,
            face_b,
            landmarks_b,
            alpha,
            output,
        } => {
            let output = output
                .clone()
                .unwrap_or_else(|| cli.out.clone().unwrap_or_else(|| PathBuf::from(".")).join("morph.pgm"));
            cmd_morph(face_a, landmarks_a, face_b, landmarks_b, *alpha, &output)
        }
        Command::Simulate => {
            let cfg = load_config(&cli, ExperimentConfig::default())?;
            let world = cfg.build_world()?;
            let summary = run_simulate(&cfg, &world, &Layout::new(&cfg.out_dir))?;
            for (s, t) in &summary.thresholds {
                let g = &summary.genuine[s];
                let a = &summary.attacker[s];
                println!(
                    "scenario {s}: threshold {t:.6}; genuine {}/{} accepted, {} rotations; attacker {}/{} accepted; {} errors",
                    g.accepts,
                    g.sessions,
                    g.rotations + a.rotations,
                    a.accepts,
                    a.sessions,
                    g.errors + a.errors
                );
            }
            match summary.errors() {
                0 => Ok(()),
                n => Err(Error::ProtocolState(format!(
                    "{n} sessions ended with an error; see the transcripts under {}",
                    cfg.out_dir.display()
                ))),
            }
        }
        Command::Attack => {
            let cfg = load_config(&cli, ExperimentConfig::default())?;
            let world = cfg.build_world()?;
            let traces = run_attack(&cfg, &world, &Layout::new(&cfg.out_dir))?;
            for (s, ts) in &traces {
                let hits = ts
                    .iter()
                    .filter(|t| t.success_at.contains_key(&OperatingPointName::Eer))
                    .count();
                println!("scenario {s}: {} traces, {hits} below the EER threshold", ts.len());
            }
            Ok(())
        }
        Command::Evaluate => {
            let cfg = load_config(&cli, ExperimentConfig::default())?;
            let layout = Layout::new(&cfg.out_dir);
            let outcome = run_evaluate(&cfg, &layout)?;
            for m in &outcome.missing {
                eprintln!("WARN missing-input: {}", m.display());
            }
            println!("wrote {}", layout.report_dir().display());
            Ok(())
        }
        Command::Demo => {
            let cfg = load_config(&cli, ExperimentConfig::sample())?;
            let world = cfg.build_world()?;
            for line in run_demo(&cfg, &world, &Layout::new(&cfg.out_dir))? {
                println!("{line}");
            }
            Ok(())
        }
        Command::Config => {
            let cfg = load_config(&cli, ExperimentConfig::default())?;
            print!("{}", cfg.to_toml());
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            // --help and --version
            print!("{e}");
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let msg = e.to_string();
            let first = msg.lines().next().unwrap_or("invalid arguments");
            eprintln!("ERROR usage: {}", first.trim_start_matches("error: "));
            return ExitCode::from(2);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("ERROR {}: {}", e.kind(), e.to_string().replace('\n', " "));
            ExitCode::FAILURE
        }
    }
}
