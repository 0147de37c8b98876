use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use toothlift_core::neural::gradcheck_suite;
use toothlift_core::pipeline::{
    prepare, run_batch, run_pipeline, stage_evaluate, stage_lift, stage_refine, stage_render,
    stage_segment, write_json, PipelineConfig,
};
use toothlift_core::synth::{synth_arch, synth_grid, ArchParams, GridParams};
use toothlift_core::{save_labels, save_mesh, FdiMap, Jaw, SegmenterKind};

#[derive(Parser)]
#[command(name = "toothlift", version, about = "Multi-view dental mesh segmentation")]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

/// Overrides applied on top of the config file (or the defaults).
#[derive(Args, Default)]
struct Common {
    /// Flat JSON config file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true)]
    views: Option<usize>,
    /// Square image size in pixels.
    #[arg(long, global = true)]
    size: Option<u32>,
    /// oracle | file:<dir> | noisy:<radius>,<rate>[,<seed>]
    #[arg(long, global = true)]
    segmenter: Option<SegmenterKind>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true)]
    jobs: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Rasterize the configured views into the output directory.
    Render(MeshArgs),
    /// Segment previously rendered views into label PNGs.
    Segment {
        #[command(flatten)]
        mesh: MeshArgs,
        /// Directory written by `render`.
        #[arg(long)]
        render: PathBuf,
    },
    /// Vote label PNGs back onto the mesh.
    Lift {
        #[command(flatten)]
        mesh: MeshArgs,
        #[arg(long)]
        render: PathBuf,
        /// Directory of `view_<id>_labels.png` files.
        #[arg(long)]
        seg: PathBuf,
    },
    /// Graph-cut refinement of a vote table.
    Refine {
        #[command(flatten)]
        mesh: MeshArgs,
        /// `votes.raw` written by `lift`.
        #[arg(long)]
        votes: PathBuf,
    },
    /// Score a predicted label file against ground truth.
    Evaluate {
        #[command(flatten)]
        mesh: MeshArgs,
        #[arg(long)]
        pred: PathBuf,
    },
    /// Full pipeline on one mesh, or on every mesh in a directory.
    Pipeline(MeshArgs),
    /// Finite-difference check of every differentiable op.
    Gradcheck {
        /// Corrupt one analytic gradient; the run must then fail.
        #[arg(long)]
        fault: bool,
    },
    /// Write a procedural test mesh and its labels.
    Synth {
        kind: SynthKind,
        /// Grid vertices per side.
        #[arg(long, default_value_t = GridParams::default().size)]
        grid_size: usize,
        /// Grid blocks per side.
        #[arg(long, default_value_t = GridParams::default().blocks)]
        blocks: usize,
    },
}

#[derive(Args)]
struct MeshArgs {
    /// Mesh file (.obj, .ply, .stl); a directory for batch `pipeline`.
    mesh: PathBuf,
    /// Per-vertex label JSON.
    #[arg(long)]
    labels: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum SynthKind {
    Arch,
    Grid,
}

impl Common {
    fn config(&self) -> Result<PipelineConfig> {
        let mut cfg = match &self.config {
            Some(p) => PipelineConfig::load(p)?,
            None => PipelineConfig::default(),
        };
        if let Some(v) = &self.out {
            cfg.out = v.clone();
        }
        if let Some(v) = self.views {
            cfg.views = v;
        }
        if let Some(v) = self.size {
            cfg.size = v;
        }
        if let Some(v) = &self.segmenter {
            cfg.segmenter = v.clone();
        }
        if let Some(v) = self.seed {
            cfg.seed = v;
        }
        if let Some(v) = self.jobs {
            cfg.jobs = v;
        }
        cfg.validate().context("invalid configuration")?;
        Ok(cfg)
    }
}

fn print_json<T: Serialize>(value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    match writeln!(std::io::stdout().lock(), "{text}") {
        Err(e) if e.kind() != std::io::ErrorKind::BrokenPipe => Err(e.into()),
        _ => Ok(()),
    }
}

/// The error chain, skipping causes whose text the outer message already carries.
fn describe(e: &anyhow::Error) -> String {
    let mut msg = String::new();
    for cause in e.chain() {
        let text = cause.to_string();
        if !msg.contains(&text) {
            if !msg.is_empty() {
                msg.push_str(": ");
            }
            msg.push_str(&text);
        }
    }
    msg
}

#[derive(Serialize)]
struct RefineSummary {
    initial_energy: f64,
    energy: f64,
    sweeps: usize,
}

fn run(cli: Cli) -> Result<ExitCode> {
    let cfg = cli.common.config()?;
    let out = cfg.out.clone();
    match cli.command {
        Command::Render(m) => {
            let p = prepare(&m.mesh, m.labels.as_deref(), &cfg)?;
            let views = stage_render(&p.mesh, &cfg, &out)?;
            log::info!("wrote {} views to {}", views.len(), out.display());
        }
        Command::Segment { mesh, render } => {
            let p = prepare(&mesh.mesh, mesh.labels.as_deref(), &cfg)?;
            let segs = stage_segment(&p.mesh, &cfg, &render, &out)?;
            log::info!("wrote {} label maps to {}", segs.len(), out.display());
        }
        Command::Lift { mesh, render, seg } => {
            let p = prepare(&mesh.mesh, mesh.labels.as_deref(), &cfg)?;
            stage_lift(&p, &cfg, &render, &seg, &out)?;
        }
        Command::Refine { mesh, votes } => {
            let p = prepare(&mesh.mesh, mesh.labels.as_deref(), &cfg)?;
            let r = stage_refine(&p, &cfg, &votes, &out)?;
            print_json(&RefineSummary {
                initial_energy: r.initial_energy,
                energy: r.energy,
                sweeps: r.sweeps,
            })?;
        }
        Command::Evaluate { mesh, pred } => {
            let Some(labels) = mesh.labels.as_deref() else {
                bail!("evaluate needs --labels with ground truth");
            };
            let p = prepare(&mesh.mesh, Some(labels), &cfg)?;
            let report = stage_evaluate(&p.mesh, &pred, &cfg)?;
            std::fs::create_dir_all(&out).with_context(|| format!("creating {}", out.display()))?;
            write_json(&out.join("metrics.json"), &report)?;
            print_json(&report)?;
        }
        Command::Pipeline(m) if m.mesh.is_dir() => return batch(&m.mesh, &cfg),
        Command::Pipeline(m) => {
            let outcome = run_pipeline(&m.mesh, m.labels.as_deref(), &cfg)?;
            match &outcome.metrics {
                Some(report) => print_json(report)?,
                None => log::info!("no ground truth; wrote labels to {}", out.display()),
            }
        }
        Command::Gradcheck { fault } => {
            let report = gradcheck_suite(cfg.seed, fault)?;
            std::fs::create_dir_all(&out).with_context(|| format!("creating {}", out.display()))?;
            write_json(&out.join("gradcheck.json"), &report)?;
            print_json(&report)?;
            if !report.passed {
                for e in report.entries.iter().filter(|e| !e.passed) {
                    eprintln!("gradcheck failed: {} / {} (max rel error {:.3e})", e.op, e.parameter, e.max_rel_error);
                }
                return Ok(ExitCode::FAILURE);
            }
        }
        Command::Synth { kind, grid_size, blocks } => {
            let (mesh, name) = match kind {
                SynthKind::Arch => (synth_arch(&ArchParams { seed: cfg.seed, ..ArchParams::default() })?, "arch"),
                SynthKind::Grid => (synth_grid(&GridParams { size: grid_size, blocks, seed: cfg.seed })?, "grid"),
            };
            std::fs::create_dir_all(&out).with_context(|| format!("creating {}", out.display()))?;
            let labels = mesh.require_labels()?;
            save_mesh(&out.join(format!("{name}.ply")), &mesh)?;
            save_labels(&out.join(format!("{name}.json")), labels, Jaw::Upper, &FdiMap::default())?;
            log::info!("wrote {name} with {} vertices to {}", mesh.vertex_count(), out.display());
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn batch(dir: &Path, cfg: &PipelineConfig) -> Result<ExitCode> {
    let items = run_batch(dir, cfg)?;
    if items.is_empty() {
        bail!("no meshes found in {}", dir.display());
    }
    let mut failed = 0;
    for item in &items {
        if let Err(e) = &item.outcome {
            eprintln!("error: {}: {e}", item.name);
            failed += 1;
        }
    }
    log::info!("{} of {} meshes succeeded", items.len() - failed, items.len());
    Ok(if failed == 0 { ExitCode::SUCCESS } else { ExitCode::FAILURE })
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("TOOTHLIFT_LOG", "warn")).init();
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {}", describe(&e));
            ExitCode::FAILURE
        }
    }
}
