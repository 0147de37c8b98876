//! End-to-end orchestration and the file-based stages it is composed of.
//!
//! Stage directories under the output root:
//! - `render/`: views, visibility buffers and `cameras.json`
//! - `segment/`: `view_<id>_labels.png`
//! - `lift/`: `votes.raw` (+ sidecar) and `lifted_labels.json`
//! - `refine/`: `refined_labels.json` and `energy_trace.csv`
//!
//! The pipeline itself writes `lifted_labels.json`, `refined_labels.json`,
//! `energy_trace.csv`, `metrics.json` and `metrics_unrefined.json` at the root.

use std::fmt;
use std::path::{Path, PathBuf};

use nalgebra::Vector3;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lifting::{accumulate_votes, resolve_votes, VoteTable};
use crate::mesh::fdi::FdiMap;
use crate::mesh::io::{load_labels, load_mesh_with, save_labels};
use crate::mesh::{normalize, AdjacencyIndex, Jaw, LabeledMesh, NeighborhoodKind};
use crate::metrics::{evaluate, summary_csv, BoundaryMode, MetricsReport};
use crate::refine::{alpha_expansion, build_energy, ExpansionResult};
use crate::render::export::{read_cameras, read_view, write_cameras, write_view};
use crate::render::{make_view_set_with, render_views, Camera, RenderOutput, ViewSetOptions};
use crate::segment::{file_segment, run_segmenter, write_label_pngs, SegmenterKind, ViewSegmentation};

/// Flat JSON run configuration. Unknown keys are rejected.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub views: usize,
    /// Square image side in pixels.
    pub size: u32,
    pub segmenter: SegmenterKind,
    pub potts_scale: f64,
    pub max_sweeps: usize,
    pub boundary_mode: BoundaryMode,
    /// Neighborhood size for B-IoU boundaries.
    pub k: usize,
    pub neighborhood: NeighborhoodKind,
    /// FDI code → class overrides on top of the default table.
    pub fdi_map: FdiMap,
    pub out: PathBuf,
    pub up_axis: [f64; 3],
    pub seed: u64,
    pub jobs: usize,
    pub camera: ViewSetOptions,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            views: 10,
            size: 512,
            segmenter: SegmenterKind::Oracle,
            potts_scale: 1.0,
            max_sweeps: 5,
            boundary_mode: BoundaryMode::LabelAware,
            k: 10,
            neighborhood: NeighborhoodKind::Knn,
            fdi_map: FdiMap::default(),
            out: PathBuf::from("toothlift_out"),
            up_axis: [0.0, 0.0, 1.0],
            seed: 0,
            jobs: 1,
            camera: ViewSetOptions::default(),
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Argument(m.into()));
        if self.views == 0 {
            return bad("views must be at least 1");
        }
        if self.size == 0 || self.size > 8192 {
            return bad("size must be in 1..=8192");
        }
        if !(self.potts_scale.is_finite() && self.potts_scale >= 0.0) {
            return bad("potts_scale must be finite and >= 0");
        }
        if self.k == 0 {
            return bad("k must be at least 1");
        }
        if self.jobs == 0 {
            return bad("jobs must be at least 1");
        }
        if !self.up_axis.iter().all(|c| c.is_finite()) || self.up_axis.iter().all(|&c| c == 0.0) {
            return bad("up_axis must be a finite non-zero vector");
        }
        if !(self.camera.distance.is_finite() && self.camera.distance > 0.0) {
            return bad("camera distance must be positive");
        }
        Ok(())
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: PipelineConfig =
            serde_json::from_str(text).map_err(|e| Error::Format(format!("config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text).map_err(|e| match e {
            Error::Format(m) => Error::Format(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn cameras(&self) -> Result<Vec<Camera>> {
        make_view_set_with(self.views, (self.size, self.size), &self.camera)
    }
}

/// Pipeline step that produced an error.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Stage {
    Config,
    Load,
    Normalize,
    Render,
    Segment,
    Lift,
    Refine,
    Evaluate,
    Write,
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Stage::Config => "config",
            Stage::Load => "load",
            Stage::Normalize => "normalize",
            Stage::Render => "render",
            Stage::Segment => "segment",
            Stage::Lift => "lift",
            Stage::Refine => "refine",
            Stage::Evaluate => "evaluate",
            Stage::Write => "write",
        };
        f.write_str(s)
    }
}

#[derive(Debug, thiserror::Error)]
#[error("[{stage}] {source}")]
pub struct StageError {
    pub stage: Stage,
    #[source]
    pub source: Error,
}

pub type StageResult<T> = std::result::Result<T, StageError>;

trait Tag<T> {
    fn at(self, stage: Stage) -> StageResult<T>;
}

impl<T> Tag<T> for Result<T> {
    fn at(self, stage: Stage) -> StageResult<T> {
        self.map_err(|source| StageError { stage, source })
    }
}

fn ensure_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

/// Pretty JSON with a trailing newline.
pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut s = serde_json::to_string_pretty(value).expect("value serializes");
    s.push('\n');
    std::fs::write(path, s).map_err(|e| Error::io(path, e))
}

/// A mesh loaded with its optional ground truth and normalized.
pub struct Prepared {
    pub mesh: LabeledMesh,
    pub jaw: Jaw,
}

/// Loads `mesh_path` (plus labels) and normalizes it with the configured up-axis.
pub fn prepare(mesh_path: &Path, labels_path: Option<&Path>, cfg: &PipelineConfig) -> StageResult<Prepared> {
    let jaw = match labels_path {
        Some(p) => load_labels(p, &cfg.fdi_map).at(Stage::Load)?.jaw.unwrap_or_default(),
        None => Jaw::default(),
    };
    let raw = load_mesh_with(mesh_path, labels_path, &cfg.fdi_map).at(Stage::Load)?;
    let up = Vector3::from(cfg.up_axis);
    let (mesh, _) = normalize(&raw, &up).at(Stage::Normalize)?;
    Ok(Prepared { mesh, jaw })
}

/// Renders every configured view and writes them to `dir`.
pub fn stage_render(mesh: &LabeledMesh, cfg: &PipelineConfig, dir: &Path) -> StageResult<Vec<RenderOutput>> {
    let cameras = cfg.cameras().at(Stage::Render)?;
    let outputs = render_views(mesh, &cameras);
    ensure_dir(dir).at(Stage::Write)?;
    write_cameras(dir, &cameras).at(Stage::Write)?;
    for out in &outputs {
        write_view(dir, out).at(Stage::Write)?;
    }
    Ok(outputs)
}

fn read_rendered(render_dir: &Path) -> StageResult<(Vec<Camera>, Vec<RenderOutput>)> {
    let cameras = read_cameras(render_dir).at(Stage::Load)?;
    let outputs = cameras
        .iter()
        .map(|c| read_view(render_dir, c.view_id))
        .collect::<Result<Vec<_>>>()
        .at(Stage::Load)?;
    Ok((cameras, outputs))
}

/// Segments the views stored in `render_dir` and writes label PNGs to `dir`.
pub fn stage_segment(
    mesh: &LabeledMesh,
    cfg: &PipelineConfig,
    render_dir: &Path,
    dir: &Path,
) -> StageResult<Vec<ViewSegmentation>> {
    let (cameras, outputs) = read_rendered(render_dir)?;
    let segs = run_segmenter(&cfg.segmenter, mesh, &outputs, &cameras, cfg.seed).at(Stage::Segment)?;
    ensure_dir(dir).at(Stage::Write)?;
    write_label_pngs(dir, &segs).at(Stage::Write)?;
    Ok(segs)
}

/// Votes label PNGs from `seg_dir` onto the mesh; writes `votes.raw` and
/// `lifted_labels.json` to `dir`.
pub fn stage_lift(
    prepared: &Prepared,
    cfg: &PipelineConfig,
    render_dir: &Path,
    seg_dir: &Path,
    dir: &Path,
) -> StageResult<VoteTable> {
    let (cameras, outputs) = read_rendered(render_dir)?;
    let segs = file_segment(seg_dir, &cameras).at(Stage::Load)?;
    let table = accumulate_votes(&prepared.mesh, &outputs, &segs).at(Stage::Lift)?;
    ensure_dir(dir).at(Stage::Write)?;
    table.save(&dir.join("votes.raw")).at(Stage::Write)?;
    save_labels(&dir.join("lifted_labels.json"), &resolve_votes(&table), prepared.jaw, &cfg.fdi_map)
        .at(Stage::Write)?;
    Ok(table)
}

/// Graph-cut refinement starting from the majority vote.
pub fn refine_votes(mesh: &LabeledMesh, table: &VoteTable, cfg: &PipelineConfig) -> StageResult<ExpansionResult> {
    let energy = build_energy(mesh, table, cfg.potts_scale).at(Stage::Refine)?;
    alpha_expansion(&energy, &resolve_votes(table), cfg.max_sweeps).at(Stage::Refine)
}

/// Refines the votes in `votes_path`; writes `refined_labels.json` and
/// `energy_trace.csv` to `dir`.
pub fn stage_refine(
    prepared: &Prepared,
    cfg: &PipelineConfig,
    votes_path: &Path,
    dir: &Path,
) -> StageResult<ExpansionResult> {
    let table = VoteTable::load(votes_path).at(Stage::Load)?;
    let result = refine_votes(&prepared.mesh, &table, cfg)?;
    ensure_dir(dir).at(Stage::Write)?;
    write_refined(prepared, cfg, &result, dir)?;
    Ok(result)
}

fn write_refined(prepared: &Prepared, cfg: &PipelineConfig, r: &ExpansionResult, dir: &Path) -> StageResult<()> {
    save_labels(&dir.join("refined_labels.json"), &r.labels, prepared.jaw, &cfg.fdi_map).at(Stage::Write)?;
    let trace = dir.join("energy_trace.csv");
    std::fs::write(&trace, r.trace_csv())
        .map_err(|e| Error::io(&trace, e))
        .at(Stage::Write)
}

/// Scores `pred` against the mesh's ground-truth labels.
pub fn evaluate_labels(mesh: &LabeledMesh, pred: &[u8], cfg: &PipelineConfig) -> StageResult<MetricsReport> {
    let gt = mesh.require_labels().at(Stage::Evaluate)?;
    let index = AdjacencyIndex::from_mesh(mesh);
    evaluate(pred, gt, &index, cfg.k, cfg.neighborhood, cfg.boundary_mode).at(Stage::Evaluate)
}

/// Reads a label JSON aligned with `mesh` and scores it.
pub fn stage_evaluate(mesh: &LabeledMesh, pred_path: &Path, cfg: &PipelineConfig) -> StageResult<MetricsReport> {
    let pred = load_labels(pred_path, &cfg.fdi_map).at(Stage::Load)?.labels;
    if pred.len() != mesh.vertex_count() {
        return Err(StageError {
            stage: Stage::Evaluate,
            source: Error::Alignment(format!(
                "{} predicted labels for {} vertices",
                pred.len(),
                mesh.vertex_count()
            )),
        });
    }
    evaluate_labels(mesh, &pred, cfg)
}

/// Everything one pipeline run produced.
#[derive(Clone, Debug)]
pub struct PipelineOutcome {
    pub lifted: Vec<u8>,
    pub refined: ExpansionResult,
    /// Present when ground truth was available.
    pub metrics: Option<MetricsReport>,
    pub metrics_unrefined: Option<MetricsReport>,
}

/// normalize → render → segment → lift → refine → evaluate, in memory, with
/// results written under `cfg.out`.
pub fn run_pipeline(mesh_path: &Path, labels_path: Option<&Path>, cfg: &PipelineConfig) -> StageResult<PipelineOutcome> {
    cfg.validate().at(Stage::Config)?;
    let prepared = prepare(mesh_path, labels_path, cfg)?;
    let mesh = &prepared.mesh;
    let cameras = cfg.cameras().at(Stage::Render)?;
    let outputs = render_views(mesh, &cameras);
    log::info!("rendered {} views of {} faces", outputs.len(), mesh.face_count());
    let segs = run_segmenter(&cfg.segmenter, mesh, &outputs, &cameras, cfg.seed).at(Stage::Segment)?;
    let table = accumulate_votes(mesh, &outputs, &segs).at(Stage::Lift)?;
    let lifted = resolve_votes(&table);
    let refined = refine_votes(mesh, &table, cfg)?;
    log::info!(
        "refinement: energy {:.6} -> {:.6} in {} sweeps",
        refined.initial_energy,
        refined.energy,
        refined.sweeps
    );
    let (metrics, metrics_unrefined) = if mesh.labels().is_some() {
        (
            Some(evaluate_labels(mesh, &refined.labels, cfg)?),
            Some(evaluate_labels(mesh, &lifted, cfg)?),
        )
    } else {
        (None, None)
    };

    let out = &cfg.out;
    ensure_dir(out).at(Stage::Write)?;
    save_labels(&out.join("lifted_labels.json"), &lifted, prepared.jaw, &cfg.fdi_map).at(Stage::Write)?;
    write_refined(&prepared, cfg, &refined, out)?;
    if let (Some(m), Some(u)) = (&metrics, &metrics_unrefined) {
        write_json(&out.join("metrics.json"), m).at(Stage::Write)?;
        write_json(&out.join("metrics_unrefined.json"), u).at(Stage::Write)?;
    }
    Ok(PipelineOutcome {
        lifted,
        refined,
        metrics,
        metrics_unrefined,
    })
}

/// Mesh files (`.obj`, `.ply`, `.stl`) in `dir`, sorted, each paired with
/// `<stem>.json` labels when that file exists.
pub fn batch_inputs(dir: &Path) -> Result<Vec<(PathBuf, Option<PathBuf>)>> {
    let entries = std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
    let mut meshes: Vec<PathBuf> = entries
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            p.extension()
                .and_then(|e| e.to_str())
                .is_some_and(|e| ["obj", "ply", "stl"].contains(&e.to_ascii_lowercase().as_str()))
        })
        .collect();
    meshes.sort();
    Ok(meshes
        .into_iter()
        .map(|m| {
            let labels = m.with_extension("json");
            let labels = labels.is_file().then_some(labels);
            (m, labels)
        })
        .collect())
}

/// Result of one mesh in a batch run.
#[derive(Debug)]
pub struct BatchItem {
    pub name: String,
    pub outcome: StageResult<PipelineOutcome>,
}

/// Runs the pipeline on every mesh in `dir` with at most `cfg.jobs` in
/// parallel, writing each to `<out>/<stem>/` and a `summary.csv` roll-up of
/// the evaluated meshes.
pub fn run_batch(dir: &Path, cfg: &PipelineConfig) -> StageResult<Vec<BatchItem>> {
    cfg.validate().at(Stage::Config)?;
    let inputs = batch_inputs(dir).at(Stage::Load)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.jobs)
        .build()
        .map_err(|e| Error::State(format!("thread pool: {e}")))
        .at(Stage::Config)?;
    let items: Vec<BatchItem> = pool.install(|| {
        inputs
            .par_iter()
            .map(|(mesh, labels)| {
                let name = mesh
                    .file_stem()
                    .map(|s| s.to_string_lossy().into_owned())
                    .unwrap_or_default();
                let mut sub = cfg.clone();
                sub.out = cfg.out.join(&name);
                let outcome = run_pipeline(mesh, labels.as_deref(), &sub);
                BatchItem { name, outcome }
            })
            .collect()
    });
    let rows: Vec<(String, MetricsReport)> = items
        .iter()
        .filter_map(|i| match &i.outcome {
            Ok(PipelineOutcome { metrics: Some(m), .. }) => Some((i.name.clone(), m.clone())),
            _ => None,
        })
        .collect();
    ensure_dir(&cfg.out).at(Stage::Write)?;
    let path = cfg.out.join("summary.csv");
    std::fs::write(&path, summary_csv(&rows))
        .map_err(|e| Error::io(&path, e))
        .at(Stage::Write)?;
    Ok(items)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_defaults_and_rejections() {
        let cfg = PipelineConfig::from_json("{}").unwrap();
        assert_eq!(cfg, PipelineConfig::default());
        let cfg = PipelineConfig::from_json(r#"{"views": 4, "segmenter": "noisy:3,0.05,2", "boundary_mode": "region-only"}"#).unwrap();
        assert_eq!(cfg.views, 4);
        assert_eq!(cfg.boundary_mode, BoundaryMode::RegionOnly);
        assert!(matches!(PipelineConfig::from_json(r#"{"viewz": 4}"#), Err(Error::Format(_))));
        assert!(PipelineConfig::from_json(r#"{"views": 0}"#).is_err());
        assert!(PipelineConfig::from_json(r#"{"up_axis": [0, 0, 0]}"#).is_err());
        assert!(PipelineConfig::from_json(r#"{"potts_scale": -1}"#).is_err());
        let round = serde_json::to_string(&PipelineConfig::default()).unwrap();
        assert_eq!(PipelineConfig::from_json(&round).unwrap(), PipelineConfig::default());
    }

    #[test]
    fn stage_errors_are_tagged() {
        let e = StageError {
            stage: Stage::Segment,
            source: Error::Argument("x".into()),
        };
        assert!(e.to_string().starts_with("[segment]"));
    }
}
