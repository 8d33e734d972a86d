//! Directory evaluation, JSON reports and the plain-text summary table.

use std::path::{Path, PathBuf};

use lanetopo_core::lane::SceneLimits;
use lanetopo_core::metrics::{reduce, score_frame, EvalConfig, EvalReport, FrameScore, Prediction};
use lanetopo_core::Scene;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::format::{load_predictions, load_scene_with};

/// Sorted `*.json` files in a directory.
pub fn json_files(dir: &Path) -> Result<Vec<PathBuf>> {
    let rd = std::fs::read_dir(dir).map_err(|source| Error::Io { path: dir.into(), source })?;
    let mut out = Vec::new();
    for entry in rd {
        let p = entry.map_err(|source| Error::Io { path: dir.into(), source })?.path();
        if p.is_file() && p.extension().is_some_and(|e| e == "json") {
            out.push(p);
        }
    }
    out.sort();
    Ok(out)
}

/// One ground-truth scene and its predictions, frame by frame.
pub struct ScenePair {
    pub name: String,
    pub gt: Scene,
    pub pred: Vec<Prediction>,
}

/// Pairs every gt file with the same-named prediction file. A missing
/// prediction file counts as empty predictions for every frame.
pub fn load_pairs(pred_dir: &Path, gt_dir: &Path, limits: &SceneLimits) -> Result<Vec<ScenePair>> {
    let mut pairs = Vec::new();
    for gt_path in json_files(gt_dir)? {
        let name = gt_path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
        let gt = load_scene_with(&gt_path, limits)?;
        let pred_path = pred_dir.join(&name);
        let pred = if pred_path.is_file() {
            let p = load_predictions(&pred_path)?;
            if p.len() != gt.frames.len() {
                return Err(Error::invalid(
                    &pred_path,
                    format!("{} prediction frames for {} ground-truth frames", p.len(), gt.frames.len()),
                ));
            }
            p
        } else {
            gt.frames.iter().map(empty_prediction).collect()
        };
        pairs.push(ScenePair { name, gt, pred });
    }
    Ok(pairs)
}

fn empty_prediction(_: &lanetopo_core::Frame) -> Prediction {
    Prediction {
        graph: lanetopo_core::LaneGraph::empty(),
        boundaries: Vec::new(),
        traffic_elements: Vec::new(),
        te_assoc: lanetopo_core::TeAssociation::empty(0, 0),
    }
}

/// Scores all frames on a bounded pool; the reduction runs in input order so
/// the result does not depend on scheduling.
pub fn evaluate(pairs: &[ScenePair], cfg: &EvalConfig, workers: usize) -> Result<EvalReport> {
    let jobs: Vec<(&Prediction, &lanetopo_core::Frame)> =
        pairs.iter().flat_map(|p| p.pred.iter().zip(&p.gt.frames)).collect();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| Error::Other(format!("thread pool: {e}")))?;
    let scores: Vec<FrameScore> = pool
        .install(|| jobs.par_iter().map(|(p, f)| score_frame(p, f, cfg)).collect::<lanetopo_core::Result<Vec<_>>>())?;
    Ok(reduce(&scores, cfg)?)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ApRowDoc {
    pub metric: &'static str,
    pub class: &'static str,
    pub threshold: f64,
    pub ap: Option<f64>,
    pub n_gt: usize,
    pub n_pred: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReportDoc {
    pub scenes: Vec<String>,
    pub frames: usize,
    pub det_ls: Option<f64>,
    pub det_ped: Option<f64>,
    pub det_b: Option<f64>,
    pub det_a: Option<f64>,
    pub det_te: Option<f64>,
    pub top_ll: Option<f64>,
    pub top_lt: Option<f64>,
    pub olus: Option<f64>,
    pub ap_table: Vec<ApRowDoc>,
    pub summary: String,
}

pub fn report_doc(r: &EvalReport, scenes: Vec<String>) -> ReportDoc {
    ReportDoc {
        scenes,
        frames: r.frames,
        det_ls: r.det_ls,
        det_ped: r.det_ped,
        det_b: r.det_b,
        det_a: r.det_a(),
        det_te: r.det_te,
        top_ll: r.top_ll,
        top_lt: r.top_lt,
        olus: r.olus,
        ap_table: r
            .rows
            .iter()
            .map(|row| ApRowDoc {
                metric: row.metric.as_str(),
                class: row.class,
                threshold: row.threshold,
                ap: row.ap,
                n_gt: row.n_gt,
                n_pred: row.n_pred,
            })
            .collect(),
        summary: summary(r),
    }
}

fn pct(v: Option<f64>) -> String {
    v.map_or_else(|| "-".into(), |v| format!("{:.1}", v * 100.0))
}

/// Percentages in the usual column order, one header row and one value row.
pub fn summary(r: &EvalReport) -> String {
    let cols = [
        ("DET_ls", r.det_ls),
        ("DET_a", r.det_a()),
        ("DET_ped", r.det_ped),
        ("DET_b", r.det_b),
        ("DET_t", r.det_te),
        ("TOP_ll", r.top_ll),
        ("TOP_lt", r.top_lt),
        ("OLUS", r.olus),
    ];
    let head: Vec<String> = cols.iter().map(|(n, _)| format!("{n:>8}")).collect();
    let vals: Vec<String> = cols.iter().map(|(_, v)| format!("{:>8}", pct(*v))).collect();
    format!("{}\n{}\n", head.join(""), vals.join(""))
}
