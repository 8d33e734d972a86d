//! `score.toml` configuration.
//!
//! Lookup order: an explicit path, then `$SCORE_CONFIG`, then `./score.toml`
//! if present, then built-in defaults. Command-line flags override values
//! loaded here.

use std::path::{Path, PathBuf};

use lanetopo_core::assign::LossWeights;
use lanetopo_core::denoise::{DenoiseConfig, NoiseMode, LAMBDA_DN, N_BASE, N_DN};
use lanetopo_core::lane::{N_PTS, N_RB};
use lanetopo_core::metrics::{EvalConfig, DISTANCE_THRESHOLDS, TE_IOU};
use lanetopo_core::sdmap::{DEFAULT_HIGHWAY_WHITELIST, N_SD};
use lanetopo_core::synth::{DUPLICATION_K, TURN_THRESHOLD_DEG};
use lanetopo_core::temporal::N_REF;
use lanetopo_core::topology::{EndpointMode, TopoConfig, ALPHA, BETA, TAU};
use lanetopo_core::{BevExtent, ZRange};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const ENV_VAR: &str = "SCORE_CONFIG";
pub const DEFAULT_FILE: &str = "score.toml";

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub extent: ExtentSection,
    pub lane: LaneSection,
    pub sd: SdSection,
    pub denoise: DenoiseSection,
    pub loss: LossSection,
    pub topology: TopologySection,
    pub eval: EvalSection,
    pub resample: ResampleSection,
    pub temporal: TemporalSection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExtentSection {
    pub x_min: f64,
    pub x_max: f64,
    pub y_min: f64,
    pub y_max: f64,
    pub z_min: f64,
    pub z_max: f64,
}

impl Default for ExtentSection {
    fn default() -> Self {
        let e = BevExtent::default();
        let z = ZRange::default();
        Self { x_min: e.x_min, x_max: e.x_max, y_min: e.y_min, y_max: e.y_max, z_min: z.min, z_max: z.max }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LaneSection {
    pub n_pts: usize,
    pub n_rb: usize,
}

impl Default for LaneSection {
    fn default() -> Self {
        Self { n_pts: N_PTS, n_rb: N_RB }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SdSection {
    pub n_sd: usize,
    pub highway_whitelist: Vec<String>,
}

impl Default for SdSection {
    fn default() -> Self {
        Self { n_sd: N_SD, highway_whitelist: DEFAULT_HIGHWAY_WHITELIST.iter().map(|s| s.to_string()).collect() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DenoiseSection {
    pub n_base: usize,
    pub n_dn: usize,
    pub lambda_dn: f64,
    /// `per_point` or `per_segment`
    pub noise: String,
}

impl Default for DenoiseSection {
    fn default() -> Self {
        Self { n_base: N_BASE, n_dn: N_DN, lambda_dn: LAMBDA_DN, noise: "per_point".into() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LossSection {
    pub vec_ls: f64,
    pub seg_ls: f64,
    pub ce: f64,
    pub dice: f64,
    pub cls_ls: f64,
    #[serde(rename = "type")]
    pub type_: f64,
    pub top: f64,
    pub o2m: f64,
    pub dn: f64,
    pub vec_rb: f64,
    pub seg_rb: f64,
    pub cls_rb: f64,
}

impl Default for LossSection {
    fn default() -> Self {
        let w = LossWeights::default();
        Self {
            vec_ls: w.vec_ls,
            seg_ls: w.seg_ls,
            ce: w.ce,
            dice: w.dice,
            cls_ls: w.cls_ls,
            type_: w.type_,
            top: w.top,
            o2m: w.o2m,
            dn: w.dn,
            vec_rb: w.vec_rb,
            seg_rb: w.seg_rb,
            cls_rb: w.cls_rb,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TopologySection {
    pub alpha: f64,
    pub beta: f64,
    pub tau: f64,
    /// `successor` or `min_pairing`
    pub endpoints: String,
}

impl Default for TopologySection {
    fn default() -> Self {
        Self { alpha: ALPHA, beta: BETA, tau: TAU, endpoints: "successor".into() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalSection {
    pub thresholds: Vec<f64>,
    pub te_iou: f64,
    pub pair_threshold: f64,
    pub workers: usize,
}

impl Default for EvalSection {
    fn default() -> Self {
        Self { thresholds: DISTANCE_THRESHOLDS.to_vec(), te_iou: TE_IOU, pair_threshold: 3.0, workers: 4 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ResampleSection {
    pub threshold_deg: f64,
    pub k: usize,
}

impl Default for ResampleSection {
    fn default() -> Self {
        Self { threshold_deg: TURN_THRESHOLD_DEG, k: DUPLICATION_K }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TemporalSection {
    pub n_ref: usize,
}

impl Default for TemporalSection {
    fn default() -> Self {
        Self { n_ref: N_REF }
    }
}

impl Config {
    pub fn parse(text: &str, origin: &Path) -> Result<Self> {
        let cfg: Config =
            toml::from_str(text).map_err(|e| Error::Config { path: origin.into(), message: e.to_string() })?;
        cfg.validate().map_err(|message| Error::Config { path: origin.into(), message })?;
        Ok(cfg)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|source| Error::Io { path: path.into(), source })?;
        Self::parse(&text, path)
    }

    /// Which file [`Config::load`] would read, if any.
    pub fn resolve(explicit: Option<&Path>, env: Option<&str>, cwd: &Path) -> Option<PathBuf> {
        if let Some(p) = explicit {
            return Some(p.into());
        }
        if let Some(e) = env.filter(|e| !e.is_empty()) {
            return Some(e.into());
        }
        let local = cwd.join(DEFAULT_FILE);
        local.is_file().then_some(local)
    }

    pub fn load(explicit: Option<&Path>) -> Result<Self> {
        let env = std::env::var(ENV_VAR).ok();
        let cwd = std::env::current_dir().unwrap_or_default();
        match Self::resolve(explicit, env.as_deref(), &cwd) {
            Some(p) => Self::from_file(&p),
            None => Ok(Self::default()),
        }
    }

    pub fn validate(&self) -> std::result::Result<(), String> {
        self.bev_extent().map_err(|e| e.to_string())?;
        self.z_range().map_err(|e| e.to_string())?;
        if self.lane.n_pts < 2 || self.lane.n_rb < 2 {
            return Err("lane.n_pts and lane.n_rb must be >= 2".into());
        }
        if self.denoise.n_base == 0 {
            return Err("denoise.n_base must be >= 1".into());
        }
        self.denoise_config(0)?.validate().map_err(|e| e.to_string())?;
        self.loss_weights().validate().map_err(|e| e.to_string())?;
        self.topo_config()?.validate().map_err(|e| e.to_string())?;
        self.eval_config().validate().map_err(|e| e.to_string())?;
        if self.eval.workers == 0 {
            return Err("eval.workers must be >= 1".into());
        }
        if self.resample.k == 0 || !(self.resample.threshold_deg >= 0.0) {
            return Err("resample.k must be >= 1 and resample.threshold_deg >= 0".into());
        }
        if self.temporal.n_ref < 2 {
            return Err("temporal.n_ref must be >= 2".into());
        }
        Ok(())
    }

    pub fn bev_extent(&self) -> lanetopo_core::Result<BevExtent> {
        let e = &self.extent;
        BevExtent::new(e.x_min, e.x_max, e.y_min, e.y_max)
    }

    pub fn z_range(&self) -> lanetopo_core::Result<ZRange> {
        ZRange::new(self.extent.z_min, self.extent.z_max)
    }

    pub fn denoise_config(&self, seed: u64) -> std::result::Result<DenoiseConfig, String> {
        let noise = match self.denoise.noise.as_str() {
            "per_point" => NoiseMode::PerPoint,
            "per_segment" => NoiseMode::PerSegment,
            other => return Err(format!("denoise.noise: unknown mode {other:?}")),
        };
        Ok(DenoiseConfig { n_dn: self.denoise.n_dn, lambda_dn: self.denoise.lambda_dn, seed, noise })
    }

    pub fn loss_weights(&self) -> LossWeights {
        let l = &self.loss;
        LossWeights {
            vec_ls: l.vec_ls,
            seg_ls: l.seg_ls,
            ce: l.ce,
            dice: l.dice,
            cls_ls: l.cls_ls,
            type_: l.type_,
            top: l.top,
            o2m: l.o2m,
            dn: l.dn,
            vec_rb: l.vec_rb,
            seg_rb: l.seg_rb,
            cls_rb: l.cls_rb,
        }
    }

    pub fn topo_config(&self) -> std::result::Result<TopoConfig, String> {
        let endpoints = match self.topology.endpoints.as_str() {
            "successor" => EndpointMode::Successor,
            "min_pairing" => EndpointMode::MinPairing,
            other => return Err(format!("topology.endpoints: unknown mode {other:?}")),
        };
        Ok(TopoConfig { alpha: self.topology.alpha, beta: self.topology.beta, tau: self.topology.tau, endpoints })
    }

    pub fn eval_config(&self) -> EvalConfig {
        EvalConfig {
            thresholds: self.eval.thresholds.clone(),
            te_iou: self.eval.te_iou,
            pair_threshold: self.eval.pair_threshold,
        }
    }
}
