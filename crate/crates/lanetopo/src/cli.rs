//! Command-line entry point.

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use lanetopo_core::assign::{hungarian, lane_matching_cost, one_to_many_assign, FocalParams, LaneQuery};
use lanetopo_core::denoise::{assemble_bundle, build_attention_mask, make_denoising_groups, SdMaskPolicy};
use lanetopo_core::lane::SceneLimits;
use lanetopo_core::sdmap::{project_clip, sample_sd_refpoints, GeoEgo};
use lanetopo_core::synth::{
    corrupt_sd_map, gen_scene, perturb_predictions, resample_dataset, CorruptionSpec, SceneSpec, Template,
};
use lanetopo_core::topology::{distance_adjacency, fuse_topology};
use lanetopo_core::{Matrix, Point3, SegClass};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::config::Config;
use crate::error::{Error, Result};
use crate::eval::{evaluate, load_pairs, report_doc};
use crate::format::{
    frame_from_doc, load_predictions, load_scene_with, prediction_doc, read_json, save_scene, scene_doc, sd_doc,
    sd_from_doc, write_json, write_text, SceneDoc, SdMapDoc,
};
use crate::osm::parse_osm;
use crate::render::{render_frame, RenderStyle};

#[derive(Debug, Parser)]
#[command(name = "lanetopo", version, about = "Lane-graph topology toolkit")]
struct Cli {
    /// Configuration file (falls back to $SCORE_CONFIG, then ./score.toml).
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a synthetic scene.
    Synth(SynthArgs),
    /// Corrupt a scene into a prediction file.
    Perturb(PerturbArgs),
    /// Project an OSM extract into the ego frame as an SD map.
    IngestOsm(IngestArgs),
    /// Sample normalized SD reference points.
    SampleSd(SampleArgs),
    /// Build denoising queries and the hybrid attention mask for one frame.
    DenoiseGen(DenoiseArgs),
    /// Fuse predicted successor scores with the endpoint-distance prior.
    TopoFuse(FuseArgs),
    /// Hungarian matching of predicted to ground-truth lane segments.
    Match(MatchArgs),
    /// Score a prediction directory against a ground-truth directory.
    Eval(EvalArgs),
    /// Turn-aware frame resampling.
    Resample(ResampleArgs),
    /// Draw one frame as SVG.
    Render(RenderArgs),
}

fn parse_template(s: &str) -> std::result::Result<Template, String> {
    Template::parse(s).ok_or_else(|| {
        let names: Vec<&str> = Template::ALL.iter().map(Template::as_str).collect();
        format!("unknown template {s:?}; expected one of {}", names.join(", "))
    })
}

#[derive(Debug, Args)]
struct SynthArgs {
    #[arg(long, value_parser = parse_template, default_value = "straight")]
    template: Template,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 2)]
    lanes: usize,
    #[arg(long, default_value_t = 3.5)]
    lane_width: f64,
    #[arg(long, default_value_t = 10)]
    frames: usize,
    /// m/s
    #[arg(long, default_value_t = 10.0)]
    speed: f64,
    /// Turn radius in metres.
    #[arg(long, default_value_t = lanetopo_core::synth::TURN_RADIUS)]
    radius: f64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct PerturbArgs {
    #[arg(long)]
    scene: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Point jitter standard deviation in metres.
    #[arg(long, default_value_t = 0.0)]
    jitter: f64,
    #[arg(long, default_value_t = 0.0)]
    drop: f64,
    #[arg(long, default_value_t = 0.0)]
    conf_noise: f64,
    #[arg(long, default_value_t = 0.0)]
    sd_dropout: f64,
    #[arg(long, default_value_t = 0.0)]
    sd_jitter: f64,
}

#[derive(Debug, Args)]
struct IngestArgs {
    #[arg(long)]
    osm: PathBuf,
    #[arg(long, allow_negative_numbers = true)]
    lat: f64,
    #[arg(long, allow_negative_numbers = true)]
    lon: f64,
    /// Heading in radians, counter-clockwise from east.
    #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
    yaw: f64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct SampleArgs {
    /// SD map file written by `ingest-osm`.
    #[arg(long, conflicts_with = "scene", required_unless_present = "scene")]
    sd: Option<PathBuf>,
    /// Take the SD map of a scene frame instead.
    #[arg(long)]
    scene: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    frame: usize,
    #[arg(long)]
    n_sd: Option<usize>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct DenoiseArgs {
    #[arg(long)]
    scene: PathBuf,
    #[arg(long, default_value_t = 0)]
    frame: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    n_dn: Option<usize>,
    #[arg(long)]
    lambda: Option<f64>,
    #[arg(long)]
    n_base: Option<usize>,
    /// Let SD queries read base queries.
    #[arg(long)]
    sd_reads_base: bool,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct FuseArgs {
    /// Scene or prediction file; its adjacency is the similarity score.
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    beta: Option<f64>,
}

#[derive(Debug, Args)]
struct MatchArgs {
    #[arg(long)]
    pred: PathBuf,
    #[arg(long)]
    gt: PathBuf,
    /// Ground-truth copies per segment (1 is one-to-one).
    #[arg(long, default_value_t = 1)]
    k: usize,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct EvalArgs {
    #[arg(long)]
    pred: PathBuf,
    #[arg(long)]
    gt: PathBuf,
    #[arg(long)]
    report: PathBuf,
    #[arg(long)]
    workers: Option<usize>,
}

#[derive(Debug, Args)]
struct ResampleArgs {
    #[arg(required = true)]
    scenes: Vec<PathBuf>,
    #[arg(long)]
    threshold: Option<f64>,
    #[arg(long)]
    k: Option<usize>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct RenderArgs {
    input: PathBuf,
    output: PathBuf,
    #[arg(long, default_value_t = 0)]
    frame: usize,
    #[arg(long)]
    tau: Option<f64>,
    /// Pixels per metre.
    #[arg(long, default_value_t = 8.0)]
    scale: f64,
}

/// Runs the command line and returns the process exit code: 0 on success,
/// 1 on a data error, 2 on a usage error.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match dispatch(cli) {
        Ok(msg) => {
            print!("{msg}");
            0
        }
        Err(e) => {
            eprintln!("error: {e}");
            1
        }
    }
}

fn dispatch(cli: Cli) -> Result<String> {
    let cfg = Config::load(cli.config.as_deref())?;
    match cli.command {
        Command::Synth(a) => synth(&cfg, a),
        Command::Perturb(a) => perturb(&cfg, a),
        Command::IngestOsm(a) => ingest(&cfg, a),
        Command::SampleSd(a) => sample_sd(&cfg, a),
        Command::DenoiseGen(a) => denoise(&cfg, a),
        Command::TopoFuse(a) => topo_fuse(&cfg, a),
        Command::Match(a) => match_cmd(&cfg, a),
        Command::Eval(a) => eval_cmd(&cfg, a),
        Command::Resample(a) => resample(&cfg, a),
        Command::Render(a) => render(&cfg, a),
    }
}

fn limits(cfg: &Config) -> SceneLimits {
    SceneLimits { n_pts: cfg.lane.n_pts, n_rb: cfg.lane.n_rb }
}

fn synth(cfg: &Config, a: SynthArgs) -> Result<String> {
    let spec = SceneSpec {
        template: a.template,
        n_lanes: a.lanes,
        lane_width: a.lane_width,
        frames: a.frames,
        speed: a.speed,
        seed: a.seed,
        radius: a.radius,
        extent: cfg.bev_extent()?,
    };
    let scene = gen_scene(&spec)?;
    save_scene(&a.out, &scene)?;
    Ok(format!("wrote {} ({} frames, template {})\n", a.out.display(), scene.frames.len(), a.template.as_str()))
}

fn perturb(cfg: &Config, a: PerturbArgs) -> Result<String> {
    let scene = load_scene_with(&a.scene, &limits(cfg))?;
    let c = CorruptionSpec {
        jitter_sigma: a.jitter,
        drop_prob: a.drop,
        confidence_noise: a.conf_noise,
        sd_dropout: a.sd_dropout,
        sd_jitter: a.sd_jitter,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(a.seed);
    let base = scene_doc(&scene);
    let mut frames = Vec::with_capacity(scene.frames.len());
    for (f, doc) in scene.frames.iter().zip(&base.frames) {
        let pred = perturb_predictions(f, &c, &mut rng)?;
        let sd = corrupt_sd_map(&f.sd_map, &c, &mut rng)?;
        let mut out = prediction_doc(&pred, Some(doc));
        out.sd_map = sd_doc(&sd);
        frames.push(out);
    }
    write_json(&a.out, &SceneDoc { frames })?;
    Ok(format!("wrote {}\n", a.out.display()))
}

fn ingest(cfg: &Config, a: IngestArgs) -> Result<String> {
    let xml = std::fs::read_to_string(&a.osm).map_err(|source| Error::Io { path: a.osm.clone(), source })?;
    let map = parse_osm(&xml, &cfg.sd.highway_whitelist)?;
    let sd = project_clip(&map, &GeoEgo { lat: a.lat, lon: a.lon, yaw: a.yaw }, &cfg.bev_extent()?)?;
    write_json(&a.out, &SdMapDoc { elements: sd_doc(&sd) })?;
    Ok(format!("wrote {} ({} elements from {} ways)\n", a.out.display(), sd.elements.len(), map.ways().len()))
}

#[derive(Serialize)]
struct RefPointsDoc {
    points: Vec<[f64; 3]>,
    source_edge: Vec<usize>,
}

fn sample_sd(cfg: &Config, a: SampleArgs) -> Result<String> {
    let map = match (&a.sd, &a.scene) {
        (Some(p), _) => {
            let doc: SdMapDoc = read_json(p)?;
            sd_from_doc(&doc.elements).map_err(|m| Error::invalid(p, m))?
        }
        (None, Some(p)) => {
            let scene = load_scene_with(p, &limits(cfg))?;
            frame_at(&scene.frames, a.frame, p)?.sd_map.clone()
        }
        (None, None) => return Err(Error::Other("either --sd or --scene is required".into())),
    };
    let n_sd = a.n_sd.unwrap_or(cfg.sd.n_sd);
    let refs = sample_sd_refpoints(&map, n_sd, &cfg.bev_extent()?, &cfg.z_range()?)?;
    let doc =
        RefPointsDoc { points: refs.points.iter().map(|p| p.to_array()).collect(), source_edge: refs.source_edge };
    write_json(&a.out, &doc)?;
    Ok(format!("wrote {} ({} points)\n", a.out.display(), doc.points.len()))
}

fn frame_at<'a, T>(frames: &'a [T], i: usize, path: &Path) -> Result<&'a T> {
    frames.get(i).ok_or_else(|| Error::invalid(path, format!("no frame {i} ({} frames)", frames.len())))
}

#[derive(Serialize)]
struct DenoiseDoc {
    groups: usize,
    n_gt: usize,
    n_sd: usize,
    n_base: usize,
    n_dn: usize,
    refpoints: Vec<Vec<[f64; 3]>>,
    group_of: Vec<usize>,
    gt_of: Vec<usize>,
    /// One string of `0`/`1` per query row.
    mask: Vec<String>,
}

fn denoise(cfg: &Config, a: DenoiseArgs) -> Result<String> {
    let scene = load_scene_with(&a.scene, &limits(cfg))?;
    let frame = frame_at(&scene.frames, a.frame, &a.scene)?;
    let mut dc = cfg.denoise_config(a.seed).map_err(Error::Other)?;
    dc.n_dn = a.n_dn.unwrap_or(dc.n_dn);
    dc.lambda_dn = a.lambda.unwrap_or(dc.lambda_dn);
    let (extent, z) = (cfg.bev_extent()?, cfg.z_range()?);
    let dn = make_denoising_groups(&frame.gt, &extent, &z, &dc)?;
    let sd: Vec<Point3> = if frame.sd_map.is_empty() {
        Vec::new()
    } else {
        sample_sd_refpoints(&frame.sd_map, cfg.sd.n_sd, &extent, &z)?.points
    };
    let mut rng = ChaCha8Rng::seed_from_u64(a.seed ^ 0x5eed);
    let bundle = assemble_bundle(&sd, a.n_base.unwrap_or(cfg.denoise.n_base), Some(&dn), &mut rng)?;
    let policy = if a.sd_reads_base { SdMaskPolicy::SdReadsBase } else { SdMaskPolicy::Isolated };
    let mask = build_attention_mask(&bundle, policy);
    let n = mask.size();
    let doc = DenoiseDoc {
        groups: dn.groups,
        n_gt: dn.n_gt,
        n_sd: bundle.counts.n_sd,
        n_base: bundle.counts.n_base,
        n_dn: bundle.counts.n_dn,
        refpoints: dn.refpoints.iter().map(|r| r.iter().map(|p| p.to_array()).collect()).collect(),
        group_of: dn.group_of.clone(),
        gt_of: dn.gt_of.clone(),
        mask: (0..n).map(|i| (0..n).map(|j| if mask.allowed(i, j) { '1' } else { '0' }).collect()).collect(),
    };
    write_json(&a.out, &doc)?;
    Ok(format!("wrote {} ({} groups, {} queries)\n", a.out.display(), dn.groups, n))
}

fn topo_fuse(cfg: &Config, a: FuseArgs) -> Result<String> {
    let mut tc = cfg.topo_config().map_err(Error::Other)?;
    tc.alpha = a.alpha.unwrap_or(tc.alpha);
    tc.beta = a.beta.unwrap_or(tc.beta);
    tc.validate()?;
    let mut doc: SceneDoc = read_json(&a.input)?;
    for (i, fd) in doc.frames.iter_mut().enumerate() {
        let f = frame_from_doc(fd).map_err(|m| Error::invalid(&a.input, format!("frame {i}: {m}")))?;
        let dist = distance_adjacency(&f.gt.segments, tc.alpha, tc.endpoints)?;
        let fused = fuse_topology(&f.gt.adjacency, &dist, tc.beta)?;
        fd.adjacency = fused.to_rows();
    }
    write_json(&a.out, &doc)?;
    Ok(format!("wrote {} (alpha {}, beta {})\n", a.out.display(), tc.alpha, tc.beta))
}

#[derive(Serialize)]
struct MatchFrameDoc {
    pairs: Vec<[usize; 2]>,
    cost: f64,
}

fn lane_query(s: &lanetopo_core::LaneSegment) -> LaneQuery {
    let p = s.confidence.clamp(1e-6, 1.0 - 1e-6);
    let class_probs =
        SegClass::ALL.iter().map(|c| if *c == s.seg_class { p } else { (1.0 - p) / (SegClass::ALL.len() - 1) as f64 });
    let types = |t: lanetopo_core::BoundaryType| {
        let mut v = [0.05; 3];
        v[t.index()] = 0.9;
        v
    };
    LaneQuery {
        segment: s.clone(),
        class_probs: class_probs.collect(),
        left_type_probs: types(s.left_type),
        right_type_probs: types(s.right_type),
        mask: Matrix::zeros(0, 0),
    }
}

fn match_cmd(cfg: &Config, a: MatchArgs) -> Result<String> {
    let gt = load_scene_with(&a.gt, &limits(cfg))?;
    let pred = load_predictions(&a.pred)?;
    if pred.len() != gt.frames.len() {
        return Err(Error::invalid(&a.pred, format!("{} frames, ground truth has {}", pred.len(), gt.frames.len())));
    }
    let w = cfg.loss_weights();
    let mut frames = Vec::new();
    for (p, g) in pred.iter().zip(&gt.frames) {
        let queries: Vec<LaneQuery> = p.graph.segments.iter().map(lane_query).collect();
        let cost = lane_matching_cost(&queries, &g.gt.segments, &w, FocalParams::default())?;
        let asg = if a.k <= 1 { hungarian(&cost)? } else { one_to_many_assign(&cost, a.k)? };
        frames.push(MatchFrameDoc { pairs: asg.pairs.iter().map(|&(r, c)| [r, c]).collect(), cost: asg.cost });
    }
    let total: usize = frames.iter().map(|f| f.pairs.len()).sum();
    write_json(&a.out, &frames)?;
    Ok(format!("wrote {} ({} pairs over {} frames)\n", a.out.display(), total, frames.len()))
}

fn eval_cmd(cfg: &Config, a: EvalArgs) -> Result<String> {
    let ec = cfg.eval_config();
    ec.validate()?;
    let pairs = load_pairs(&a.pred, &a.gt, &limits(cfg))?;
    if pairs.is_empty() {
        return Err(Error::invalid(&a.gt, "no ground-truth scenes (*.json)"));
    }
    let report = evaluate(&pairs, &ec, a.workers.unwrap_or(cfg.eval.workers))?;
    let doc = report_doc(&report, pairs.iter().map(|p| p.name.clone()).collect());
    write_json(&a.report, &doc)?;
    Ok(doc.summary)
}

#[derive(Serialize)]
struct ResampleEntry {
    scene: String,
    frame: usize,
    wheel_angle_deg: f64,
}

#[derive(Serialize)]
struct ResampleDoc {
    threshold_deg: f64,
    k: usize,
    frames: usize,
    turning: usize,
    total: usize,
    entries: Vec<ResampleEntry>,
}

fn resample(cfg: &Config, a: ResampleArgs) -> Result<String> {
    let threshold = a.threshold.unwrap_or(cfg.resample.threshold_deg);
    let k = a.k.unwrap_or(cfg.resample.k);
    let mut refs = Vec::new();
    for path in &a.scenes {
        let scene = load_scene_with(path, &limits(cfg))?;
        for (i, f) in scene.frames.iter().enumerate() {
            refs.push((path.display().to_string(), i, f.wheel_angle_deg));
        }
    }
    let angles: Vec<f64> = refs.iter().map(|r| r.2).collect();
    let idx = resample_dataset(&angles, threshold, k)?;
    let turning = angles.iter().filter(|a| a.abs() > threshold).count();
    let entries: Vec<ResampleEntry> = idx
        .iter()
        .map(|&i| ResampleEntry { scene: refs[i].0.clone(), frame: refs[i].1, wheel_angle_deg: refs[i].2 })
        .collect();
    let doc = ResampleDoc { threshold_deg: threshold, k, frames: refs.len(), turning, total: entries.len(), entries };
    write_json(&a.out, &doc)?;
    Ok(format!(
        "wrote {} ({} entries; turning frames {} of {}, {} of {} after resampling)\n",
        a.out.display(),
        doc.total,
        turning,
        refs.len(),
        turning * k,
        doc.total
    ))
}

fn render(cfg: &Config, a: RenderArgs) -> Result<String> {
    let doc: SceneDoc = read_json(&a.input)?;
    let fd = frame_at(&doc.frames, a.frame, &a.input)?;
    let f = frame_from_doc(fd).map_err(|m| Error::invalid(&a.input, m))?;
    if !(a.scale > 0.0 && a.scale.is_finite()) {
        return Err(Error::Other("--scale must be positive".into()));
    }
    let style = RenderStyle { extent: cfg.bev_extent()?, scale: a.scale, tau: a.tau.unwrap_or(cfg.topology.tau) };
    let svg = render_frame(&f, &style)?;
    write_text(&a.output, &svg)?;
    Ok(format!("wrote {}\n", a.output.display()))
}
