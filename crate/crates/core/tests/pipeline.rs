use lanetopo_core::denoise::{
    assemble_bundle, build_attention_mask, make_denoising_groups, DenoiseConfig, SdMaskPolicy,
};
use lanetopo_core::metrics::{reduce, score_frame, EvalConfig, Prediction};
use lanetopo_core::sdmap::{sample_sd_refpoints, N_SD};
use lanetopo_core::synth::{gen_scene, perturb_predictions, CorruptionSpec, SceneSpec, Template};
use lanetopo_core::temporal::{stream_step, BevGrid, GruWeights};
use lanetopo_core::topology::{distance_adjacency, extract_graph, fuse_topology, EndpointMode, ALPHA, BETA, TAU};
use lanetopo_core::{BevExtent, Pose2, ZRange};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[test]
fn fusion_keeps_every_true_edge() {
    for t in Template::ALL {
        let scene = gen_scene(&SceneSpec::new(t, 1)).unwrap();
        for f in &scene.frames {
            let dist = distance_adjacency(&f.gt.segments, ALPHA, EndpointMode::Successor).unwrap();
            let fused = fuse_topology(&f.gt.adjacency, &dist, BETA).unwrap();
            let before = extract_graph(&f.gt.adjacency, TAU).unwrap();
            let after: Vec<(usize, usize)> =
                extract_graph(&fused, TAU).unwrap().iter().map(|e| (e.from, e.to)).collect();
            for e in before {
                assert!(after.contains(&(e.from, e.to)), "{}: lost {} -> {}", t.as_str(), e.from, e.to);
            }
        }
    }
}

#[test]
fn query_bundle_from_a_synthetic_frame() {
    let scene = gen_scene(&SceneSpec::new(Template::Intersection, 2)).unwrap();
    let f = &scene.frames[scene.frames.len() / 2];
    let (extent, z) = (BevExtent::default(), ZRange::default());
    let sd = sample_sd_refpoints(&f.sd_map, N_SD, &extent, &z).unwrap();
    let dn = make_denoising_groups(&f.gt, &extent, &z, &DenoiseConfig::default()).unwrap();
    assert_eq!(dn.groups, 60 / f.gt.len());
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let bundle = assemble_bundle(&sd.points, 200, Some(&dn), &mut rng).unwrap();
    assert_eq!(bundle.len(), N_SD + 200 + dn.groups * f.gt.len());
    let mask = build_attention_mask(&bundle, SdMaskPolicy::Isolated);
    assert!(!mask.allowed(0, N_SD));
    assert!(!mask.allowed(N_SD, N_SD + 200));
    assert!(mask.allowed(N_SD + 200, N_SD));
}

#[test]
fn corrupted_predictions_score_below_perfect() {
    let cfg = EvalConfig::default();
    let scene = gen_scene(&SceneSpec::new(Template::Merge, 4)).unwrap();
    let c = CorruptionSpec { jitter_sigma: 1.0, drop_prob: 0.2, confidence_noise: 0.3, ..CorruptionSpec::default() };
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let (mut perfect, mut noisy) = (Vec::new(), Vec::new());
    for f in &scene.frames {
        perfect.push(score_frame(&Prediction::from_frame(f), f, &cfg).unwrap());
        noisy.push(score_frame(&perturb_predictions(f, &c, &mut rng).unwrap(), f, &cfg).unwrap());
    }
    let (p, n) = (reduce(&perfect, &cfg).unwrap(), reduce(&noisy, &cfg).unwrap());
    assert_eq!(p.olus, Some(1.0));
    let o = n.olus.unwrap();
    assert!(o > 0.0 && o < 1.0, "{o}");
}

#[test]
fn streaming_over_scene_poses() {
    let scene = gen_scene(&SceneSpec::new(Template::TurnLeft, 0)).unwrap();
    let e = BevExtent::default();
    let w = GruWeights::seeded(2, 3, 5).unwrap();
    let mut state: Option<BevGrid> = None;
    let mut prev = Pose2::IDENTITY;
    for (i, f) in scene.frames.iter().enumerate() {
        let x = BevGrid::from_fn(10, 20, 2, e, |r, c, k| ((r + c + k + i) % 5) as f64 / 5.0).unwrap();
        let motion = if i == 0 { Pose2::IDENTITY } else { Pose2::relative(&prev, &f.ego_pose) };
        let (fused, next) = stream_step(state.as_ref(), &x, &motion, &w).unwrap();
        assert_eq!(fused.shape(), (10, 20, 2));
        assert!(fused.values().iter().all(|v| v.is_finite() && v.abs() <= 1.0 + 1e-12));
        state = Some(next);
        prev = f.ego_pose;
    }
}
