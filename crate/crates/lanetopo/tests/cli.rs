use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn lanetopo(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_lanetopo"))
        .args(args)
        .current_dir(dir)
        .env_remove("SCORE_CONFIG")
        .output()
        .expect("spawn lanetopo")
}

fn ok(dir: &Path, args: &[&str]) -> String {
    let out = lanetopo(dir, args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

fn json(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

const OSM: &str = r#"<?xml version="1.0"?>
<osm version="0.6">
  <node id="1" lat="48.0000" lon="11.0000"/>
  <node id="2" lat="48.0002" lon="11.0000"/>
  <node id="3" lat="48.0002" lon="11.0003"/>
  <node id="4" lat="47.9998" lon="11.0001"/>
  <way id="10"><nd ref="4"/><nd ref="1"/><nd ref="2"/><tag k="highway" v="primary"/></way>
  <way id="11"><nd ref="2"/><nd ref="3"/><tag k="highway" v="footway"/></way>
</osm>"#;

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    assert_eq!(lanetopo(d, &["--help"]).status.code(), Some(0));
    assert_eq!(lanetopo(d, &["--version"]).status.code(), Some(0));
    assert_eq!(lanetopo(d, &[]).status.code(), Some(2));
    assert_eq!(lanetopo(d, &["frobnicate"]).status.code(), Some(2));
    assert_eq!(lanetopo(d, &["synth", "--template", "roundabout", "--out", "x.json"]).status.code(), Some(2));
    let missing = lanetopo(d, &["perturb", "--scene", "nope.json", "--out", "p.json"]);
    assert_eq!(missing.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&missing.stderr).contains("nope.json"));
    fs::write(d.join("bad.json"), r#"{"frames": [{"lane_segments": [{"centerline": [[0,0,0]]}]}]}"#).unwrap();
    assert_eq!(lanetopo(d, &["render", "bad.json", "out.svg"]).status.code(), Some(1));
    fs::write(d.join("extra.json"), r#"{"frames": [], "oops": 1}"#).unwrap();
    assert_eq!(lanetopo(d, &["resample", "extra.json", "--out", "r.json"]).status.code(), Some(1));
}

#[test]
fn synth_is_deterministic_and_valid() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(d, &["synth", "--template", "merge", "--seed", "11", "--out", "a.json"]);
    ok(d, &["synth", "--template", "merge", "--seed", "11", "--out", "b.json"]);
    assert_eq!(fs::read(d.join("a.json")).unwrap(), fs::read(d.join("b.json")).unwrap());
    let doc = json(&d.join("a.json"));
    assert_eq!(doc["frames"].as_array().unwrap().len(), 10);
    assert!(!doc["frames"][0]["lane_segments"].as_array().unwrap().is_empty());
    // A generated scene loads back through validation.
    ok(d, &["resample", "a.json", "--out", "r.json"]);
}

#[test]
fn perturb_is_seeded() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(d, &["synth", "--template", "split", "--out", "s.json"]);
    let args = |out: &'static str, seed: &'static str| {
        ["perturb", "--scene", "s.json", "--out", out, "--seed", seed, "--jitter", "0.4", "--sd-jitter", "1"]
    };
    ok(d, &args("p1.json", "5"));
    ok(d, &args("p2.json", "5"));
    ok(d, &args("p3.json", "6"));
    let read = |n: &str| fs::read(d.join(n)).unwrap();
    assert_eq!(read("p1.json"), read("p2.json"));
    assert_ne!(read("p1.json"), read("p3.json"));
}

#[test]
fn topo_fuse_zero_beta_is_identity() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(d, &["synth", "--template", "intersection", "--out", "s.json"]);
    ok(d, &["perturb", "--scene", "s.json", "--out", "p.json", "--conf-noise", "0.3", "--seed", "2"]);
    ok(d, &["topo-fuse", "--input", "p.json", "--out", "f0.json", "--beta", "0"]);
    ok(d, &["topo-fuse", "--input", "p.json", "--out", "f8.json"]);
    let (p, f0, f8) = (json(&d.join("p.json")), json(&d.join("f0.json")), json(&d.join("f8.json")));
    for i in 0..10 {
        assert_eq!(p["frames"][i]["adjacency"], f0["frames"][i]["adjacency"], "frame {i}");
        let rows = f8["frames"][i]["adjacency"].as_array().unwrap();
        for (r, row) in rows.iter().enumerate() {
            for (c, v) in row.as_array().unwrap().iter().enumerate() {
                let (fused, raw) = (v.as_f64().unwrap(), p["frames"][i]["adjacency"][r][c].as_f64().unwrap());
                assert!(fused >= raw && fused <= 1.0, "frame {i} ({r},{c}): {raw} -> {fused}");
            }
        }
    }
}

#[test]
fn eval_of_ground_truth_is_perfect() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    fs::create_dir(d.join("gt")).unwrap();
    for (t, s) in [("straight", "1"), ("turn_right", "2")] {
        ok(d, &["synth", "--template", t, "--seed", s, "--out", &format!("gt/{t}.json")]);
    }
    let summary = ok(d, &["eval", "--pred", "gt", "--gt", "gt", "--report", "r.json", "--workers", "2"]);
    assert!(summary.contains("OLUS") && summary.contains("100.0"), "{summary}");
    let r = json(&d.join("r.json"));
    assert_eq!(r["olus"], 1.0);
    assert_eq!(r["frames"], 20);
    assert_eq!(r["scenes"].as_array().unwrap().len(), 2);
    for key in ["det_ls", "det_ped", "det_b", "det_a", "det_te", "top_ll", "top_lt"] {
        assert_eq!(r[key], 1.0, "{key}");
    }
    assert!(!r["ap_table"].as_array().unwrap().is_empty());

    // Missing predictions score zero but keep the report well formed.
    fs::create_dir(d.join("empty")).unwrap();
    ok(d, &["eval", "--pred", "empty", "--gt", "gt", "--report", "z.json"]);
    let z = json(&d.join("z.json"));
    assert_eq!(z["det_ls"], 0.0);
    assert_eq!(z["olus"], 0.0);
}

#[test]
fn eval_is_independent_of_worker_count() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    fs::create_dir(d.join("gt")).unwrap();
    fs::create_dir(d.join("pred")).unwrap();
    for (t, s) in [("merge", "3"), ("intersection", "4"), ("turn_left", "5")] {
        ok(d, &["synth", "--template", t, "--seed", s, "--out", &format!("gt/{t}.json")]);
        let pred = format!("pred/{t}.json");
        let args = ["perturb", "--scene", &format!("gt/{t}.json"), "--out", &pred, "--seed", s];
        let mut all: Vec<&str> = args.to_vec();
        all.extend(["--jitter", "0.8", "--drop", "0.2", "--conf-noise", "0.3"]);
        ok(d, &all);
    }
    ok(d, &["eval", "--pred", "pred", "--gt", "gt", "--report", "one.json", "--workers", "1"]);
    ok(d, &["eval", "--pred", "pred", "--gt", "gt", "--report", "many.json", "--workers", "8"]);
    assert_eq!(fs::read(d.join("one.json")).unwrap(), fs::read(d.join("many.json")).unwrap());
    let r = json(&d.join("one.json"));
    let olus = r["olus"].as_f64().unwrap();
    assert!(olus > 0.0 && olus < 1.0, "{olus}");
}

#[test]
fn render_draws_every_segment() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(d, &["synth", "--template", "straight", "--out", "s.json"]);
    ok(d, &["render", "s.json", "s.svg", "--frame", "3"]);
    let frame = &json(&d.join("s.json"))["frames"][3];
    let n_seg = frame["lane_segments"].as_array().unwrap().len();
    let n_rb = frame["boundaries"].as_array().unwrap().len();
    let n_sd = frame["sd_map"].as_array().unwrap().len();
    let svg = fs::read_to_string(d.join("s.svg")).unwrap();
    assert_eq!(svg.matches("<path class=").count(), 3 * n_seg + n_rb + n_sd);
    let edges = frame["adjacency"].as_array().unwrap().iter().flat_map(|r| r.as_array().unwrap().clone());
    let n_edges = edges.filter(|v| v.as_f64().unwrap() >= 0.5).count();
    assert_eq!(svg.matches("marker-end=").count(), n_edges);
    ok(d, &["render", "s.json", "t.svg", "--frame", "3"]);
    assert_eq!(svg, fs::read_to_string(d.join("t.svg")).unwrap());
    assert_eq!(lanetopo(d, &["render", "s.json", "u.svg", "--frame", "99"]).status.code(), Some(1));
}

#[test]
fn osm_ingest_and_sd_sampling() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    fs::write(d.join("map.osm"), OSM).unwrap();
    ok(d, &["ingest-osm", "--osm", "map.osm", "--lat", "48.0", "--lon", "11.0", "--yaw", "0", "--out", "sd.json"]);
    let sd = json(&d.join("sd.json"));
    let classes: Vec<&str> = sd["elements"].as_array().unwrap().iter().map(|e| e["class"].as_str().unwrap()).collect();
    assert_eq!(classes, vec!["road", "sidewalk"]);
    let first = &sd["elements"][0]["points"];
    // Facing east, north is +y; the road starts south of the ego.
    assert!(first[0][1].as_f64().unwrap() < 0.0);
    ok(d, &["sample-sd", "--sd", "sd.json", "--out", "refs.json"]);
    let refs = json(&d.join("refs.json"));
    assert_eq!(refs["points"].as_array().unwrap().len(), 50);
    ok(d, &["sample-sd", "--sd", "sd.json", "--n-sd", "7", "--out", "refs7.json"]);
    let refs7 = json(&d.join("refs7.json"));
    assert_eq!(refs7["points"].as_array().unwrap().len(), 7);
    for p in refs7["points"].as_array().unwrap() {
        for v in p.as_array().unwrap() {
            assert!((0.0..=1.0).contains(&v.as_f64().unwrap()));
        }
    }
    fs::write(d.join("broken.osm"), "<osm>\n<way id=\"1\"><nd ref=\"9\"/><nd ref=\"8\"/></way>\n</osm>").unwrap();
    let out = lanetopo(d, &["ingest-osm", "--osm", "broken.osm", "--lat", "0", "--lon", "0", "--out", "x.json"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("line 2"), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn denoise_and_match() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(d, &["synth", "--template", "straight", "--out", "s.json"]);
    ok(d, &["denoise-gen", "--scene", "s.json", "--frame", "0", "--seed", "4", "--out", "dn.json"]);
    let dn = json(&d.join("dn.json"));
    let n_gt = json(&d.join("s.json"))["frames"][0]["lane_segments"].as_array().unwrap().len() as u64;
    assert_eq!(dn["n_gt"], n_gt);
    assert_eq!(dn["groups"], 60 / n_gt);
    assert_eq!(dn["n_dn"], (60 / n_gt) * n_gt);
    let total = dn["n_sd"].as_u64().unwrap() + dn["n_base"].as_u64().unwrap() + dn["n_dn"].as_u64().unwrap();
    let mask = dn["mask"].as_array().unwrap();
    assert_eq!(mask.len() as u64, total);
    assert!(mask.iter().all(|r| r.as_str().unwrap().len() as u64 == total));

    ok(d, &["match", "--gt", "s.json", "--pred", "s.json", "--out", "m.json"]);
    let m = json(&d.join("m.json"));
    for frame in m.as_array().unwrap() {
        for pair in frame["pairs"].as_array().unwrap() {
            assert_eq!(pair[0], pair[1]);
        }
    }
    ok(d, &["match", "--gt", "s.json", "--pred", "s.json", "--k", "3", "--out", "m3.json"]);
}

#[test]
fn resample_counts() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(d, &["synth", "--template", "turn_left", "--out", "t.json"]);
    ok(d, &["synth", "--template", "straight", "--out", "s.json"]);
    ok(d, &["resample", "t.json", "s.json", "--k", "4", "--out", "r.json"]);
    let r = json(&d.join("r.json"));
    let (turning, frames) = (r["turning"].as_u64().unwrap(), r["frames"].as_u64().unwrap());
    assert_eq!(frames, 20);
    assert!(turning > 0);
    assert_eq!(r["total"].as_u64().unwrap(), frames - turning + 4 * turning);
}

#[test]
fn config_file_and_environment() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    fs::write(d.join("map.osm"), OSM).unwrap();
    ok(d, &["ingest-osm", "--osm", "map.osm", "--lat", "48.0", "--lon", "11.0", "--out", "sd.json"]);
    fs::write(d.join("small.toml"), "[sd]\nn_sd = 12\n").unwrap();
    ok(d, &["--config", "small.toml", "sample-sd", "--sd", "sd.json", "--out", "a.json"]);
    assert_eq!(json(&d.join("a.json"))["points"].as_array().unwrap().len(), 12);

    let out = Command::new(env!("CARGO_BIN_EXE_lanetopo"))
        .args(["sample-sd", "--sd", "sd.json", "--out", "b.json"])
        .current_dir(d)
        .env("SCORE_CONFIG", "small.toml")
        .output()
        .unwrap();
    assert!(out.status.success());
    assert_eq!(json(&d.join("b.json"))["points"].as_array().unwrap().len(), 12);

    fs::write(d.join("score.toml"), "[sd]\nn_sd = 9\n").unwrap();
    ok(d, &["sample-sd", "--sd", "sd.json", "--out", "c.json"]);
    assert_eq!(json(&d.join("c.json"))["points"].as_array().unwrap().len(), 9);

    fs::write(d.join("bad.toml"), "[sd]\nn_sdd = 9\n").unwrap();
    assert_eq!(
        lanetopo(d, &["--config", "bad.toml", "sample-sd", "--sd", "sd.json", "--out", "x.json"]).status.code(),
        Some(1)
    );
    fs::write(d.join("range.toml"), "[topology]\nbeta = -1.0\n").unwrap();
    assert_eq!(lanetopo(d, &["--config", "range.toml", "synth", "--out", "x.json"]).status.code(), Some(1));
}
