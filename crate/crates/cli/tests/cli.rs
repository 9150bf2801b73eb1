use std::path::Path;
use std::process::{Command, Output};

use prism_core::io::write_prfm;
use prism_core::synth::smooth_image;

fn prism(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_prism")).args(args).output().expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn csv_rows(text: &str) -> Vec<Vec<String>> {
    text.lines().map(|l| l.split(',').map(str::to_owned).collect()).collect()
}

fn read_json(path: &Path) -> serde_json::Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn bench_emits_one_row_per_method_and_seed() {
    let o = prism(&["scan-bench", "--scans", "s1,ring", "--size", "64", "--seeds", "3"]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let rows = csv_rows(&stdout(&o));
    assert_eq!(rows[0].join(","), "scan_id,H,W,C,T_tokens,macs,wall_ns_median_of_k");
    assert_eq!(rows.len(), 1 + 2 * 3);
    assert!(rows[1..].iter().all(|r| r.len() == 7 && r[1] == "64" && r[2] == "64"));
}

#[test]
fn zero_size_and_unknown_scan_are_usage_errors() {
    assert_eq!(prism(&["scan-bench", "--size", "0"]).status.code(), Some(2));
    assert_eq!(prism(&["scan-bench", "--scans", "s22"]).status.code(), Some(2));
    assert_eq!(prism(&["scan-bench", "--reps", "4"]).status.code(), Some(2));
    assert_eq!(prism(&["rotation-stress", "--angles", ""]).status.code(), Some(2));
    assert_eq!(prism(&["occlusion-stress", "--grid-div", "3", "--seeds", "1"]).status.code(), Some(2));
    assert_eq!(prism(&["rotation-stress", "--delta-r", "-1"]).status.code(), Some(2));
    assert_eq!(prism(&["rotation-stress", "--center", "1"]).status.code(), Some(2));
}

#[test]
fn filtering_cuts_ring_macs_on_half_dead_inputs() {
    let o =
        prism(&["scan-bench", "--scans", "ring", "--pcf", "mean,off", "--half-dead", "--size", "16", "--seeds", "2"]);
    assert_eq!(o.status.code(), Some(0));
    let rows = csv_rows(&stdout(&o));
    for pair in rows[1..].chunks(2) {
        assert_eq!(pair[0][0], "ring+pcf_mean");
        assert_eq!(pair[1][0], "ring");
        let (mean, off): (u64, u64) = (pair[0][5].parse().unwrap(), pair[1][5].parse().unwrap());
        assert!(mean < off, "{mean} vs {off}");
    }
}

#[test]
fn stress_runs_are_deterministic_and_write_manifests() {
    let dir = tempfile::tempdir().unwrap();
    for cmd in ["rotation-stress", "occlusion-stress"] {
        let mut bodies = Vec::new();
        for run in 0..2 {
            let out = dir.path().join(format!("{cmd}-{run}.csv"));
            let o = prism(&[cmd, "--seeds", "3", "--size", "16", "--seed", "7", "--out", out.to_str().unwrap()]);
            assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
            assert!(o.stdout.is_empty());
            bodies.push(std::fs::read_to_string(&out).unwrap());

            let m = read_json(&dir.path().join(format!("{cmd}-{run}.csv.manifest.json")));
            assert_eq!(m["subcommand"], cmd);
            assert_eq!(m["seeds"], serde_json::json!([7, 8, 9]));
            assert_eq!(m["config"]["size"], 16);
            assert_eq!(m["config"]["seed"], 7);
        }
        assert_eq!(bodies[0], bodies[1]);
    }
}

#[test]
fn rotation_by_zero_leaves_every_method_unchanged() {
    let o = prism(&["rotation-stress", "--angles", "0", "--seeds", "2", "--size", "16"]);
    let rows = csv_rows(&stdout(&o));
    assert_eq!(rows[0].join(","), "method,angle,seed,deviation,mean_diff,win_fraction");
    let per_seed: Vec<_> = rows[1..].iter().filter(|r| r[2] != "all").collect();
    assert_eq!(per_seed.len(), 4 * 2);
    assert!(per_seed.iter().all(|r| r[3] == "0"));
}

#[test]
fn memoryless_ring_ignores_quarter_turns() {
    let o = prism(&["rotation-stress", "--angles", "90", "--memoryless", "--scans", "s1,ring", "--seeds", "3"]);
    assert_eq!(o.status.code(), Some(0));
    for r in csv_rows(&stdout(&o))[1..].iter().filter(|r| r[2] != "all") {
        let dev: f64 = r[3].parse().unwrap();
        match r[0].as_str() {
            "ring" => assert!(dev <= 1e-10, "{dev}"),
            _ => assert!(dev > 0.0),
        }
    }
}

#[test]
fn bench_counts_do_not_depend_on_the_run() {
    let strip =
        |o: Output| -> Vec<String> { stdout(&o).lines().map(|l| l.rsplit_once(',').unwrap().0.to_owned()).collect() };
    let args = ["scan-bench", "--scans", "s3,s21,ring", "--size", "12", "--seeds", "2"];
    assert_eq!(strip(prism(&args)), strip(prism(&args)));
}

#[test]
fn verify_flags_a_perturbed_kernel() {
    let o = prism(&["verify", "--only", "2", "--perturb-kernel"]);
    assert_eq!(o.status.code(), Some(1));
    let text = stdout(&o);
    assert!(text.starts_with("FAIL 2. gradient correctness"), "{text}");
    assert!(String::from_utf8_lossy(&o.stderr).contains("gradient correctness"));

    let o = prism(&["verify", "--only", "3,8"]);
    assert_eq!(o.status.code(), Some(0));
    let text = stdout(&o);
    assert!(text.lines().take(2).all(|l| l.starts_with("PASS") && l.contains("cases=")));
    assert!(text.ends_with("2 of 2 criteria passed\n"));

    assert_eq!(prism(&["verify", "--only", "9"]).status.code(), Some(2));
}

#[test]
fn backbone_demo_prints_class_scores() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("image.prfm");
    write_prfm(&input, &smooth_image(32, 32, 3, 5).unwrap()).unwrap();
    let config = dir.path().join("toy.cfg");
    std::fs::write(&config, "classes = 4\nstages.channels = 4,8,8,16\nffn = on\n").unwrap();

    let run =
        || prism(&["backbone-demo", input.to_str().unwrap(), "--config", config.to_str().unwrap(), "--seed", "3"]);
    let o = run();
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let rows = csv_rows(&stdout(&o));
    assert_eq!(rows[0].join(","), "class,score");
    assert_eq!(rows.len(), 1 + 4);
    assert!(rows[1..].iter().all(|r| r[1].parse::<f64>().unwrap().is_finite()));
    assert_eq!(stdout(&run()), stdout(&o));

    let other = prism(&["backbone-demo", input.to_str().unwrap(), "--config", config.to_str().unwrap(), "--seed", "4"]);
    assert_ne!(stdout(&other), stdout(&o));
}

#[test]
fn backbone_demo_rejects_bad_inputs() {
    let dir = tempfile::tempdir().unwrap();
    let junk = dir.path().join("junk.prfm");
    std::fs::write(&junk, b"PRFMxx").unwrap();
    assert_eq!(prism(&["backbone-demo", junk.to_str().unwrap()]).status.code(), Some(2));

    let missing = dir.path().join("absent.prfm");
    assert_eq!(prism(&["backbone-demo", missing.to_str().unwrap()]).status.code(), Some(2));

    // wrong channel count for the default backbone
    let four = dir.path().join("four.prfm");
    write_prfm(&four, &smooth_image(32, 32, 4, 0).unwrap()).unwrap();
    assert_eq!(prism(&["backbone-demo", four.to_str().unwrap()]).status.code(), Some(2));

    let bad_cfg = dir.path().join("bad.cfg");
    std::fs::write(&bad_cfg, "patchify = four\n").unwrap();
    let o = prism(&["backbone-demo", four.to_str().unwrap(), "--config", bad_cfg.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("line 1"));
}
