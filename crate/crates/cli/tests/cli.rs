use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use semnav::episodes;
use semnav::infer::SupportSet;

fn semnav(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_semnav"))
        .current_dir(dir)
        .env("SEMNAV_OUT_DIR", dir.join("default-out"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(dir: &Path, args: &[&str]) -> String {
    let out = semnav(dir, args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

/// Easy-preset scenes plus train/eval episodes inside `dir`.
fn fixture(dir: &Path) {
    ok(dir, &["--easy", "scene-gen", "--count", "3", "--out", "sc"]);
    ok(
        dir,
        &[
            "--easy",
            "episodes",
            "--scenes",
            "sc",
            "--count",
            "12",
            "--out",
            "train.json",
        ],
    );
    ok(
        dir,
        &[
            "--easy",
            "episodes",
            "--scenes",
            "sc",
            "--count",
            "10",
            "--split",
            "eval",
            "--out",
            "eval.json",
        ],
    );
}

fn dir_bytes(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<_> = fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (e.file_name().into_string().unwrap(), fs::read(e.path()).unwrap())
        })
        .collect();
    files.sort();
    files
}

#[test]
fn scene_gen_is_byte_identical_across_runs() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    ok(d, &["--seed", "1", "scene-gen", "--count", "10", "--out", "a"]);
    ok(d, &["--seed", "1", "scene-gen", "--count", "10", "--out", "b"]);
    let a = dir_bytes(&d.join("a"));
    assert_eq!(a.len(), 11);
    assert_eq!(a, dir_bytes(&d.join("b")));
}

#[test]
fn scene_gen_zero_count_writes_empty_manifest() {
    let tmp = tempfile::tempdir().unwrap();
    ok(tmp.path(), &["scene-gen", "--count", "0", "--out", "none"]);
    let text = fs::read_to_string(tmp.path().join("none/manifest.json")).unwrap();
    assert!(text.contains("\"scenes\": []"), "{text}");
}

#[test]
fn scene_gen_into_unwritable_path_names_it() {
    let tmp = tempfile::tempdir().unwrap();
    fs::write(tmp.path().join("blocker"), "x").unwrap();
    let out = semnav(tmp.path(), &["scene-gen", "--count", "1", "--out", "blocker/scenes"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("blocker"), "{}", stderr(&out));
}

#[test]
fn default_output_dir_comes_from_the_environment() {
    let tmp = tempfile::tempdir().unwrap();
    ok(tmp.path(), &["--easy", "scene-gen", "--count", "1"]);
    assert!(tmp.path().join("default-out/scenes/manifest.json").exists());
}

#[test]
fn entropy_selection_has_lower_goal_entropy_than_random() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    ok(d, &["--easy", "scene-gen", "--count", "3", "--out", "sc"]);
    let mean = |select: &str| {
        let file = format!("{select}.json");
        ok(
            d,
            &[
                "--easy", "episodes", "--scenes", "sc", "--count", "30", "--select", select, "--out", &file,
            ],
        );
        let eps = episodes::load_episodes(&d.join(&file)).unwrap();
        assert!(d.join(format!("{select}_goal_dist.csv")).exists());
        eps.iter().map(|e| e.mean_goal_entropy()).sum::<f64>() / eps.len() as f64
    };
    assert!(mean("entropy") < mean("random"));
}

#[test]
fn views_and_pitch_set_the_candidate_grid() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    ok(d, &["--easy", "scene-gen", "--count", "2", "--out", "sc"]);
    ok(
        d,
        &[
            "--easy", "episodes", "--scenes", "sc", "--count", "5", "--views", "12", "--pitch", "3", "--out", "e.json",
        ],
    );
    for ep in episodes::load_episodes(&d.join("e.json")).unwrap() {
        assert_eq!(ep.all_candidates.len(), 36);
    }
}

#[test]
fn missing_scenes_fail() {
    let tmp = tempfile::tempdir().unwrap();
    let out = semnav(tmp.path(), &["episodes", "--scenes", "absent", "--count", "3"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("absent"));
}

#[test]
fn train_is_reproducible_single_threaded() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    fixture(d);
    for out in ["r1", "r2"] {
        ok(
            d,
            &[
                "--easy",
                "--threads",
                "1",
                "train",
                "--variant",
                "zson",
                "--scenes",
                "sc",
                "--episodes",
                "train.json",
                "--steps",
                "2048",
                "--out",
                out,
            ],
        );
    }
    assert_eq!(
        fs::read(d.join("r1/final.json")).unwrap(),
        fs::read(d.join("r2/final.json")).unwrap()
    );
    assert_eq!(
        fs::read(d.join("r1/progress.csv")).unwrap(),
        fs::read(d.join("r2/progress.csv")).unwrap()
    );
}

#[test]
fn bad_config_is_a_usage_error() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    fs::write(d.join("bad.toml"), "[agent]\nspm_dim = 128\n").unwrap();
    let out = semnav(d, &["--config", "bad.toml", "scene-gen", "--count", "1"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("spm_dim"), "{}", stderr(&out));

    let out = semnav(d, &["--no-such-flag"]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn expanded_eval_requires_a_support_set() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    fixture(d);
    let out = semnav(
        d,
        &[
            "--easy",
            "eval",
            "--ckpt",
            "oracle",
            "--scenes",
            "sc",
            "--episodes",
            "eval.json",
            "--goal-mode",
            "text-expanded",
        ],
    );
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("--support-set"));
}

#[test]
fn oracle_eval_succeeds_and_is_reproducible() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    fixture(d);
    let stdout = ok(
        d,
        &[
            "--easy",
            "eval",
            "--ckpt",
            "oracle",
            "--scenes",
            "sc",
            "--episodes",
            "eval.json",
            "--out",
            "o1",
        ],
    );
    assert!(stdout.contains("SR=1.0000"), "{stdout}");
    let spl: f64 = stdout
        .split("SPL=")
        .nth(1)
        .unwrap()
        .split_whitespace()
        .next()
        .unwrap()
        .parse()
        .unwrap();
    assert!((0.9..=1.0).contains(&spl), "{spl}");
    ok(
        d,
        &[
            "--easy",
            "eval",
            "--ckpt",
            "oracle",
            "--scenes",
            "sc",
            "--episodes",
            "eval.json",
            "--out",
            "o2",
        ],
    );
    assert_eq!(dir_bytes(&d.join("o1")), dir_bytes(&d.join("o2")));
}

#[test]
fn trained_checkpoint_evaluates_in_every_goal_mode() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    fixture(d);
    ok(
        d,
        &["--easy", "support", "--episodes", "train.json", "--out", "sup.json"],
    );
    ok(
        d,
        &[
            "--easy",
            "train",
            "--variant",
            "psl",
            "--scenes",
            "sc",
            "--episodes",
            "train.json",
            "--steps",
            "2048",
            "--checkpoint-every",
            "1",
            "--log-trajectories",
            "--out",
            "tr",
        ],
    );
    assert!(d.join("tr/ckpt_000001.json").exists());
    assert!(
        fs::read_to_string(d.join("tr/trajectories.jsonl"))
            .unwrap()
            .lines()
            .count()
            > 0
    );
    for mode in ["image", "text", "text-expanded"] {
        let stdout = ok(
            d,
            &[
                "--easy",
                "eval",
                "--ckpt",
                "tr/final.json",
                "--scenes",
                "sc",
                "--episodes",
                "eval.json",
                "--goal-mode",
                mode,
                "--support-set",
                "sup.json",
                "--out",
                "ev",
            ],
        );
        assert!(stdout.contains(&format!("mode={mode} ")), "{stdout}");
    }
}

#[test]
fn support_with_lambda_one_keeps_every_distinct_view() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    fixture(d);
    ok(
        d,
        &[
            "--easy",
            "support",
            "--episodes",
            "train.json",
            "--lambda",
            "1.0",
            "--out",
            "all.json",
        ],
    );
    let set = SupportSet::load(&d.join("all.json")).unwrap();
    let eps = episodes::load_episodes(&d.join("train.json")).unwrap();
    let mut distinct: Vec<Vec<f32>> = Vec::new();
    for ep in &eps {
        for k in 0..ep.goal_views.len() {
            let v = ep.goal_view(k).embedding.values().to_vec();
            if !distinct.contains(&v) {
                distinct.push(v);
            }
        }
    }
    assert_eq!(set.len(), distinct.len());
}

#[test]
fn gap_closure_reports_expanded_above_text() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    fixture(d);
    ok(
        d,
        &["--easy", "support", "--episodes", "train.json", "--out", "sup.json"],
    );
    let stdout = ok(
        d,
        &[
            "--easy",
            "diagnose",
            "gap-closure",
            "--episodes",
            "eval.json",
            "--support-set",
            "sup.json",
            "--dump",
            "emb.jsonl",
        ],
    );
    let field = |name: &str| -> f64 {
        stdout
            .split(&format!("{name} "))
            .nth(1)
            .unwrap()
            .split_whitespace()
            .next()
            .unwrap()
            .parse()
            .unwrap()
    };
    assert!(field("expanded") >= field("text"), "{stdout}");
    assert_eq!(fs::read_to_string(d.join("emb.jsonl")).unwrap().lines().count(), 30);
}

#[test]
fn random_selection_is_more_ambiguous() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    ok(d, &["scene-gen", "--count", "4", "--out", "sc"]);
    let fraction = |select: &str| {
        let file = format!("{select}.json");
        ok(
            d,
            &[
                "episodes", "--scenes", "sc", "--count", "60", "--select", select, "--out", &file,
            ],
        );
        let stdout = ok(
            d,
            &[
                "diagnose",
                "goal-dist",
                "--episodes",
                &file,
                "--out",
                &format!("{select}.csv"),
            ],
        );
        let f: f64 = stdout
            .split("ambiguous fraction ")
            .nth(1)
            .unwrap()
            .trim()
            .parse()
            .unwrap();
        f
    };
    let (e, r) = (fraction("entropy"), fraction("random"));
    assert!(r > e, "random {r} vs entropy {e}");
}

#[test]
fn version_prints_build_metadata() {
    let tmp = tempfile::tempdir().unwrap();
    let out = semnav(tmp.path(), &["--version"]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.contains(env!("CARGO_PKG_VERSION")));
}
