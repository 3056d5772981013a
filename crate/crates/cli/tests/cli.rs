use std::path::Path;
use std::process::{Command, Output};

const TINY: &str = r#"
[model]
blocks = 1
dim = 24
heads = 2
mlp_hidden = 32

[schedule]
sample_steps = 5

[data]
extra_scenes = 0

[train]
steps = 5

[invert]
fixed_point_iters = 0

[edit]
ladder = [0.9, 0.5]
"#;

fn workspace(root: &Path) -> std::path::PathBuf {
    let cfg = root.join("tiny.toml");
    let text = format!(
        "{TINY}\n[paths]\ncorpus = \"{0}/corpus\"\ncheckpoints = \"{0}/checkpoints\"\nruns = \"{0}/runs\"\n",
        root.display()
    );
    std::fs::write(&cfg, text).unwrap();
    cfg
}

fn vfxaug(cfg: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_vfxaug"))
        .arg("--config")
        .arg(cfg)
        .args(args)
        .output()
        .unwrap()
}

fn ok(out: &Output) -> String {
    assert!(
        out.status.success(),
        "stdout: {}\nstderr: {}",
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

#[test]
fn missing_stages_are_dependency_errors() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = workspace(tmp.path());
    let out = vfxaug(&cfg, &["invert", "--scene", "scene_01"]);
    assert_eq!(out.status.code(), Some(3));
    assert!(stderr(&out).contains("run `corpus-gen` first"));
    assert!(stderr(&out).contains("error-category: dependency"));

    ok(&vfxaug(&cfg, &["corpus-gen"]));
    let out = vfxaug(&cfg, &["edit", "--scene", "scene_01"]);
    assert_eq!(out.status.code(), Some(3));
    assert!(stderr(&out).contains("run `invert` first"));

    let out = vfxaug(&cfg, &["report"]);
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn existing_runs_need_force() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = workspace(tmp.path());
    ok(&vfxaug(&cfg, &["corpus-gen"]));
    let out = vfxaug(&cfg, &["corpus-gen"]);
    assert_eq!(out.status.code(), Some(4));
    assert!(stderr(&out).contains("--force"));
    ok(&vfxaug(&cfg, &["--force", "corpus-gen"]));
}

#[test]
fn bad_config_and_usage_exit_with_code_two() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("bad.toml");
    std::fs::write(&cfg, "[edit]\nladdr = [0.5]\n").unwrap();
    let out = vfxaug(&cfg, &["corpus-gen"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("error-category: config"));

    let cfg = workspace(tmp.path());
    let out = vfxaug(&cfg, &["ablate", "--scene", "scene_01", "--mode", "nonsense"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn pipeline_end_to_end_with_tiny_model() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = workspace(tmp.path());
    let root = tmp.path();
    ok(&vfxaug(&cfg, &["corpus-gen"]));
    assert!(root.join("corpus/scene_01/frames/frame_00000.png").exists());
    assert!(root.join("corpus/scene_01/scene.toml").exists());

    let out = ok(&vfxaug(&cfg, &["train"]));
    assert!(out.contains("trained 5 steps"));
    assert!(root.join("checkpoints/toy/loss.csv").exists());

    ok(&vfxaug(&cfg, &["invert", "--scene", "scene_01"]));
    assert!(root.join("runs/invert/scene_01/cache.bundle").exists());

    let out = vfxaug(&cfg, &["ablate", "--scene", "scene_01", "--mode", "no_anchor", "--strength", "0.3"]);
    assert_eq!(out.status.code(), Some(2));

    ok(&vfxaug(&cfg, &["edit", "--scene", "scene_01"]));
    let edit = root.join("runs/edit/scene_01");
    for f in ["output/frame_00000.png", "mask/frame_00000.png", "plan.toml", "report.toml", "manifest.toml", "config.toml"] {
        assert!(edit.join(f).exists(), "{f}");
    }
    let iters: Vec<_> = std::fs::read_dir(edit.join("iterations")).unwrap().collect();
    assert_eq!(iters.len(), 2);

    ok(&vfxaug(&cfg, &["ablate", "--scene", "scene_01", "--mode", "no_anchor"]));
    ok(&vfxaug(&cfg, &["ablate", "--scene", "scene_01", "--mode", "sdedit_low", "--strength", "0.3"]));
    assert!(root.join("runs/ablate/no_anchor/scene_01/report.toml").exists());

    let table = ok(&vfxaug(&cfg, &["report"]));
    assert!(table.contains("Full method"));
    assert!(table.contains("w/o AnchorExtAttn"));
    assert!(table.contains("SDEdit (0.3)"));
    assert!(root.join("runs/report/table.md").exists());
}

#[test]
fn eval_of_identical_videos_has_unit_ssim() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = workspace(tmp.path());
    ok(&vfxaug(&cfg, &["corpus-gen"]));
    let frames = tmp.path().join("corpus/scene_02/frames");
    let frames = frames.to_str().unwrap();
    let out = ok(&vfxaug(
        &cfg,
        &["eval", "--name", "same", "--original", frames, "--edited", frames, "--prompt", "a red ball", "--object", "red ball"],
    ));
    assert!(out.contains("same"));
    let report = std::fs::read_to_string(tmp.path().join("runs/eval/same/report.toml")).unwrap();
    let v: toml::Value = toml::from_str(&report).unwrap();
    assert_eq!(v["masked_ssim"].as_float().unwrap(), 1.0);
}
