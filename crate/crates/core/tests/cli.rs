use std::path::Path;
use std::process::{Command, Output};

use flowanim::config::KEYS;

fn flowanim(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_flowanim"))
        .args(args)
        .env_remove("FLOWANIM_DATA")
        .output()
        .expect("binary runs")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

// Static textured background with a moving water rectangle, so the eval
// static region is non-empty.
const SCENE: &str = r#"{
  "width": 32, "height": 32, "frame_count": 4, "seed": 3,
  "background": {
    "texture": {"base": [0.1, 0.2, 0.0], "amplitude": 0.5, "freq_x": 0.11, "freq_y": 0.07, "phase": 0.3},
    "motion": {"kind": "constant", "u": 0.0, "v": 0.0}
  },
  "regions": [{
    "class": "water",
    "geometry": {"kind": "rect", "x0": 0, "y0": 20, "x1": 32, "y1": 32},
    "texture": {"base": [-0.3, 0.0, 0.4], "amplitude": 0.4, "freq_x": 0.09, "freq_y": 0.13, "phase": 1.0},
    "motion": {"kind": "constant", "u": 1.0, "v": 0.0}
  }]
}"#;

#[test]
fn help_lists_every_key_with_default() {
    for args in [&["--help"][..], &["train", "--help"][..]] {
        let o = flowanim(args);
        assert!(o.status.success());
        let out = String::from_utf8_lossy(&o.stdout);
        for k in KEYS {
            assert!(out.contains(k.key) && out.contains(k.default), "{} missing from {args:?} help", k.key);
        }
    }
    assert!(flowanim(&["--version"]).status.success());
}

#[test]
fn usage_errors_exit_2() {
    for args in [&["bogus"][..], &["animate"][..], &["synth", "--toy", "2"][..]] {
        let o = flowanim(args);
        assert_eq!(o.status.code(), Some(2), "{args:?}");
        assert!(stderr(&o).starts_with("error[class=usage]: "), "{}", stderr(&o));
    }
    // No --data and no environment default.
    let dir = tempfile::tempdir().unwrap();
    let o = flowanim(&["train", "--out", p(&dir.path().join("m.ckpt"))]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn data_errors_exit_3() {
    let dir = tempfile::tempdir().unwrap();
    let o = flowanim(&["train", "--data", p(&dir.path().join("nope")), "--out", p(&dir.path().join("m.ckpt"))]);
    assert_eq!(o.status.code(), Some(3));
    assert!(stderr(&o).starts_with("error[class=data]: "));

    let bad = dir.path().join("bad.flo");
    std::fs::write(&bad, b"not a flow").unwrap();
    let o = flowanim(&["flowviz", "--flo", p(&bad), "--out", p(&dir.path().join("v.png"))]);
    assert_eq!(o.status.code(), Some(3));
}

#[test]
fn synth_train_animate_eval_pipeline() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path();
    let scene = root.join("scene.json");
    std::fs::write(&scene, SCENE).unwrap();
    let data = root.join("data");
    let o = flowanim(&["synth", "--scene", p(&scene), "--out", p(&data)]);
    assert!(o.status.success(), "{}", stderr(&o));
    let clip = data.join("clip_0000");
    assert!(clip.join("manifest.json").exists());

    let ckpt = root.join("m.ckpt");
    let o = flowanim(&[
        "train", "--data", p(&data), "--out", p(&ckpt), "--quiet", "--set", "stride=1", "--set", "max_steps=2",
        "--set", "c=4", "--set", "enc_widths=4,4", "--set", "gen_widths=4,6",
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(root.join("m.loss.csv").exists());

    let anim = root.join("anim");
    let o = flowanim(&[
        "animate", "--checkpoint", p(&ckpt), "--image", p(&clip.join("frames/frame_000000.png")),
        "--masks", p(&clip.join("masks/mask_000000.png")), "--ref", p(&clip), "--ref", p(&clip),
        "--assign", "water=2", "--speed", "water=0.5", "--steps", "3", "--out", p(&anim), "--viz",
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let frames = std::fs::read_dir(anim.join("frames")).unwrap().count();
    assert_eq!(frames, 4);
    let manifest: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(anim.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["checkpoint_sha256"].as_str().unwrap().len(), 64);

    let o = flowanim(&[
        "animate", "--checkpoint", p(&ckpt), "--image", p(&clip.join("frames/frame_000000.png")),
        "--masks", p(&clip.join("masks/mask_000000.png")), "--ref", p(&clip), "--assign", "water=3",
        "--out", p(&root.join("x")),
    ]);
    assert_eq!(o.status.code(), Some(2));

    let csv = root.join("metrics.csv");
    let o = flowanim(&["eval", "--generated", p(&clip), "--truth", p(&clip), "--out", p(&csv)]);
    assert!(o.status.success(), "{}", stderr(&o));
    let text = std::fs::read_to_string(&csv).unwrap();
    let row = text.lines().filter(|l| !l.starts_with('#')).nth(1).unwrap();
    assert!(row.contains(",99,") || row.contains(",99.0"), "{row}");

    let o = flowanim(&["flowviz", "--flo", p(&clip.join("flows/flow_000000.flo")), "--out", p(&root.join("v.png"))]);
    assert!(o.status.success(), "{}", stderr(&o));
}
