use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use fdd_cli::synthetic_template;
use fdd_core::evalkit::load_score_records;
use fdd_core::format::{load_template, save_template};
use fdd_core::{match_templates, CellMask, FddTemplate, GalleryIndex, Metadata, StoredTemplate};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn fdd(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_fdd"))
        .args(args)
        .env_remove("FDD_THREADS")
        .output()
        .expect("spawn fdd")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exited normally")
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// Oriented sinusoidal ridges on a grey background, as binary PGM.
fn write_ridge_pgm(path: &Path, side: usize, phase: f64) {
    let mut bytes = format!("P5\n{side} {side}\n255\n").into_bytes();
    let c = side as f64 / 2.0;
    for y in 0..side {
        for x in 0..side {
            let (dx, dy) = (x as f64 - c, y as f64 - c);
            let r = (dx * dx + dy * dy).sqrt();
            let v = if r < 0.4 * side as f64 {
                128.0 + 100.0 * ((dx * 0.8 + dy * 0.6) * 0.6 + phase).sin()
            } else {
                200.0
            };
            bytes.push(v.round() as u8);
        }
    }
    fs::write(path, bytes).unwrap();
}

fn save_float(path: &Path, t: FddTemplate<f32>) {
    save_template(path, &StoredTemplate::Float(t)).unwrap();
}

fn half_mask(left: bool) -> CellMask {
    CellMask::from_fn(|_, col| (col < 8) == left)
}

fn masked(c: usize, mask: CellMask, seed: u64) -> FddTemplate<f32> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let full = synthetic_template(c, &mut rng);
    let flat = full
        .flatten()
        .iter()
        .enumerate()
        .map(|(i, v)| {
            if mask.get_index(i % 256) {
                if *v == 0.0 {
                    0.5
                } else {
                    *v
                }
            } else {
                0.0
            }
        })
        .collect();
    FddTemplate::from_flat(c, flat, mask, Metadata::new()).unwrap()
}

struct Weights {
    _dir: tempfile::TempDir,
    path: PathBuf,
}

fn init_weights(c: usize) -> Weights {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("w.fddw");
    let o = fdd(&["init-weights", "-c", &c.to_string(), "--seed", "3", "--out", s(&path)]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    Weights { _dir: dir, path }
}

#[test]
fn extraction_is_reloadable_and_reproducible() {
    let w = init_weights(2);
    let dir = tempfile::tempdir().unwrap();
    let img = dir.path().join("finger.pgm");
    write_ridge_pgm(&img, 320, 0.0);
    let out1 = dir.path().join("a");
    let out2 = dir.path().join("b");
    for out in [&out1, &out2] {
        let o = fdd(&[
            "extract",
            s(&img),
            "--weights",
            s(&w.path),
            "-c",
            "2",
            "--identity-pose",
            "--out-dir",
            s(out),
        ]);
        assert_eq!(code(&o), 0, "{}", stderr(&o));
    }
    let a = fs::read(out1.join("finger.fdd")).unwrap();
    let b = fs::read(out2.join("finger.fdd")).unwrap();
    assert_eq!(a, b);
    let t = load_template::<f32>(&out1.join("finger.fdd")).unwrap();
    assert_eq!(t.c(), 2);
    assert_eq!(t.meta().get("source").map(String::as_str), Some("finger.pgm"));
}

#[test]
fn extraction_uses_pose_sidecars() {
    let w = init_weights(1);
    let dir = tempfile::tempdir().unwrap();
    let img = dir.path().join("f.pgm");
    write_ridge_pgm(&img, 300, 1.0);
    let out = dir.path().join("out");
    let missing = fdd(&[
        "extract",
        s(&img),
        "--weights",
        s(&w.path),
        "-c",
        "1",
        "--out-dir",
        s(&out),
    ]);
    assert_eq!(code(&missing), 3);
    assert!(stderr(&missing).contains("pose"));

    fs::write(dir.path().join("f.pose"), "150 150 12.5\n").unwrap();
    let ok = fdd(&[
        "extract",
        s(&img),
        "--weights",
        s(&w.path),
        "-c",
        "1",
        "--out-dir",
        s(&out),
    ]);
    assert_eq!(code(&ok), 0, "{}", stderr(&ok));
    assert!(out.join("f.fdd").is_file());
}

#[test]
fn one_corrupt_image_is_a_partial_failure() {
    let w = init_weights(1);
    let dir = tempfile::tempdir().unwrap();
    let mut images = Vec::new();
    for i in 0..10 {
        let p = dir.path().join(format!("img{i}.pgm"));
        if i == 4 {
            fs::write(&p, b"P5\n300 300\n255\nshort").unwrap();
        } else {
            write_ridge_pgm(&p, 260, i as f64);
        }
        images.push(p);
    }
    let out = dir.path().join("out");
    let mut args = vec![
        "extract",
        "--weights",
        s(&w.path),
        "-c",
        "1",
        "--identity-pose",
        "--out-dir",
        s(&out),
    ];
    args.extend(images.iter().map(|p| s(p)));
    let o = fdd(&args);
    assert_eq!(code(&o), 1, "{}", stderr(&o));
    assert!(stderr(&o).contains("img4.pgm"));
    let produced = fs::read_dir(&out).unwrap().count();
    assert_eq!(produced, 9);
    assert!(!out.join("img4.fdd").exists());
}

#[test]
fn match_agrees_with_the_library() {
    let dir = tempfile::tempdir().unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let a = synthetic_template(3, &mut rng);
    let b = synthetic_template(3, &mut rng);
    let (pa, pb) = (dir.path().join("a.fdd"), dir.path().join("b.fdd"));
    save_float(&pa, a.clone());
    save_float(&pb, b.clone());

    let o = fdd(&["match", s(&pa), s(&pa)]);
    assert_eq!(code(&o), 0);
    assert_eq!(stdout(&o).trim(), "1.000000");

    let o = fdd(&["match", "--raw", s(&pa), s(&pb)]);
    assert_eq!(code(&o), 0);
    let got: f64 = stdout(&o).trim().parse().unwrap();
    assert_eq!(got, match_templates(&a, &b).unwrap().score);

    let o = fdd(&["match", "--binary", s(&pa), s(&pa)]);
    assert_eq!(stdout(&o).trim(), "1.000000");
}

#[test]
fn disjoint_masks_score_zero_with_a_warning() {
    let dir = tempfile::tempdir().unwrap();
    let (pa, pb) = (dir.path().join("l.fdd"), dir.path().join("r.fdd"));
    save_float(&pa, masked(2, half_mask(true), 1));
    save_float(&pb, masked(2, half_mask(false), 2));
    let o = fdd(&["match", s(&pa), s(&pb)]);
    assert_eq!(code(&o), 0);
    assert_eq!(stdout(&o).trim(), "0.000000");
    assert!(stderr(&o).contains("warning"));
}

#[test]
fn enroll_then_identify_finds_the_probe_first() {
    let dir = tempfile::tempdir().unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let mut paths = Vec::new();
    for i in 0..12 {
        let p = dir.path().join(format!("t{i}.fdd"));
        save_float(&p, synthetic_template(2, &mut rng));
        paths.push(p);
    }
    let gallery = dir.path().join("g.fddg");
    let mut args = vec!["enroll", s(&gallery)];
    args.extend(paths.iter().map(|p| s(p)));
    let o = fdd(&args);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert!(!fdd_core::GalleryLock::lock_path(&gallery).exists());

    let o = fdd(&["identify", s(&paths[7]), s(&gallery), "--top", "3"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let text = stdout(&o);
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 4);
    assert_eq!(lines[0], "rank,id,score");
    assert_eq!(lines[1], "1,t7,1.000000");
}

#[test]
fn empty_gallery_prints_only_the_header() {
    let dir = tempfile::tempdir().unwrap();
    let gallery = dir.path().join("empty.fddg");
    GalleryIndex::<f32>::new(2).unwrap().save(&gallery).unwrap();
    let probe = dir.path().join("p.fdd");
    save_float(&probe, synthetic_template(2, &mut ChaCha8Rng::seed_from_u64(0)));
    let o = fdd(&["identify", s(&probe), s(&gallery)]);
    assert_eq!(code(&o), 0);
    assert_eq!(stdout(&o), "rank,id,score\n");
    assert!(stderr(&o).contains("empty"));
}

#[test]
fn a_held_lock_blocks_enrollment() {
    let dir = tempfile::tempdir().unwrap();
    let gallery = dir.path().join("g.fddg");
    let t = dir.path().join("t.fdd");
    save_float(&t, synthetic_template(1, &mut ChaCha8Rng::seed_from_u64(4)));
    fs::write(fdd_core::GalleryLock::lock_path(&gallery), b"").unwrap();
    let o = fdd(&["enroll", s(&gallery), s(&t)]);
    assert_eq!(code(&o), 3);
    assert!(!gallery.exists());
}

#[test]
fn corrupt_inputs_exit_with_code_three() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.fdd");
    fs::write(&bad, b"NOPE0000").unwrap();
    let o = fdd(&["match", s(&bad), s(&bad)]);
    assert_eq!(code(&o), 3);
    assert!(stderr(&o).starts_with("error:"));
    let o = fdd(&["match", s(&dir.path().join("absent.fdd")), s(&bad)]);
    assert_eq!(code(&o), 3);
}

#[test]
fn usage_errors_exit_with_code_two() {
    assert_eq!(code(&fdd(&[])), 2);
    assert_eq!(code(&fdd(&["frobnicate"])), 2);
    assert_eq!(code(&fdd(&["manifest", "-c", "0"])), 2);
    assert_eq!(code(&fdd(&["bench", "-n", "0"])), 2);
    assert_eq!(code(&fdd(&["--help"])), 0);

    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a.fdd");
    let b = dir.path().join("b.fdd");
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    save_float(&a, synthetic_template(1, &mut rng));
    save_float(&b, synthetic_template(2, &mut rng));
    assert_eq!(code(&fdd(&["match", s(&a), s(&b)])), 2);
}

fn write_scores(path: &Path, rows: &[(&str, &str, f64, bool)]) {
    let mut text = String::from("probe_id,gallery_id,score,label\n");
    for (p, g, sc, gen) in rows {
        text.push_str(&format!("{p},{g},{sc},{}\n", if *gen { "genuine" } else { "impostor" }));
    }
    fs::write(path, text).unwrap();
}

fn separable_rows() -> Vec<(String, String, f64, bool)> {
    let mut rows = Vec::new();
    for p in 0..20 {
        for g in 0..20 {
            let genuine = p == g;
            let score = if genuine {
                0.9 + p as f64 * 1e-3
            } else {
                0.1 + (p * 20 + g) as f64 * 1e-4
            };
            rows.push((format!("p{p}"), format!("g{g}"), score, genuine));
        }
    }
    rows
}

#[test]
fn perfect_separation_evaluates_to_one() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("scores.csv");
    let rows = separable_rows();
    let refs: Vec<_> = rows
        .iter()
        .map(|(p, g, sc, gen)| (p.as_str(), g.as_str(), *sc, *gen))
        .collect();
    write_scores(&path, &refs);
    let report = dir.path().join("report.csv");
    let o = fdd(&["eval", s(&path), "--far", "0.001,0.01", "--report", s(&report)]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let text = stdout(&o);
    assert!(text.contains("TAR@FAR=0.1%: 1.0000"), "{text}");
    assert!(text.contains("Rank-1: 1.0000"), "{text}");
    let csv = fs::read_to_string(&report).unwrap();
    assert!(csv.starts_with("metric,param,value"));
}

#[test]
fn fusion_with_unit_weight_reproduces_the_first_file() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b, out) = (
        dir.path().join("a.csv"),
        dir.path().join("b.csv"),
        dir.path().join("f.csv"),
    );
    let rows = separable_rows();
    let ra: Vec<_> = rows
        .iter()
        .map(|(p, g, sc, gen)| (p.as_str(), g.as_str(), *sc, *gen))
        .collect();
    let rb: Vec<_> = rows
        .iter()
        .map(|(p, g, sc, gen)| (p.as_str(), g.as_str(), 1.0 - *sc / 3.0, *gen))
        .collect();
    write_scores(&a, &ra);
    write_scores(&b, &rb);
    let o = fdd(&["fuse", s(&a), s(&b), "--weights", "1,0", "--out", s(&out)]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert_eq!(load_score_records(&out).unwrap(), load_score_records(&a).unwrap());

    let o = fdd(&["fuse", s(&a), s(&b), "--weights", "0,0"]);
    assert_eq!(code(&o), 2);
}

#[test]
fn bench_reports_parseable_json() {
    let o = fdd(&[
        "bench",
        "-n",
        "300",
        "-c",
        "2",
        "--probes",
        "3",
        "--extractions",
        "0",
        "--threads",
        "1",
    ]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(v["gallery_size"], 300);
    assert_eq!(v["threads"], 1);
    assert_eq!(v["float"]["comparisons"], 900);
    assert!(v["binary"]["comparisons_per_second"].as_f64().unwrap() > 0.0);
    assert!(v["seconds_per_extraction"].is_null());
}

#[test]
fn identification_does_not_depend_on_thread_count() {
    let dir = tempfile::tempdir().unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let mut g = GalleryIndex::<f32>::new(3).unwrap();
    g.set_block_rows(16);
    for i in 0..400 {
        g.enroll(&synthetic_template(3, &mut rng), format!("e{i}")).unwrap();
    }
    let gallery = dir.path().join("g.fddg");
    g.save(&gallery).unwrap();
    let probe_t = synthetic_template(3, &mut rng);
    let probe = dir.path().join("p.fdd");
    save_float(&probe, probe_t.clone());
    let mut want = String::from("rank,id,score\n");
    for h in g.identify(&probe_t, 25).unwrap() {
        want.push_str(&format!("{},{},{:?}\n", h.rank, h.id, h.score));
    }

    let runs: Vec<Output> = ["1", "2", "4"]
        .iter()
        .map(|t| {
            fdd(&[
                "identify",
                s(&probe),
                s(&gallery),
                "--top",
                "25",
                "--raw",
                "--threads",
                t,
            ])
        })
        .collect();
    for r in &runs {
        assert_eq!(code(r), 0, "{}", stderr(r));
        assert_eq!(stdout(r), want);
    }
}
