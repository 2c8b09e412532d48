use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use mist_cli::commands::EnergyLog;
use mist_core::engine::{Scribble, ScribbleDocument, SessionDocument};
use mist_core::gmm::Side;
use mist_core::phantom::{Phantom, PhantomSpec};
use mist_core::raster::{load_raster, save_raster, BinaryMask, Depth, Raster};

fn mist(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mist"))
        .args(args)
        .output()
        .expect("spawn mist")
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn small_phantom(dir: &Path) -> (PathBuf, Phantom) {
    let spec = PhantomSpec {
        seed: 3,
        ..PhantomSpec::default()
    };
    let ph = Phantom::generate(&spec);
    let path = dir.join("phantom.pgm");
    save_raster(&ph.image, &path).unwrap();
    (path, ph)
}

#[test]
fn marker_writes_debug_stages() {
    let dir = tempfile::tempdir().unwrap();
    let (input, _) = small_phantom(dir.path());
    let out = dir.path().join("m.png");
    let o = mist(&["marker", s(&input), "-r", "10", "-o", s(&out), "--debug"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    for name in ["m.png", "m_opened.png", "m_closed.png", "m_maxima.png"] {
        assert!(dir.path().join(name).exists(), "{name}");
    }
    let marker = BinaryMask::from_raster(&load_raster(&out).unwrap());
    assert!(marker.count() > 0);
}

#[test]
fn segment_outputs_and_determinism() {
    let dir = tempfile::tempdir().unwrap();
    let (input, ph) = small_phantom(dir.path());
    let b = ph.bbox(10);
    let bbox = [b.x0, b.y0, b.x1, b.y1].map(|v| v.to_string());
    let run = |name: &str| {
        let out = dir.path().join(name);
        let session = out.with_extension("session.json");
        let weights = out.with_extension("weights");
        let mut args = vec!["segment", s(&input), "-r", "10", "-o", s(&out)];
        args.push("--bbox");
        args.extend(bbox.iter().map(String::as_str));
        args.extend(["--session", s(&session), "--dump-weights", s(&weights)]);
        let o = mist(&args);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        (out, session, weights)
    };
    let (m1, s1, w1) = run("a.pgm");
    let (m2, _, w2) = run("b.pgm");
    assert_eq!(std::fs::read(&m1).unwrap(), std::fs::read(&m2).unwrap());
    assert_eq!(std::fs::read(&w1).unwrap(), std::fs::read(&w2).unwrap());
    assert_eq!(std::fs::read(&w1).unwrap().len(), 2 * 4 * 256 * 256);

    let mask = BinaryMask::from_raster(&load_raster(&m1).unwrap());
    assert!(mist_core::metrics::dice(&mask, &ph.truth).unwrap() >= 0.95);

    let log: EnergyLog =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("a.energy.json")).unwrap()).unwrap();
    assert!(!log.energies.is_empty() && log.energies.len() <= 5);
    assert!(log
        .energies
        .windows(2)
        .all(|w| w[1].total <= w[0].total + 1e-6 * w[0].total.abs()));

    let doc = SessionDocument::from_json(&std::fs::read_to_string(&s1).unwrap()).unwrap();
    assert_eq!(doc.iterations_run, log.iterations_run);
}

#[test]
fn zero_iterations_gives_initial_trimap() {
    let dir = tempfile::tempdir().unwrap();
    let img = Raster::from_fn(20, 20, Depth::Eight, |x, _| if x < 10 { 30 } else { 220 });
    let input = dir.path().join("two.pgm");
    save_raster(&img, &input).unwrap();
    let out = dir.path().join("m.pgm");
    let o = mist(&[
        "segment",
        s(&input),
        "--no-marker",
        "-k",
        "0",
        "--bbox",
        "2",
        "2",
        "17",
        "17",
        "-o",
        s(&out),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let mask = BinaryMask::from_raster(&load_raster(&out).unwrap());
    assert_eq!(mask.count(), 16 * 16);
}

#[test]
fn scribbles_flag_applies_strokes() {
    let dir = tempfile::tempdir().unwrap();
    let img = Raster::from_fn(24, 24, Depth::Eight, |x, _| if x < 12 { 30 } else { 220 });
    let input = dir.path().join("two.pgm");
    save_raster(&img, &input).unwrap();
    let strokes = dir.path().join("s.json");
    let doc = ScribbleDocument::new(vec![Scribble::line(Side::Background, 1.0, (18, 4), (18, 20))]);
    std::fs::write(&strokes, doc.to_json()).unwrap();
    let out = dir.path().join("m.pgm");
    let o = mist(&[
        "segment",
        s(&input),
        "--no-marker",
        "-o",
        s(&out),
        "--scribbles",
        s(&strokes),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let mask = BinaryMask::from_raster(&load_raster(&out).unwrap());
    assert!(!mask.get(18, 10));
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("nope.pgm");
    let out = dir.path().join("m.pgm");
    let o = mist(&["segment", s(&missing), "-o", s(&out)]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("nope.pgm"));

    let garbage = dir.path().join("bad.pgm");
    std::fs::write(&garbage, b"P5 not really").unwrap();
    assert_eq!(mist(&["segment", s(&garbage), "-o", s(&out)]).status.code(), Some(2));

    // a 2x2 image has no pixels left once the border ring is background
    let tiny = dir.path().join("tiny.pgm");
    save_raster(&Raster::filled(2, 2, Depth::Eight, 100), &tiny).unwrap();
    assert_eq!(
        mist(&["segment", s(&tiny), "--no-marker", "-o", s(&out)]).status.code(),
        Some(3)
    );

    let bad_strokes = dir.path().join("s.json");
    std::fs::write(&bad_strokes, "{\"v\": 9, \"strokes\": []}").unwrap();
    let img = dir.path().join("ok.pgm");
    save_raster(&Raster::filled(8, 8, Depth::Eight, 100), &img).unwrap();
    let o = mist(&["segment", s(&img), "-o", s(&out), "--scribbles", s(&bad_strokes)]);
    assert_eq!(o.status.code(), Some(2));

    let o = mist(&["segment", s(&img), "-o", s(&out), "--bbox", "0", "0", "8", "8"]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn eval_reports_every_row() {
    let dir = tempfile::tempdir().unwrap();
    let mut entries = Vec::new();
    for seed in 0..2u64 {
        let spec = PhantomSpec {
            size: 64,
            square: mist_core::phantom::Rect {
                x0: 20,
                y0: 20,
                w: 24,
                h: 24,
            },
            specks: 4,
            specks_in_square: 2,
            seed,
            ..PhantomSpec::default()
        };
        let ph = Phantom::generate(&spec);
        save_raster(&ph.image, dir.path().join(format!("p{seed}.pgm"))).unwrap();
        save_raster(&ph.truth.to_raster(), dir.path().join(format!("p{seed}_gt.pgm"))).unwrap();
        entries.push(format!("{{\"image\": \"p{seed}.pgm\", \"gt\": \"p{seed}_gt.pgm\"}}"));
    }
    entries.push("{\"image\": \"missing.pgm\", \"gt\": \"missing_gt.pgm\"}".into());
    let manifest = dir.path().join("corpus.json");
    std::fs::write(
        &manifest,
        format!("{{\"v\": 1, \"entries\": [\n{}\n]}}", entries.join(",\n")),
    )
    .unwrap();
    let masks = dir.path().join("ext");
    std::fs::create_dir(&masks).unwrap();
    save_raster(&BinaryMask::full(64, 64).to_raster(), masks.join("p0.png")).unwrap();

    let out = dir.path().join("report");
    let o = mist(&[
        "eval",
        s(&manifest),
        "--methods",
        "mist,kmeans,external",
        "--mask-dir",
        s(&masks),
        "-r",
        "5",
        "-o",
        s(&out),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let csv = std::fs::read_to_string(dir.path().join("report.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "image,method,dice,hausdorff,runtime_s,error");
    // three images by three methods
    assert_eq!(
        lines
            .iter()
            .filter(|l| !l.starts_with("mean,") && **l != lines[0])
            .count(),
        9
    );
    assert_eq!(lines.iter().filter(|l| l.starts_with("missing,")).count(), 3);
    assert!(lines
        .iter()
        .any(|l| l.starts_with("p1,external,") && l.contains("no external mask")));
    assert!(dir.path().join("report.md").exists());

    let bad = dir.path().join("bad.json");
    std::fs::write(&bad, "{\"v\": 1,\n\"entries\": [{\"image\": 3}]}").unwrap();
    let o = mist(&["eval", s(&bad), "-o", s(&out)]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("line 2"));
}
