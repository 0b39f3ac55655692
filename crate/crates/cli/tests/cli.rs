//! End-to-end runs of the `trapeval` binary.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use chrono::NaiveDate;
use trapeval::dataset::{AnnotationSet, CategoryInfo, ImageRecord};
use trapeval::{BoundingBox, GroundTruth};

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name)
}

fn trapeval(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_trapeval"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn eval_fixture_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    for out in [&a, &b] {
        let o = trapeval(&[
            "eval",
            s(&fixture("detections.csv")),
            s(&fixture("annotations.json")),
            "--out-dir",
            s(out),
        ]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    }
    for f in ["metrics.csv", "confusion.csv", "pr_all.svg", "pr_1.svg", "pr_2.svg", "pr_3.svg"] {
        assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap(), "{f}");
    }
    let metrics = fs::read_to_string(a.join("metrics.csv")).unwrap();
    assert!(metrics.starts_with("category_id,ap,precision,recall,tp,fp,fn\n"));
    assert!(metrics.contains("\n1,1.0,"));
}

#[test]
fn eval_identity_and_empty_detections() {
    let dir = tempfile::tempdir().unwrap();
    let set = AnnotationSet::read(fixture("annotations.json")).unwrap();
    let mut csv = String::from("image_id,category_id,confidence,x1,y1,x2,y2\n");
    for g in set.ground_truths() {
        let b = g.bbox;
        csv.push_str(&format!("{},{},1.0,{},{},{},{}\n", g.image_id, g.category_id, b.x1, b.y1, b.x2, b.y2));
    }
    let perfect = dir.path().join("perfect.csv");
    fs::write(&perfect, csv).unwrap();
    let o = trapeval(&["eval", s(&perfect), s(&fixture("annotations.json")), "--out-dir", s(&dir.path().join("p"))]);
    assert!(o.status.success());
    assert!(stdout(&o).contains("\nmAP50,1.0\n"));

    let empty = dir.path().join("empty.csv");
    fs::write(&empty, "").unwrap();
    let out = dir.path().join("e");
    let o = trapeval(&["eval", s(&empty), s(&fixture("annotations.json")), "--out-dir", s(&out)]);
    assert!(o.status.success());
    assert!(stdout(&o).contains("\nmAP50,0.0\n"));
    let confusion = fs::read_to_string(out.join("confusion.csv")).unwrap();
    let rows: Vec<&str> = confusion.lines().collect();
    assert_eq!(rows[1], "1,0,0,0,0,2");
    assert_eq!(rows[2], "2,0,0,0,0,2");
    assert_eq!(rows[3], "3,0,0,0,0,1");
    assert_eq!(rows[5], "background,0,0,0,0,0");
}

#[test]
fn eval_parse_error_goes_to_stderr() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.csv");
    fs::write(&bad, "image_id,category_id,confidence,x1,y1,x2,y2\nimg1,1,high,0,0,1,1\n").unwrap();
    let o = trapeval(&["eval", s(&bad), s(&fixture("annotations.json")), "--out-dir", s(dir.path())]);
    assert!(!o.status.success());
    assert!(o.stdout.is_empty());
    assert!(String::from_utf8_lossy(&o.stderr).contains("line 2"));
}

#[test]
fn losslab_trajectories_and_focusing_curve() {
    let dir = tempfile::tempdir().unwrap();
    let o = trapeval(&["losslab", "--kinds", "iou,giou,diou", "--out-dir", s(dir.path())]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let iou = fs::read_to_string(dir.path().join("trajectory_iou.csv")).unwrap();
    let rows: Vec<&str> = iou.lines().skip(1).collect();
    assert_eq!(rows.len(), 501);
    let boxes: Vec<&str> = rows.iter().map(|r| r.splitn(6, ',').last().unwrap()).collect();
    assert!(boxes.iter().all(|b| *b == boxes[0]), "IoU descent moved a disjoint box");

    let dist = |name: &str| -> Vec<f64> {
        fs::read_to_string(dir.path().join(name))
            .unwrap()
            .lines()
            .skip(1)
            .map(|l| l.split(',').nth(3).unwrap().parse().unwrap())
            .collect()
    };
    let diou = dist("trajectory_diou.csv");
    let tail = &diou[diou.len() - 50..];
    assert!(tail.windows(2).all(|w| w[1] <= w[0]));
    assert!(dir.path().join("trajectory_giou.csv").exists());

    let curve = fs::read_to_string(dir.path().join("focusing_curve.csv")).unwrap();
    assert!(curve.lines().any(|l| l == "3.0,1.0"));
    let svg = fs::read_to_string(dir.path().join("focusing_curve.svg")).unwrap();
    assert!(svg.contains("1/ln α = 1.558"));
    assert!(dir.path().join("loss_curves.svg").exists());
}

fn write_test_image(path: &Path, w: usize, h: usize) -> Vec<u8> {
    let mut bytes = format!("P6\n{w} {h}\n255\n").into_bytes();
    for y in 0..h {
        for x in 0..w {
            for c in 0..3 {
                bytes.push(((x * 7 + y * 3 + c * 50) % 256) as u8);
            }
        }
    }
    fs::write(path, &bytes).unwrap();
    bytes
}

#[test]
fn gradcam_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let img = dir.path().join("in.ppm");
    let original = write_test_image(&img, 40, 24);
    let run_layer = |layer: &str, out: &str, extra: &[&str]| {
        let out = dir.path().join(out);
        let mut args = vec!["gradcam", s(&img), "--size", "32", "--layer", layer, "--category", "1", "--out-dir", s(&out)];
        args.extend_from_slice(extra);
        let args: Vec<String> = args.iter().map(|a| a.to_string()).collect();
        let args: Vec<&str> = args.iter().map(String::as_str).collect();
        (trapeval(&args), out)
    };
    let run = |out: &str, extra: &[&str]| run_layer("21", out, extra);
    let (o1, a) = run("a", &[]);
    assert!(o1.status.success(), "{}", String::from_utf8_lossy(&o1.stderr));
    let (_, b) = run("b", &[]);
    for f in ["heatmap.ppm", "heatmap.pgm", "overlay.ppm"] {
        assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap(), "{f}");
    }
    let pgm = fs::read(a.join("heatmap.pgm")).unwrap();
    assert!(pgm.starts_with(b"P5\n40 24\n255\n"));

    let (_, z) = run("z", &["--init", "zeros"]);
    let pgm = fs::read(z.join("heatmap.pgm")).unwrap();
    assert!(pgm[b"P5\n40 24\n255\n".len()..].iter().all(|&v| v == 0));

    let (_, c) = run("c", &["--alpha-overlay", "0"]);
    assert_eq!(fs::read(c.join("overlay.ppm")).unwrap(), original);

    // scale 0 reads layer 22, which layer 28 does not feed
    let (o, _) = run_layer("28", "d", &["--scale", "0"]);
    assert!(!o.status.success());
    assert!(String::from_utf8_lossy(&o.stderr).contains("does not depend on layer 28"));
}

fn synthetic_corpus(path: &Path) -> usize {
    let mut images = Vec::new();
    for loc in 0..20u32 {
        for k in 0..12u32 {
            let id = format!("l{loc}k{k}");
            let annotations = if k % 5 == 4 {
                Vec::new()
            } else {
                vec![GroundTruth::new(id.clone(), 1 + k % 3, BoundingBox::new(1.0, 1.0, 20.0, 15.0))]
            };
            images.push(ImageRecord {
                image_id: id,
                location: loc,
                date: NaiveDate::from_ymd_opt(2013, 6, 1 + k).unwrap(),
                width: 64,
                height: 48,
                file_name: None,
                seq_id: None,
                annotations,
            });
        }
    }
    let kept = images.iter().filter(|r| !r.annotations.is_empty()).count();
    let categories = ["deer", "fox", "skunk"]
        .iter()
        .enumerate()
        .map(|(i, n)| CategoryInfo {
            id: i as u32 + 1,
            name: n.to_string(),
        })
        .collect();
    AnnotationSet { images, categories }.write(path).unwrap();
    kept
}

#[test]
fn split_writes_five_files() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("all.json");
    let kept = synthetic_corpus(&input);
    let run = |out: &Path| trapeval(&["split", s(&input), "--seed", "4", "--out-dir", s(out)]);
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    let o = run(&a);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    run(&b);
    let mut total = 0;
    for name in ["train", "cis_val", "cis_test", "trans_val", "trans_test"] {
        let f = format!("{name}.json");
        assert_eq!(fs::read(a.join(&f)).unwrap(), fs::read(b.join(&f)).unwrap());
        total += AnnotationSet::read(a.join(&f)).unwrap().images.len();
    }
    assert_eq!(total, kept);
    assert!(stdout(&o).contains(&format!("total,{kept}\n")));

    let o = trapeval(&[
        "split",
        s(&input),
        "--trans-test",
        "0,1,2,3,4,5,6,7,8",
        "--trans-val",
        "9",
        "--reference",
        "--out-dir",
        s(&dir.path().join("r")),
    ]);
    assert!(o.status.success());
    assert!(stdout(&o).contains("split,expected,found,diff\ntrain,12099,"));

    let o = trapeval(&["split", s(&input), "--trans-test", "0,1", "--trans-val", "1", "--out-dir", s(&dir.path().join("x"))]);
    assert!(!o.status.success());
    assert!(!dir.path().join("x").exists());
}

#[test]
fn shapes_check_and_errors() {
    let o = trapeval(&["shapes", "baseline", "640", "--check"]);
    assert!(o.status.success());
    let text = stdout(&o);
    assert!(text.contains("layer 9 sppf concat,20x20x2048,20x20x2048,PASS"));
    assert!(!text.contains("FAIL"));
    let o = trapeval(&["shapes", "improved", "640", "--check"]);
    assert!(o.status.success());
    assert!(stdout(&o).contains("\n9,gam,8,20x20x512\n"));
    assert!(!trapeval(&["shapes", "improved", "639"]).status.success());

    let dir = tempfile::tempdir().unwrap();
    let emitted = dir.path().join("g.txt");
    assert!(trapeval(&["shapes", "improved", "64", "--emit", s(&emitted)]).status.success());
    let spec = trapeval::graph::GraphSpec::parse_text(&fs::read_to_string(&emitted).unwrap()).unwrap();
    assert_eq!(spec.input, (3, 64, 64));
}
