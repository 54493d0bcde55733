use std::path::Path;
use std::process::{Command, Output};

use freqreg::data::{encode_idx_images, encode_idx_labels};
use freqreg::DenseTensor;

fn freqreg(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_freqreg")).args(args).env_remove("FREQREG_DATA_DIR").output().expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn train_small(out: &Path, extra: &[&str]) -> Output {
    let mut args =
        vec!["train", "--model", "mlp300", "--synthetic", "--samples", "200", "--seed", "7", "--out", path(out)];
    if !extra.contains(&"--epochs") {
        args.extend_from_slice(&["--epochs", "2"]);
    }
    args.extend_from_slice(extra);
    freqreg(&args)
}

#[test]
fn train_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a.frm"), dir.path().join("b.frm"));
    let oa = train_small(&a, &[]);
    let ob = train_small(&b, &[]);
    assert!(oa.status.success(), "{}", String::from_utf8_lossy(&oa.stderr));
    assert_eq!(oa.stdout, ob.stdout);
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());

    let text = stdout(&oa);
    let lines: Vec<_> = text.lines().collect();
    assert_eq!(lines.len(), 3);
    let fields: Vec<_> = lines[0].split(' ').map(|f| f.split('=').next().unwrap()).collect();
    assert_eq!(fields, ["epoch", "loss", "accuracy", "beta", "kept", "rate"]);
    assert!(lines[2].starts_with("model bytes="));
}

#[test]
fn full_ratio_reports_no_compression() {
    let dir = tempfile::tempdir().unwrap();
    let m = dir.path().join("m.frm");
    assert!(train_small(&m, &["--epsilon-ratio", "1.0"]).status.success());
    let report = freqreg(&["report", path(&m)]);
    assert!(report.status.success());
    let text = stdout(&report);
    assert!(text.lines().next().unwrap().starts_with("layer type original remaining rate"));
    for line in text.lines().skip(1) {
        assert!(line.ends_with("100.0000% (1×)"), "{line}");
    }
    let total = text.lines().last().unwrap();
    assert!(total.starts_with("total - 266200 266200 "), "{total}");
}

#[test]
fn report_totals_sum_layers() {
    let dir = tempfile::tempdir().unwrap();
    let m = dir.path().join("m.frm");
    assert!(train_small(&m, &["--gamma", "0.5"]).status.success());
    let text = stdout(&freqreg(&["report", path(&m)]));
    let rows: Vec<Vec<&str>> = text.lines().skip(1).map(|l| l.split(' ').collect()).collect();
    let (layers, total) = rows.split_at(rows.len() - 1);
    let sum = |col: usize| layers.iter().map(|r| r[col].parse::<usize>().unwrap()).sum::<usize>();
    assert_eq!(total[0][2].parse::<usize>().unwrap(), sum(2));
    assert_eq!(total[0][3].parse::<usize>().unwrap(), sum(3));
    assert_eq!(layers.len(), 3);
}

#[test]
fn eval_matches_final_report_line() {
    let dir = tempfile::tempdir().unwrap();
    let m = dir.path().join("m.frm");
    let t = train_small(&m, &[]);
    let text = stdout(&t);
    let last = text.lines().nth(1).unwrap();
    let acc = last.split(' ').find(|f| f.starts_with("accuracy=")).unwrap();
    let e = freqreg(&["eval", path(&m), "--synthetic", "--samples", "200", "--seed", "7"]);
    assert!(e.status.success());
    let line = stdout(&e);
    assert!(line.starts_with(acc), "{line} vs {acc}");
    assert!(line.trim_end().ends_with("samples=200"));
    assert_eq!(freqreg(&["eval", path(&m), "--synthetic", "--samples", "200", "--seed", "7"]).stdout, e.stdout);
}

#[test]
fn eval_rejects_mismatched_dims() {
    let dir = tempfile::tempdir().unwrap();
    let m = dir.path().join("m.frm");
    assert!(train_small(&m, &["--epochs", "1"]).status.success());
    let images = DenseTensor::filled(vec![4, 1, 20, 20], 0.5).unwrap();
    std::fs::write(dir.path().join("t10k-images-idx3-ubyte"), encode_idx_images(&images)).unwrap();
    std::fs::write(dir.path().join("t10k-labels-idx1-ubyte"), encode_idx_labels(&[0, 1, 2, 3])).unwrap();
    let e = freqreg(&["eval", path(&m), "--data-dir", path(dir.path()), "--split", "test"]);
    assert_eq!(e.status.code(), Some(2));
    assert!(!e.stderr.is_empty());
}

#[test]
fn missing_data_is_exit_2() {
    let o = freqreg(&["train", "--epochs", "1"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn gradcheck_examples() {
    for (shape, eps) in [("6,6", "3"), ("2,2,2,2", "2")] {
        let o = freqreg(&["gradcheck", "--shape", shape, "--epsilon", eps, "--seed", "1"]);
        assert!(o.status.success(), "{}", stdout(&o));
        assert!(stdout(&o).trim_end().ends_with("result=pass"));
    }
    let o = freqreg(&["gradcheck", "--shape", "2,2,2,2,2", "--epsilon", "2"]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn unknown_flags_are_usage_errors() {
    assert_eq!(freqreg(&["train", "--bogus"]).status.code(), Some(1));
    assert_eq!(freqreg(&["frobnicate"]).status.code(), Some(1));
    assert_eq!(freqreg(&["--help"]).status.code(), Some(0));
}

#[test]
fn pack_unpack_pack_is_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let p = |n: &str| dir.path().join(n);
    let values: Vec<String> = (0..36).map(|i| format!("{}", (i as f64 * 0.37).sin())).collect();
    let doc =
        format!(r#"{{"format":"spatial","dtype":"single","shape":[6,6],"epsilon":4,"values":[{}]}}"#, values.join(","));
    std::fs::write(p("in.json"), doc).unwrap();
    assert!(freqreg(&["pack", path(&p("in.json")), "--out", path(&p("a.frt"))]).status.success());
    assert!(freqreg(&["unpack", path(&p("a.frt")), "--out", path(&p("a.json"))]).status.success());
    assert!(freqreg(&["pack", path(&p("a.json")), "--out", path(&p("b.frt"))]).status.success());
    let a = std::fs::read(p("a.frt")).unwrap();
    assert_eq!(a, std::fs::read(p("b.frt")).unwrap());

    let i = freqreg(&["unpack", path(&p("a.frt")), "--inspect"]);
    assert_eq!(
        stdout(&i).trim_end(),
        format!("format=FRT1 version=1 shape=6,6 epsilon=4 dtype=single count=10 bytes={}", a.len())
    );

    let m = p("m.frm");
    assert!(train_small(&m, &["--epochs", "1", "--dtype", "half"]).status.success());
    assert!(freqreg(&["unpack", path(&m), "--out", path(&p("m.json"))]).status.success());
    assert!(freqreg(&["pack", path(&p("m.json")), "--out", path(&p("m2.frm"))]).status.success());
    assert_eq!(std::fs::read(&m).unwrap(), std::fs::read(p("m2.frm")).unwrap());
    let text = stdout(&freqreg(&["unpack", path(&m), "--inspect"]));
    assert!(text.starts_with("format=FRM1 version=1 dtype=half layers=6 "), "{text}");
}

#[test]
fn malformed_files_are_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let m = dir.path().join("m.frm");
    assert!(train_small(&m, &["--epochs", "1"]).status.success());
    let bytes = std::fs::read(&m).unwrap();
    let cut = dir.path().join("cut.frm");
    std::fs::write(&cut, &bytes[..bytes.len() / 2]).unwrap();
    for cmd in ["report", "unpack"] {
        assert_eq!(freqreg(&[cmd, path(&cut)]).status.code(), Some(2));
    }
    assert_eq!(freqreg(&["eval", path(&cut), "--synthetic"]).status.code(), Some(2));
    let junk = dir.path().join("junk.json");
    std::fs::write(&junk, "{not json").unwrap();
    assert_eq!(freqreg(&["pack", path(&junk), "--out", path(&dir.path().join("x"))]).status.code(), Some(2));
}

#[test]
fn long_schedule_reaches_floor() {
    let o = freqreg(&[
        "train",
        "--model",
        "mlp300",
        "--synthetic",
        "--samples",
        "10",
        "--epochs",
        "500",
        "--gamma",
        "0.01",
        "--epsilon-ratio",
        "0.01",
        "--seed",
        "1",
    ]);
    assert!(o.status.success());
    let text = stdout(&o);
    let last = text.lines().last().unwrap();
    let beta: f64 = last.split(' ').find_map(|f| f.strip_prefix("beta=")).unwrap().parse().unwrap();
    assert!((beta - 0.01).abs() < 1e-2, "{last}");
    assert!(last.starts_with("epoch=500 "));
}
