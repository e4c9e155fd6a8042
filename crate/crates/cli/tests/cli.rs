use std::path::Path;
use std::process::{Command, Output};

fn nfield(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_nfield")).args(args).output().unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn usage_errors_exit_one() {
    assert_eq!(code(&nfield(&[])), 1);
    assert_eq!(code(&nfield(&["frobnicate"])), 1);
    assert_eq!(code(&nfield(&["fit", "--model", "resnet"])), 1);
    assert_eq!(code(&nfield(&["eval", "--pred", "x.nfv"])), 1);
    assert_eq!(code(&nfield(&["continual", "--experiment", "domain", "--dims", "3x3", "--out", "o"])), 1);
    assert_eq!(code(&nfield(&["--help"])), 0);
}

#[test]
fn phantom_eval_and_corruption() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("ph");
    let o = nfield(&["phantom", "--dims", "8x8x2", "--frames", "2", "--cases", "1", "--out", s(&out)]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let f1 = out.join("case0_frame1_image.nfv");
    let f2 = out.join("case0_frame2_image.nfv");
    let l1 = out.join("case0_frame1_labels.nfv");

    let same = nfield(&["eval", "--pred", s(&f1), "--ref", s(&f1)]);
    assert_eq!(String::from_utf8(same.stdout).unwrap(), "psnr=100.000000\nssim=1.000000\n");
    let diff = String::from_utf8(nfield(&["eval", "--pred", s(&f1), "--ref", s(&f2)]).stdout).unwrap();
    assert!(diff.starts_with("psnr=") && diff.contains("\nssim="));
    let dice = String::from_utf8(nfield(&["eval", "--pred", s(&l1), "--ref", s(&l1), "--labels"]).stdout).unwrap();
    assert_eq!(dice, "dice_c1=1.000000\ndice_c2=1.000000\ndice_c3=1.000000\n");

    let mut bytes = std::fs::read(&f1).unwrap();
    bytes[0] = b'X';
    let bad = dir.path().join("bad.nfv");
    std::fs::write(&bad, &bytes).unwrap();
    assert_eq!(code(&nfield(&["eval", "--pred", s(&bad), "--ref", s(&f1)])), 2);
    let short = dir.path().join("short.nfv");
    std::fs::write(&short, &std::fs::read(&f1).unwrap()[..30]).unwrap();
    assert_eq!(code(&nfield(&["eval", "--pred", s(&f1), "--ref", s(&short)])), 2);
    assert_eq!(code(&nfield(&["eval", "--pred", s(&f1), "--ref", s(&dir.path().join("missing.nfv"))])), 2);
    assert_eq!(code(&nfield(&["eval", "--pred", s(&f1), "--ref", s(&out.join("case0_frame1_labels.nfv"))])), 2);
}

#[test]
fn fit_writes_checkpoint_and_diverges_with_code_three() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("ph");
    nfield(&["phantom", "--dims", "8x8x2", "--frames", "1", "--cases", "1", "--out", s(&out)]);
    let vol = out.join("case0_frame1_image.nfv");
    let ckpt = dir.path().join("m.bin");
    let trace = dir.path().join("trace.csv");
    let o = nfield(&[
        "fit", "--model", "siren", "--volume", s(&vol), "--iters", "20", "--hidden-width", "16",
        "--out", s(&ckpt), "--trace", s(&trace),
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert!(String::from_utf8(o.stdout).unwrap().starts_with("psnr="));
    assert!(std::fs::read(&ckpt).unwrap().starts_with(b"NFCKPT1\0"));
    let text = std::fs::read_to_string(&trace).unwrap();
    assert!(text.starts_with("iteration,loss_fit,loss_distil,loss_total\n"));
    assert_eq!(text.lines().count(), 21);

    let o = nfield(&[
        "fit", "--model", "pe-relu", "--volume", s(&vol), "--iters", "20", "--lr", "1e36",
        "--hidden-width", "8", "--out", s(&ckpt),
    ]);
    assert_eq!(code(&o), 3, "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn config_file_fills_flags_and_flags_win() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("cfg.json");
    let out = dir.path().join("run");
    std::fs::write(
        &cfg,
        format!(
            r#"{{"experiment":"signal","models":["finer"],"strategies":["baseline"],"cases":3,
               "dims":"8x8x2","iters":2,"batch":32,"hidden-width":8,"out":"{}"}}"#,
            s(&out)
        ),
    )
    .unwrap();
    let o = nfield(&["continual", "--config", s(&cfg), "--cases", "1"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let csv = std::fs::read_to_string(out.join("metrics.csv")).unwrap();
    assert_eq!(csv.lines().count(), 1 + 3);
    assert!(csv.lines().skip(1).all(|l| l.starts_with("0,finer,baseline,")));
    assert!(out.join("case0/finer/baseline/ckpt_task2.bin").is_file());

    std::fs::write(&cfg, r#"{"experiment":"signal","colour":"blue"}"#).unwrap();
    assert_eq!(code(&nfield(&["continual", "--config", s(&cfg), "--out", s(&out)])), 1);
    std::fs::write(&cfg, "not json").unwrap();
    assert_eq!(code(&nfield(&["continual", "--config", s(&cfg), "--out", s(&out)])), 1);
}

#[test]
fn continual_and_report_are_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let run = |name: &str| {
        let out = dir.path().join(name);
        let o = nfield(&[
            "continual", "--experiment", "domain", "--models", "siren,diner", "--strategies",
            "baseline,distillation", "--lambda", "1", "--cases", "1", "--dims", "8x8x2", "--frames", "3",
            "--iters", "3", "--batch", "40", "--hidden-width", "8", "--seed", "5", "--out", s(&out),
        ]);
        assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
        let svg = out.join("psnr.svg");
        let o = nfield(&["report", "--metrics", s(&out.join("metrics.csv")), "--metric", "psnr", "--out", s(&svg)]);
        assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
        (std::fs::read(out.join("metrics.csv")).unwrap(), std::fs::read(svg).unwrap())
    };
    let (csv_a, svg_a) = run("a");
    let (csv_b, svg_b) = run("b");
    assert_eq!(csv_a, csv_b);
    assert_eq!(svg_a, svg_b);
    assert!(String::from_utf8(csv_a)
        .unwrap()
        .starts_with("case_id,model,strategy,trained_through_task,eval_target,psnr,ssim,dice_c1,dice_c2,dice_c3\n"));

    let bad = dir.path().join("bad.csv");
    std::fs::write(&bad, "case_id,model\nfoo,bar\n").unwrap();
    assert_eq!(code(&nfield(&["report", "--metrics", s(&bad), "--out", s(&dir.path().join("x.svg"))])), 2);
}
