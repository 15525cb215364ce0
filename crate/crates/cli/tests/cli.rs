use std::fs;
use std::io::{BufRead, BufReader, Read, Write};
use std::net::TcpStream;
use std::path::{Path, PathBuf};
use std::process::{Command, Output, Stdio};

use liquid_core::curves::{is_monotone, relative_linearity_deviation};
use liquid_core::legacy_smoothing::{StepBin, StepCharacteristic, StepScorecard};
use liquid_core::scorecard_model::{Attribute, CharacteristicSpec, XScale};
use liquid_core::smoothness_tuning::TuneReport;
use liquid_core::synth::{SynthCharacteristic, SynthSpec, TrueCurve, ValueDistribution};
use liquid_core::{Dataset, FitContext, KnotConfig, ModelSpec};
use serde_json::{json, Value};
use sha2::{Digest, Sha256};
use tempfile::TempDir;

const CHAR965: [f64; 10] = [-2950.0, -950.0, -750.0, -550.0, -400.0, -300.0, -200.0, -100.0, 80.0, 1425.0];

fn liquid(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_liquid")).args(args).output().unwrap()
}

fn ok(args: &[&str]) -> Value {
    let out = liquid(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    serde_json::from_slice(&out.stdout).unwrap()
}

fn fails(args: &[&str], exit: i32) -> Value {
    let out = liquid(args);
    assert_eq!(out.status.code(), Some(exit), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(out.stdout.is_empty());
    let stderr = String::from_utf8(out.stderr).unwrap();
    serde_json::from_str(stderr.lines().last().unwrap()).unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn synth_spec(rows: usize, seed: u64) -> SynthSpec {
    SynthSpec {
        schema_version: 1,
        rows,
        seed,
        intercept: 0.5,
        characteristics: vec![
            SynthCharacteristic::new(
                "char965",
                ValueDistribution::Normal { mean: -400.0, sd: 700.0 },
                TrueCurve::Logistic { location: -500.0, scale: 250.0, low: -1.0, high: 1.0 },
            )
            .with_clip(-2950.0, 2000.0),
            SynthCharacteristic::new(
                "tenure",
                ValueDistribution::Uniform { low: 0.0, high: 10.0 },
                TrueCurve::PiecewiseLinear { xs: vec![0.0, 5.0, 10.0], ys: vec![-0.4, 0.3, 0.4] },
            ),
            SynthCharacteristic::new(
                "region",
                ValueDistribution::Uniform { low: 0.0, high: 2.0 },
                TrueCurve::Linear { slope: 0.3, intercept: -0.3 },
            ),
        ],
    }
}

fn model() -> ModelSpec {
    ModelSpec::new(vec![
        CharacteristicSpec::liquid(
            "char965",
            KnotConfig::new(CHAR965.to_vec()).unwrap(),
            vec![],
            vec![Attribute::interval("[1425 Inf)", Some(1425.0), None, false, false)],
        ),
        CharacteristicSpec {
            xscale: XScale::Log1p,
            ..CharacteristicSpec::liquid(
                "tenure",
                KnotConfig::new(vec![0.0, 2.0, 4.0, 6.0, 8.0, 10.0]).unwrap(),
                vec![],
                vec![],
            )
        },
        CharacteristicSpec::discrete(
            "region",
            vec![
                Attribute::interval("low", Some(0.0), Some(1.0), true, false),
                Attribute::interval("high", Some(1.0), Some(2.0), true, true),
            ],
        ),
    ])
}

struct Workspace {
    dir: TempDir,
}

impl Workspace {
    /// Synthetic data plus a run config pointing at it.
    fn new(rows: usize) -> Self {
        let ws = Self { dir: TempDir::new().unwrap() };
        fs::write(ws.path("synth.json"), serde_json::to_string(&synth_spec(rows, 11)).unwrap()).unwrap();
        ok(&["synth", "--config", s(&ws.path("synth.json")), "--out", s(&ws.path("data.csv"))]);
        let run = json!({
            "schema_version": 1,
            "model": model(),
            "data": "data.csv",
            "split": { "val_fraction": 0.3, "seed": 4 }
        });
        fs::write(ws.path("run.json"), run.to_string()).unwrap();
        ws
    }

    fn path(&self, name: &str) -> PathBuf {
        self.dir.path().join(name)
    }

    fn fit(&self, out: &str, extra: &[&str]) -> Value {
        let (config, out) = (self.path("run.json"), self.path(out));
        let mut args = vec!["fit", "--config", s(&config), "--out", s(&out)];
        args.extend_from_slice(extra);
        ok(&args)
    }

    fn split(&self) -> (Dataset, Dataset) {
        Dataset::from_path(&self.path("data.csv")).unwrap().split(0.3, 4).unwrap()
    }
}

fn read_curve(path: &Path) -> (Vec<String>, Vec<Vec<f64>>) {
    let text = fs::read_to_string(path).unwrap();
    let mut lines = text.lines();
    let header = lines.next().unwrap().split(',').map(String::from).collect();
    let rows = lines.map(|l| l.split(',').map(|v| v.parse().unwrap()).collect()).collect();
    (header, rows)
}

fn hash(path: &Path) -> Vec<u8> {
    Sha256::digest(fs::read(path).unwrap()).to_vec()
}

#[test]
fn synth_is_reproducible_by_seed() {
    let dir = TempDir::new().unwrap();
    let cfg = dir.path().join("synth.json");
    fs::write(&cfg, serde_json::to_string(&synth_spec(2_000, 3)).unwrap()).unwrap();
    let a = dir.path().join("a.csv");
    let b = dir.path().join("b.csv");
    let c = dir.path().join("c.csv");
    let summary = ok(&["synth", "--config", s(&cfg), "--out", s(&a)]);
    assert_eq!(summary["rows"], 2000);
    ok(&["synth", "--config", s(&cfg), "--out", s(&b)]);
    ok(&["synth", "--config", s(&cfg), "--out", s(&c), "--seed", "99"]);
    assert_eq!(hash(&a), hash(&b));
    assert_ne!(hash(&a), hash(&c));

    let header = fs::read_to_string(&a).unwrap().lines().next().unwrap().to_string();
    assert_eq!(header, "outcome,weight,char965,tenure,region");
    let truth: Value = serde_json::from_str(&fs::read_to_string(dir.path().join("a.truth.json")).unwrap()).unwrap();
    let names: Vec<&str> = truth["curves"].as_array().unwrap().iter().map(|c| c["name"].as_str().unwrap()).collect();
    assert_eq!(names, ["char965", "tenure", "region"]);
}

#[test]
fn fit_writes_model_curves_and_summary() {
    let ws = Workspace::new(6_000);
    let summary = ws.fit("out", &["--lambda2", "char965=1e5"]);
    assert!(summary["val_divergence"].as_f64().unwrap() > 0.0);
    assert!(summary["dev_divergence"].as_f64().unwrap() > 0.0);
    assert_eq!(summary["lambda2"]["char965"], 1e5);
    assert!(summary["lambda2"]["region"].is_null());
    assert_eq!(summary["dev_rows"].as_u64().unwrap() + summary["val_rows"].as_u64().unwrap(), 6_000);

    let model: Value = serde_json::from_str(&fs::read_to_string(ws.path("out/model.json")).unwrap()).unwrap();
    assert_eq!(model["schema_version"], 1);
    assert_eq!(model["model"]["beta"].as_array().unwrap().len(), model["woe_beta"].as_array().unwrap().len());

    let (header, rows) = read_curve(&ws.path("out/curves/char965.csv"));
    assert_eq!(header, ["x", "cs"]);
    assert_eq!(rows.len(), 200);
    assert_eq!(rows[0][0], -2950.0);
    assert_eq!(rows[199][0], 1425.0);
    assert!(rows.windows(2).all(|w| w[1][0] > w[0][0]));

    let (header, rows) = read_curve(&ws.path("out/curves/tenure.csv"));
    assert_eq!(header, ["x", "log1p_x", "cs"]);
    assert!(rows.iter().all(|r| (r[1] - r[0].ln_1p()).abs() < 1e-15));
    assert!(!ws.path("out/curves/region.csv").exists());
}

#[test]
fn fit_is_byte_identical_across_runs() {
    let ws = Workspace::new(4_000);
    let first = liquid(&["fit", "--config", s(&ws.path("run.json")), "--out", s(&ws.path("out"))]);
    let model = fs::read(ws.path("out/model.json")).unwrap();
    let curve = fs::read(ws.path("out/curves/char965.csv")).unwrap();
    let second = liquid(&["fit", "--config", s(&ws.path("run.json")), "--out", s(&ws.path("out"))]);
    assert!(first.status.success() && second.status.success());
    assert_eq!(first.stdout, second.stdout);
    assert_eq!(fs::read(ws.path("out/model.json")).unwrap(), model);
    assert_eq!(fs::read(ws.path("out/curves/char965.csv")).unwrap(), curve);

    // a different split seed changes the fit
    let third = ws.fit("other", &["--seed", "5"]);
    let before: Value = serde_json::from_slice(&first.stdout).unwrap();
    assert_ne!(third["val_divergence"], before["val_divergence"]);
}

#[test]
fn huge_smoothness_gives_a_linear_curve() {
    let ws = Workspace::new(6_000);
    ws.fit("smooth", &["--lambda2", "char965=1e10"]);
    let (_, rows) = read_curve(&ws.path("smooth/curves/char965.csv"));
    let xs: Vec<f64> = rows.iter().map(|r| r[0]).collect();
    let cs: Vec<f64> = rows.iter().map(|r| r[1]).collect();
    assert!(relative_linearity_deviation(&xs, &cs) < 1e-3);
    assert!(is_monotone(&cs, 0.0) || is_monotone(&cs.iter().map(|c| -c).collect::<Vec<_>>(), 0.0));

    ws.fit("rough", &["--lambda2", "char965=0"]);
    let (_, rows) = read_curve(&ws.path("rough/curves/char965.csv"));
    let cs: Vec<f64> = rows.iter().map(|r| r[1]).collect();
    assert!(relative_linearity_deviation(&xs, &cs) > 1e-2);
}

#[test]
fn tune_report_is_ordered_replayable_and_marks_discrete() {
    let ws = Workspace::new(6_000);
    let summary = ok(&[
        "tune",
        "--config",
        s(&ws.path("run.json")),
        "--out",
        s(&ws.path("tune")),
        "--grid",
        "0,1e2,1e5,3.1622776601683794e7,1e10",
    ]);
    let report: TuneReport = serde_json::from_str(&fs::read_to_string(ws.path("tune/report.json")).unwrap()).unwrap();
    assert_eq!(summary["final_val_divergence"].as_f64().unwrap(), report.final_val_divergence);
    assert_eq!(report.grid, [0.0, 1e2, 1e5, 3.1622776601683794e7, 1e10]);
    let names: Vec<&str> = report.contributions.iter().map(|c| c.name.as_str()).collect();
    assert_eq!(report.ordering, names);
    assert!(report.contributions.windows(2).all(|w| w[0].contribution >= w[1].contribution));
    assert_eq!(report.chosen_lambda2["region"], None);
    assert!(report.chosen_lambda2["char965"].is_some());
    assert_eq!(report.trace.len(), 2);

    let raw: Value = serde_json::from_str(&fs::read_to_string(ws.path("tune/report.json")).unwrap()).unwrap();
    assert!(raw["chosen_lambda2"]["region"].is_null());

    let (dev, val) = ws.split();
    let spec = model();
    let replay = FitContext::new(&spec, &dev, Some(&val)).unwrap().fit(&report.fit_params(&spec)).unwrap();
    assert!((replay.val_divergence.unwrap() - report.final_val_divergence).abs() < 1e-9);
}

#[test]
fn zero_signal_data_has_almost_no_divergence() {
    let dir = TempDir::new().unwrap();
    let mut spec = synth_spec(20_000, 8);
    spec.characteristics.truncate(1);
    spec.characteristics[0].curve = TrueCurve::Zero;
    fs::write(dir.path().join("synth.json"), serde_json::to_string(&spec).unwrap()).unwrap();
    ok(&["synth", "--config", s(&dir.path().join("synth.json")), "--out", s(&dir.path().join("d.csv"))]);
    let mut m = model();
    m.characteristics.truncate(1);
    m.characteristics[0].pattern = liquid_core::Pattern::Ascending;
    let run = json!({ "schema_version": 1, "model": m, "data": "d.csv", "split": { "val_fraction": 0.3, "seed": 1 } });
    fs::write(dir.path().join("run.json"), run.to_string()).unwrap();
    let summary = ok(&["fit", "--config", s(&dir.path().join("run.json")), "--out", s(&dir.path().join("out"))]);
    assert!(summary["val_divergence"].as_f64().unwrap() < 0.02, "{summary}");
}

#[test]
fn config_errors_exit_with_code_2() {
    let ws = Workspace::new(1_000);
    let run = s(&ws.path("run.json")).to_string();
    let out = s(&ws.path("out")).to_string();

    let err = fails(&["fit", "--config", s(&ws.path("nope.json")), "--out", &out], 2);
    assert_eq!(err["code"], "IO");
    assert_eq!(err["exit_code"], 2);

    let err = fails(&["fit", "--config", &run, "--out", &out, "--lambda2", "nope=1"], 2);
    assert_eq!(err["code"], "UNKNOWN_CHARACTERISTIC");
    let err = fails(&["fit", "--config", &run, "--out", &out, "--lambda2", "char965=-1"], 2);
    assert_eq!(err["code"], "INVALID_OVERRIDE");

    // argument parsing errors share the exit code
    let parse = liquid(&["fit", "--config", &run, "--lambda2", "char965"]);
    assert_eq!(parse.status.code(), Some(2));
    let parse = liquid(&["tune", "--config", &run, "--grid", "1,2"]);
    assert_eq!(parse.status.code(), Some(2));

    fs::write(ws.path("bad.json"), "{ not json").unwrap();
    let err = fails(&["fit", "--config", s(&ws.path("bad.json"))], 2);
    assert_eq!(err["code"], "INVALID_JSON");

    let mut cfg: Value = serde_json::from_str(&fs::read_to_string(ws.path("run.json")).unwrap()).unwrap();
    cfg["schema_version"] = json!(7);
    fs::write(ws.path("v7.json"), cfg.to_string()).unwrap();
    assert_eq!(fails(&["fit", "--config", s(&ws.path("v7.json"))], 2)["code"], "UNSUPPORTED_SCHEMA");

    cfg["schema_version"] = json!(1);
    cfg["model"]["characteristics"][2]["column"] = json!("zone");
    fs::write(ws.path("zone.json"), cfg.to_string()).unwrap();
    let err = fails(&["fit", "--config", s(&ws.path("zone.json")), "--out", &out], 2);
    assert_eq!(err["code"], "MISSING_COLUMN");
    assert_eq!(err["detail"]["column"], "zone");

    cfg["model"]["characteristics"][2]["column"] = Value::Null;
    cfg["split"]["val_fraction"] = json!(0.0);
    fs::write(ws.path("frac.json"), cfg.to_string()).unwrap();
    assert_eq!(fails(&["fit", "--config", s(&ws.path("frac.json")), "--out", &out], 2)["code"], "INVALID_SPLIT");
}

#[test]
fn numerical_failures_exit_with_code_3() {
    let ws = Workspace::new(1_000);
    let text = fs::read_to_string(ws.path("data.csv")).unwrap();
    let mut lines = text.lines();
    let mut one_class = lines.next().unwrap().to_string() + "\n";
    for line in lines {
        one_class += &format!("0{}\n", &line[1..]);
    }
    fs::write(ws.path("bad.csv"), one_class).unwrap();
    let err = fails(
        &["fit", "--config", s(&ws.path("run.json")), "--data", s(&ws.path("bad.csv")), "--out", s(&ws.path("o"))],
        3,
    );
    assert_eq!(err["code"], "DEGENERATE_CLASSES");
    assert!(err["message"].is_string());
}

fn card() -> StepScorecard {
    let mut bins = Vec::new();
    for (k, w) in CHAR965.windows(2).enumerate() {
        let last = k == CHAR965.len() - 2;
        bins.push(StepBin::interval(&format!("{} to {}", w[0], w[1]), Some(w[0]), Some(w[1]), true, last, k as f64));
    }
    bins.push(StepBin::interval("1425 and up", Some(1425.0), None, false, false, 9.0));
    StepScorecard {
        schema_version: 1,
        characteristics: vec![StepCharacteristic {
            name: "char965".into(),
            column: None,
            bins,
            smoothing: None,
        }],
    }
}

#[test]
fn smooth_rewrites_the_card() {
    let ws = Workspace::new(6_000);
    let cfg = json!({ "schema_version": 1, "scorecard": card(), "data": "data.csv" });
    fs::write(ws.path("smooth.json"), cfg.to_string()).unwrap();
    let out = ws.path("smoothed.json");
    let summary = ok(&["smooth", "--config", s(&ws.path("smooth.json")), "--out", s(&out), "--lambda2", "char965=1e10"]);
    assert_eq!(summary["flagged_bins"], json!([]));
    let smoothed: StepScorecard = serde_json::from_str(&fs::read_to_string(&out).unwrap()).unwrap();
    let c = &smoothed.characteristics[0];
    assert_eq!(c.bins.len(), card().characteristics[0].bins.len());
    assert_eq!(c.smoothing.as_ref().unwrap().lambda2, 1e10);
    for (bin, original) in c.bins.iter().zip(&card().characteristics[0].bins) {
        assert_eq!(bin.original_weight, Some(original.weight));
    }
    let bounded: Vec<f64> = c.bins[..CHAR965.len() - 1].iter().map(|b| b.weight).collect();
    assert!(is_monotone(&bounded, 0.0) || is_monotone(&bounded.iter().map(|w| -w).collect::<Vec<_>>(), 0.0));

    let bad = json!({ "schema_version": 1, "scorecard": card() });
    fs::write(ws.path("nodata.json"), bad.to_string()).unwrap();
    assert_eq!(fails(&["smooth", "--config", s(&ws.path("nodata.json"))], 2)["code"], "MISSING_DATA");
}

#[test]
fn serve_answers_health_checks() {
    let mut child = Command::new(env!("CARGO_BIN_EXE_liquid"))
        .args(["serve", "--addr", "127.0.0.1:0"])
        .stderr(Stdio::piped())
        .spawn()
        .unwrap();
    let mut stderr = BufReader::new(child.stderr.take().unwrap());
    let mut line = String::new();
    stderr.read_line(&mut line).unwrap();
    let addr = line.trim().rsplit(' ').next().unwrap().to_string();

    let mut stream = TcpStream::connect(&addr).unwrap();
    write!(stream, "GET /healthz HTTP/1.1\r\nHost: {addr}\r\nConnection: close\r\n\r\n").unwrap();
    let mut response = String::new();
    stream.read_to_string(&mut response).unwrap();
    child.kill().unwrap();
    child.wait().unwrap();
    assert!(response.starts_with("HTTP/1.1 200"), "{response}");
    assert!(response.contains("\"status\":\"ok\""));
}
