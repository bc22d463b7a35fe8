use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;

const HEADER: &str = "k,strike,iv_asymptotic,iv_oracle,abs_error,source";

fn configs() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("configs")
}

fn run_with(cmd: &str, config: &Path, out: &Path, threads: Option<&str>) -> Output {
    let mut c = Command::new(env!("CARGO_BIN_EXE_basket-wing"));
    c.arg(cmd).arg("--config").arg(config).arg("--out").arg(out);
    match threads {
        Some(t) => c.env("BASKET_WING_THREADS", t),
        None => c.env_remove("BASKET_WING_THREADS"),
    };
    c.output().expect("binary runs")
}

fn run(cmd: &str, config: &Path, out: &Path) -> Output {
    run_with(cmd, config, out, None)
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn assert_exit(o: &Output, code: i32) {
    assert_eq!(o.status.code(), Some(code), "stdout: {}\nstderr: {}", String::from_utf8_lossy(&o.stdout), stderr(o));
}

struct Csv {
    header: String,
    rows: Vec<Vec<String>>,
}

impl Csv {
    fn read(path: &Path) -> Self {
        let text = fs::read_to_string(path).unwrap();
        let mut lines = text.lines();
        let header = lines.next().unwrap().to_string();
        let rows = lines.map(|l| l.split(',').map(String::from).collect()).collect();
        Self { header, rows }
    }

    fn col(&self, name: &str) -> Vec<Option<f64>> {
        let idx = self.header.split(',').position(|h| h == name).unwrap();
        self.rows.iter().map(|r| (!r[idx].is_empty()).then(|| r[idx].parse().unwrap())).collect()
    }
}

fn json(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

fn write_config(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    fs::write(&p, text).unwrap();
    p
}

#[test]
fn single_asset_curve_is_flat_against_quadrature() {
    let out = TempDir::new().unwrap();
    assert_exit(&run("leftwing", &configs().join("bs_single.toml"), out.path()), 0);
    let csv = Csv::read(&out.path().join("bs_single-leftwing.csv"));
    assert_eq!(csv.header, HEADER);
    assert_eq!(csv.rows.len(), 10);
    for (a, e) in csv.col("iv_asymptotic").iter().zip(csv.col("abs_error")) {
        assert!((a.unwrap() - 0.2).abs() < 1e-12);
        assert!(e.unwrap() < 1e-6);
    }
}

#[test]
fn reference_basket_error_decays() {
    let out = TempDir::new().unwrap();
    assert_exit(&run("leftwing", &configs().join("bs_reference.toml"), out.path()), 0);
    let errors: Vec<f64> = Csv::read(&out.path().join("bs_reference-leftwing.csv"))
        .col("abs_error")
        .into_iter()
        .map(Option::unwrap)
        .collect();
    assert!(errors.windows(2).all(|w| w[1] < w[0]), "{errors:?}");
    let summary = json(&out.path().join("bs_reference-leftwing.json"));
    assert_eq!(summary["regime"], "below");
    assert!(summary["coefficients"]["c1"].is_f64());
}

#[test]
fn exceptional_regime_is_flat_at_sigma2() {
    let out = TempDir::new().unwrap();
    assert_exit(&run("leftwing", &configs().join("bs_exceptional.toml"), out.path()), 0);
    let summary = json(&out.path().join("bs_exceptional-leftwing.json"));
    assert_eq!(summary["regime"], "exceptional");
    let csv = Csv::read(&out.path().join("bs_exceptional-leftwing.csv"));
    assert!(csv.col("iv_asymptotic").iter().all(|v| *v == Some(0.2)));
    let errors: Vec<f64> = csv.col("abs_error").into_iter().map(Option::unwrap).collect();
    assert!(errors.windows(2).all(|w| w[1] < w[0]), "{errors:?}");
    assert!(summary["points"][4]["extra"]["log_envelope"].is_f64());
}

#[test]
fn right_wing_columns() {
    let out = TempDir::new().unwrap();
    assert_exit(&run("rightwing", &configs().join("bs_reference.toml"), out.path()), 0);
    let csv = Csv::read(&out.path().join("bs_reference-rightwing.csv"));
    assert!(csv.col("iv_asymptotic").iter().all(|v| *v == Some(0.3)));
    let gaps: Vec<f64> = csv.col("abs_error").into_iter().map(Option::unwrap).collect();
    assert!(gaps.windows(2).all(|w| w[1] < w[0]), "{gaps:?}");

    assert_exit(&run("rightwing", &configs().join("timechange_gamma.toml"), out.path()), 0);
    let summary = json(&out.path().join("timechange_gamma-rightwing.json"));
    let coefficient = summary["coefficients"]["coefficient"].as_f64().unwrap();
    let csv = Csv::read(&out.path().join("timechange_gamma-rightwing.csv"));
    for (k, iv) in csv.col("k").into_iter().zip(csv.col("iv_asymptotic")) {
        let expected = coefficient * k.unwrap().sqrt();
        assert!((iv.unwrap() / expected - 1.0).abs() < 1e-12);
    }
}

#[test]
fn copula_right_wing_notes_the_copula_is_ignored() {
    let out = TempDir::new().unwrap();
    assert_exit(&run("rightwing", &configs().join("copula_gumbel.toml"), out.path()), 0);
    let summary = json(&out.path().join("copula_gumbel-rightwing.json"));
    let notes = summary["notes"].as_array().unwrap();
    assert!(notes.iter().any(|n| n.as_str().unwrap().contains("copula ignored")));
    let csv = Csv::read(&out.path().join("copula_gumbel-rightwing.csv"));
    assert!(csv.col("iv_oracle").iter().all(Option::is_none));
    assert!(csv.rows.iter().all(|r| r[5] == "asymptotic-copula-right"));

    // same slopes under a different copula give the same column
    let other = fs::read_to_string(configs().join("copula_gumbel.toml"))
        .unwrap()
        .replace("kind = \"gumbel\"\ntheta = 2.0", "kind = \"clayton\"\ntheta = 1.0");
    let cfg = write_config(out.path(), "clayton.toml", &other);
    assert_exit(&run("rightwing", &cfg, out.path()), 0);
    assert_eq!(Csv::read(&out.path().join("clayton-rightwing.csv")).col("iv_asymptotic"), csv.col("iv_asymptotic"));
}

#[test]
fn shipped_configs_validate() {
    let out = TempDir::new().unwrap();
    let mut seen = 0;
    for entry in fs::read_dir(configs()).unwrap() {
        let path = entry.unwrap().path();
        let name = path.file_name().unwrap().to_string_lossy().into_owned();
        if !name.ends_with(".toml") || name.ends_with(".spec.toml") {
            continue;
        }
        let o = run("validate", &path, out.path());
        assert_exit(&o, 0);
        let report = json(&out.path().join(name.replace(".toml", "-validate.json")));
        assert_eq!(report["pass"], true, "{name}");
        for c in report["criteria"].as_array().unwrap() {
            assert!(c["measured"].is_number() && c["tolerance"].is_number(), "{name}: {c}");
        }
        seen += 1;
    }
    assert_eq!(seen, 8);
}

#[test]
fn martingale_violation_exits_3_naming_the_condition() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(
        dir.path(),
        "mart.toml",
        r#"
model = "timechange"
k_grid = [2.0, 4.0]

[oracle]
kind = "mc"
paths = 10000
seed = 1

[basket]
weights = [1.0]
vols = [1.5]
maturity = 1.0

[timechange]
family = "gamma"
c = 1.0
rate = 1.0
"#,
    );
    for cmd in ["leftwing", "validate"] {
        let o = run(cmd, &cfg, dir.path());
        assert_exit(&o, 3);
        assert!(stderr(&o).contains("martingale condition"), "{}", stderr(&o));
    }
}

#[test]
fn bad_configs_exit_2() {
    let dir = TempDir::new().unwrap();
    let base = fs::read_to_string(configs().join("bs_reference.toml")).unwrap();
    let cases = [
        ("missing_grid", base.replace("k_grid = [4.0, 6.0, 8.0, 10.0, 12.0, 14.0, 16.0]\n", "")),
        ("unsorted", base.replace("[4.0, 6.0, 8.0", "[6.0, 4.0, 8.0")),
        ("empty", base.replace("[4.0, 6.0, 8.0, 10.0, 12.0, 14.0, 16.0]", "[]")),
        ("typo", base.replace("maturity", "maturty")),
        ("weights", base.replace("[0.5, 0.5]", "[0.5, 0.6]")),
        ("no_basket", base[..base.find("[basket]").unwrap()].to_string()),
        ("too_few_nodes", base.replace("nodes = 200", "nodes = 10")),
        ("left_k_too_small", base.replace("[4.0, 6.0", "[0.5, 6.0")),
        ("not_toml", "model = ".into()),
    ];
    for (name, text) in cases {
        let cfg = write_config(dir.path(), &format!("{name}.toml"), &text);
        let o = run("leftwing", &cfg, dir.path());
        assert_exit(&o, 2);
        assert!(stderr(&o).contains("config error"), "{name}: {}", stderr(&o));
    }
    assert_exit(&run("leftwing", &dir.path().join("absent.toml"), dir.path()), 2);

    let no_oracle = write_config(dir.path(), "no_oracle.toml", &base.replace("kind = \"quad\"", "kind = \"none\""));
    assert_exit(&run("leftwing", &no_oracle, dir.path()), 0);
    assert_exit(&run("validate", &no_oracle, dir.path()), 2);

    let good = configs().join("bs_single.toml");
    assert_exit(&run_with("leftwing", &good, dir.path(), Some("zero")), 2);
    assert_exit(&run_with("leftwing", &good, dir.path(), Some("0")), 2);
    let o = Command::new(env!("CARGO_BIN_EXE_basket-wing")).arg("sideways").output().unwrap();
    assert_exit(&o, 2);
}

#[test]
fn outputs_are_byte_identical_across_runs_and_thread_counts() {
    let mut outputs = Vec::new();
    for threads in [None, Some("1"), Some("3")] {
        let out = TempDir::new().unwrap();
        for (cmd, cfg) in [("leftwing", "bs_mc"), ("rightwing", "bs_mc"), ("leftwing", "timechange_gamma")] {
            assert_exit(&run_with(cmd, &configs().join(format!("{cfg}.toml")), out.path(), threads), 0);
        }
        let mut files: Vec<(String, Vec<u8>)> = fs::read_dir(out.path())
            .unwrap()
            .map(|e| {
                let p = e.unwrap().path();
                (p.file_name().unwrap().to_string_lossy().into_owned(), fs::read(&p).unwrap())
            })
            .collect();
        files.sort();
        assert_eq!(files.len(), 6);
        outputs.push(files);
    }
    assert_eq!(outputs[0], outputs[1]);
    assert_eq!(outputs[0], outputs[2]);
}

#[test]
fn spec_file_and_output_stem() {
    let dir = TempDir::new().unwrap();
    let text = fs::read_to_string(configs().join("timechange_basket.toml"))
        .unwrap()
        .replace("spec = \"timechange_basket.spec.toml\"", "spec = \"models/tc.toml\"\noutput = \"renamed\"")
        .replace("paths = 1000000", "paths = 20000");
    fs::create_dir(dir.path().join("models")).unwrap();
    fs::copy(configs().join("timechange_basket.spec.toml"), dir.path().join("models/tc.toml")).unwrap();
    let cfg = write_config(dir.path(), "run.toml", &text);
    let out = dir.path().join("nested/out");
    assert_exit(&run("leftwing", &cfg, &out), 0);
    let summary = json(&out.join("renamed-leftwing.json"));
    assert_eq!(summary["model"], "timechange");
    assert!(summary["c_star"].as_f64().unwrap() > 0.0);
}
