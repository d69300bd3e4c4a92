use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;

const ANNIHILATION_CREATION: &str = r#"{"xi": 3, "rates": {"11<-00": 1, "00<-11": 1}}"#;
const ANNIHILATION: &str = r#"{"xi": 3, "rates": {"00<-11": 1}}"#;
const DIFFUSION_CHAIN: &str = r#"{"xi": 2, "rates": {"10<-01": 1, "01<-10": 1}}"#;
const DIFFUSION_TREE: &str = r#"{"xi": 3, "rates": {"10<-01": 1, "01<-10": 1}}"#;

struct Sandbox {
    dir: TempDir,
}

impl Sandbox {
    fn new() -> Sandbox {
        Sandbox {
            dir: tempfile::tempdir().unwrap(),
        }
    }

    fn file(&self, name: &str, contents: &str) -> PathBuf {
        let p = self.dir.path().join(name);
        std::fs::write(&p, contents).unwrap();
        p
    }

    fn path(&self, name: &str) -> PathBuf {
        self.dir.path().join(name)
    }
}

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_cayley-rd"))
        .args(args)
        .output()
        .unwrap()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8(o.stderr.clone()).unwrap()
}

/// Rows of a CSV body as floats, skipping the header and comment lines.
fn csv_rows(text: &str) -> Vec<Vec<f64>> {
    text.lines()
        .filter(|l| !l.starts_with('#'))
        .skip(1)
        .filter(|l| !l.is_empty() && !l.starts_with('a'))
        .map(|l| l.split(',').map(|c| c.parse().unwrap()).collect())
        .collect()
}

#[test]
fn validate_exit_codes() {
    let s = Sandbox::new();
    let ok = run(&[
        "validate",
        "--rates",
        p(&s.file("ac.json", ANNIHILATION_CREATION)),
    ]);
    assert_eq!(ok.status.code(), Some(0));
    assert!(stdout(&ok).contains("residual 0"));

    let bad = run(&["validate", "--rates", p(&s.file("a.json", ANNIHILATION))]);
    assert_eq!(bad.status.code(), Some(1));
    assert!(stdout(&bad).contains("residual 1"));

    let key = run(&[
        "validate",
        "--rates",
        p(&s.file("k.json", r#"{"xi": 3, "rates": {"12<-01": 1}}"#)),
    ]);
    assert_eq!(key.status.code(), Some(2));
    assert!(stderr(&key).contains("12<-01"));

    let syntax = run(&[
        "validate",
        "--rates",
        p(&s.file("s.json", "{\"xi\": 3,\n \"rates\": {\"10<-01\" 1}}")),
    ]);
    assert_eq!(syntax.status.code(), Some(2));
    assert!(stderr(&syntax).contains("line 2"), "{}", stderr(&syntax));

    let json = run(&[
        "validate",
        "--json",
        "--rates",
        p(&s.file("n.json", r#"{"xi": 3, "rates": {"10<-01": -1}}"#)),
    ]);
    assert_eq!(json.status.code(), Some(1));
    let v: Value = serde_json::from_str(&stdout(&json)).unwrap();
    assert_eq!(v["nonnegative"], false);
    assert_eq!(v["schema_version"], 1);
}

#[test]
fn autonomy_tolerance_flag() {
    let s = Sandbox::new();
    let rates = s.file(
        "r.json",
        r#"{"xi": 3, "rates": {"11<-00": 1, "00<-11": 1.0000000001}}"#,
    );
    assert_eq!(
        run(&["validate", "--rates", p(&rates)]).status.code(),
        Some(1)
    );
    assert_eq!(
        run(&["validate", "--rates", p(&rates), "--tol", "1e-9"])
            .status
            .code(),
        Some(0)
    );
}

#[test]
fn coefficients_report() {
    let s = Sandbox::new();
    let o = run(&[
        "coefficients",
        "--rates",
        p(&s.file("ac.json", ANNIHILATION_CREATION)),
    ]);
    assert_eq!(o.status.code(), Some(0));
    let v: Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(v["alpha"], 1.0);
    assert_eq!(v["beta"], -1.0);
    assert_eq!(v["gamma"], 1.0);
    assert_eq!(v["stationary_density"], 0.5);
    let d = run(&[
        "coefficients",
        "--rates",
        p(&s.file("d.json", DIFFUSION_TREE)),
    ]);
    let v: Value = serde_json::from_str(&stdout(&d)).unwrap();
    assert_eq!(v["stationary_density"], "conserved");
    assert!((v["crossover_time"].as_f64().unwrap() - 8.3255).abs() < 1e-3);
    assert_eq!(
        run(&[
            "coefficients",
            "--rates",
            p(&s.file("a.json", ANNIHILATION))
        ])
        .status
        .code(),
        Some(1)
    );
}

#[test]
fn green_identity_and_chain_limit() {
    let s = Sandbox::new();
    let chain = s.file("c.json", DIFFUSION_CHAIN);
    let id = run(&[
        "green",
        "--rates",
        p(&chain),
        "--a-max",
        "6",
        "--b-max",
        "6",
        "--times",
        "0",
    ]);
    assert_eq!(id.status.code(), Some(0));
    for (a, row) in csv_rows(&stdout(&id)).iter().enumerate() {
        for (b, g) in row[1..].iter().enumerate() {
            let want = if a == b { 1.0 } else { 0.0 };
            assert!((g - want).abs() <= 1e-8);
        }
    }
    let args = [
        "green",
        "--rates",
        p(&chain),
        "--a-max",
        "10",
        "--b-max",
        "10",
        "--times",
        "0.1,1,10",
    ];
    let quad = csv_rows(&stdout(&run(&args)));
    let mut with_limit = args.to_vec();
    with_limit.extend(["--limit", "chain"]);
    let closed = csv_rows(&stdout(&run(&with_limit)));
    assert_eq!(quad.len(), closed.len());
    for (x, y) in quad.iter().zip(&closed) {
        for (u, v) in x.iter().zip(y) {
            assert!((u - v).abs() <= 1e-8);
        }
    }
    let tree = s.file("t.json", DIFFUSION_TREE);
    let wrong = run(&[
        "green",
        "--rates",
        p(&tree),
        "--times",
        "1",
        "--limit",
        "chain",
    ]);
    assert_eq!(wrong.status.code(), Some(2));
}

#[test]
fn green_files_log_space_and_conservation() {
    let s = Sandbox::new();
    let tree = s.file("t.json", DIFFUSION_TREE);
    let dir = s.path("grid");
    let o = run(&[
        "green",
        "--rates",
        p(&tree),
        "--a-max",
        "3",
        "--b-max",
        "2",
        "--times",
        "0.5,2",
        "--log-space",
        "--check",
        "conservation",
        "--output",
        p(&dir),
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(stderr(&o).matches("conservation").count() == 2);
    let text = std::fs::read_to_string(dir.join("green_t001.csv")).unwrap();
    assert!(text.starts_with("a,b,log_prefactor,integral"));
    assert_eq!(text.lines().count(), 1 + 4 * 3);
    let manifest: Value =
        serde_json::from_str(&std::fs::read_to_string(dir.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["command"], "green");
    assert_eq!(manifest["schema_version"], 1);
    assert_eq!(manifest["inputs"]["log-space"], true);

    let json = s.path("g.json");
    let o = run(&[
        "green",
        "--rates",
        p(&tree),
        "--a-max",
        "1",
        "--b-max",
        "1",
        "--times",
        "1",
        "--format",
        "json",
        "--output",
        p(&json),
    ]);
    assert_eq!(o.status.code(), Some(0));
    let v: Value = serde_json::from_str(&std::fs::read_to_string(&json).unwrap()).unwrap();
    assert_eq!(v["records"].as_array().unwrap().len(), 4);
    let r = &v["records"][1];
    let value = r["value"].as_f64().unwrap();
    let split = r["integral"].as_f64().unwrap() * r["log_prefactor"].as_f64().unwrap().exp();
    assert!((value - split).abs() <= 1e-15);
    assert!(s.path("g.json.manifest.json").exists());

    let ac = s.file("ac.json", ANNIHILATION_CREATION);
    let o = run(&[
        "green",
        "--rates",
        p(&ac),
        "--times",
        "1",
        "--check",
        "conservation",
    ]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn evolve_solvers_agree() {
    let s = Sandbox::new();
    let rates = s.file("t.json", DIFFUSION_TREE);
    let init = s.file("step.json", r#"{"step": {"height": 0.3, "radius": 2}}"#);
    let mut outs = Vec::new();
    for solver in ["shell", "green", "site"] {
        let o = run(&[
            "evolve",
            "--rates",
            p(&rates),
            "--init",
            p(&init),
            "--times",
            "0,1",
            "--shells",
            "4",
            "--solver",
            solver,
            "--depth",
            "12",
        ]);
        assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
        assert!(stdout(&o).starts_with("t,a,rho\n"));
        outs.push(csv_rows(&stdout(&o)));
    }
    for rows in &outs[1..] {
        for (x, y) in rows.iter().zip(&outs[0]) {
            assert_eq!(x[..2], y[..2]);
            assert!((x[2] - y[2]).abs() <= 1e-6);
        }
    }
    // t = 0 reproduces the step
    for row in outs[0].iter().filter(|r| r[0] == 0.0) {
        let want = if row[1] <= 2.0 { 0.3 } else { 0.0 };
        assert!((row[2] - want).abs() < 1e-12);
    }
}

#[test]
fn evolve_per_shell_profile_and_dynamic_flag() {
    let s = Sandbox::new();
    let rates = s.file("ac.json", ANNIHILATION_CREATION);
    let init = s.file("p.json", r#"{"kind": "per-shell", "values": [1.0, 0.8]}"#);
    let full = run(&[
        "evolve",
        "--rates",
        p(&rates),
        "--init",
        p(&init),
        "--times",
        "0.5",
        "--shells",
        "3",
    ]);
    let dy = run(&[
        "evolve",
        "--rates",
        p(&rates),
        "--init",
        p(&init),
        "--times",
        "0.5",
        "--shells",
        "3",
        "--dynamic",
    ]);
    assert!(stdout(&dy).starts_with("t,a,rho_dy\n"));
    for (x, y) in csv_rows(&stdout(&full)).iter().zip(csv_rows(&stdout(&dy))) {
        assert!((x[2] - y[2] - 0.5).abs() < 1e-15);
    }
    let bad = s.file("b.json", r#"{"kind": "per-site", "values": [1.0]}"#);
    assert_eq!(
        run(&[
            "evolve",
            "--rates",
            p(&rates),
            "--init",
            p(&bad),
            "--times",
            "1"
        ])
        .status
        .code(),
        Some(2)
    );
}

#[test]
fn simulate_is_reproducible_across_thread_counts() {
    let s = Sandbox::new();
    let rates = s.file("ac.json", ANNIHILATION_CREATION);
    let mut csvs = Vec::new();
    for threads in ["1", "4"] {
        let out = s.path(&format!("sim{threads}.csv"));
        let o = run(&[
            "simulate",
            "--rates",
            p(&rates),
            "--depth",
            "3",
            "--init",
            "bernoulli:0.5",
            "--runs",
            "500",
            "--seed",
            "9",
            "--times",
            "0.5,1",
            "--threads",
            threads,
            "--output",
            p(&out),
        ]);
        assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
        csvs.push(std::fs::read_to_string(&out).unwrap());
        let summary: Value = serde_json::from_str(
            &std::fs::read_to_string(s.path(&format!("sim{threads}.csv.summary.json"))).unwrap(),
        )
        .unwrap();
        assert!(summary["events_per_second"].as_f64().unwrap() > 0.0);
        let manifest: Value = serde_json::from_str(
            &std::fs::read_to_string(s.path(&format!("sim{threads}.csv.manifest.json"))).unwrap(),
        )
        .unwrap();
        assert_eq!(manifest["seed"], 9);
    }
    assert_eq!(csvs[0], csvs[1]);
    assert!(csvs[0].starts_with("t,site,shell,mean,stderr\n"));
    assert_eq!(csvs[0].lines().count(), 1 + 2 * 22);
}

#[test]
fn simulate_rejects_bad_init() {
    let s = Sandbox::new();
    let rates = s.file("ac.json", ANNIHILATION_CREATION);
    let o = run(&[
        "simulate",
        "--rates",
        p(&rates),
        "--depth",
        "1",
        "--init",
        "bitmask:zz",
        "--times",
        "1",
    ]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn oracle_separates_autonomous_models() {
    let s = Sandbox::new();
    let ok = run(&[
        "oracle",
        "--rates",
        p(&s.file("ac.json", ANNIHILATION_CREATION)),
        "--t",
        "2",
    ]);
    assert_eq!(ok.status.code(), Some(0));
    let bad = run(&[
        "oracle",
        "--rates",
        p(&s.file("a.json", ANNIHILATION)),
        "--depth",
        "1",
    ]);
    assert_eq!(bad.status.code(), Some(1));
    let v: Value = serde_json::from_str(&stdout(&bad)).unwrap();
    assert!((v["max_gap"].as_f64().unwrap() - 0.3400355474004979).abs() < 1e-9);
}

#[test]
fn asymptotics_table() {
    let s = Sandbox::new();
    let o = run(&[
        "asymptotics",
        "--rates",
        p(&s.file("t.json", DIFFUSION_TREE)),
        "--times",
        "50,100,200",
    ]);
    assert_eq!(o.status.code(), Some(0));
    assert!(stderr(&o).contains("crossover_time="));
    let rows = csv_rows(&stdout(&o));
    assert_eq!(rows.len(), 3);
    // the quadrature approaches the large-time form from below
    assert!(rows[0][4] < rows[1][4] && rows[1][4] < rows[2][4] && rows[2][4] < 1.0);
}

#[test]
fn compare_scenarios() {
    let s = Sandbox::new();
    let rates = s.file("t.json", DIFFUSION_TREE);
    let scenario = s.file(
        "s.json",
        r#"{"scenarios": [{"name": "step", "init": {"step": {"height": 0.3, "radius": 2}}, "times": [1.0],
            "depth": 12, "shells": 4, "solvers": ["green", "shell", "site", "ensemble"], "runs": 10000, "seed": 1}]}"#,
    );
    let o = run(&[
        "compare",
        "--rates",
        p(&rates),
        "--scenario",
        p(&scenario),
        "--json",
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stdout(&o));
    let v: Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(v["rows"].as_array().unwrap().len(), 4);
    assert_eq!(v["pass"], true);

    let empty = s.file("e.json", r#"{"scenarios": []}"#);
    let o = run(&["compare", "--rates", p(&rates), "--scenario", p(&empty)]);
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(stdout(&o).lines().count(), 1);

    let shallow = s.file(
        "h.json",
        r#"{"scenarios": [{"name": "shallow", "init": {"step": {"height": 0.3, "radius": 2}}, "times": [1.0],
            "depth": 5, "shells": 4, "solvers": ["green", "site"]}]}"#,
    );
    let o = run(&["compare", "--rates", p(&rates), "--scenario", p(&shallow)]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stdout(&o).contains("refused"));
}

#[test]
fn config_file_supplies_defaults_and_flags_win() {
    let s = Sandbox::new();
    let rates = s.file("ac.json", ANNIHILATION_CREATION);
    let config = s.file(
        "cfg.json",
        &format!(
            r#"{{"simulate": {{"rates": {:?}, "depth": 1, "runs": 7, "times": [0.5]}}}}"#,
            p(&rates)
        ),
    );
    let out = s.path("o.csv");
    let o = run(&[
        "simulate",
        "--config",
        p(&config),
        "--runs",
        "3",
        "--output",
        p(&out),
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let summary: Value =
        serde_json::from_str(&std::fs::read_to_string(s.path("o.csv.summary.json")).unwrap())
            .unwrap();
    assert_eq!(summary["runs"], 3);
    let o = run(&["simulate", "--config", p(&config), "--output", p(&out)]);
    assert_eq!(o.status.code(), Some(0));
    let summary: Value =
        serde_json::from_str(&std::fs::read_to_string(s.path("o.csv.summary.json")).unwrap())
            .unwrap();
    assert_eq!(summary["runs"], 7);
    let typo = s.file("bad.json", r#"{"simulate": {"rnus": 7}}"#);
    assert_eq!(
        run(&["simulate", "--config", p(&typo)]).status.code(),
        Some(2)
    );
}

#[test]
fn missing_required_option_is_a_usage_error() {
    let o = run(&["green", "--times", "1"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("--rates"));
    assert_eq!(run(&["frobnicate"]).status.code(), Some(2));
}
