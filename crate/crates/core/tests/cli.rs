use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use sofr_core::kernels::KernelSet;
use sofr_core::pricing::convexity;
use sofr_core::termstructure::load_config;

const DESK: &str = r#"{
  "horizon": 3.0,
  "curves": {
    "alpha": {"breakpoints": [0], "values": [0.03]},
    "sigma": {"breakpoints": [0, 1.0], "values": [0.01, 0.008]},
    "gamma": {"breakpoints": [0], "values": [20]},
    "y_star": {"breakpoints": [0], "values": [-0.002]},
    "rbar": {"breakpoints": [0, 2.0], "values": [0.02, 0.025]}
  },
  "contracts": [
    {"kind": "sofr3m", "t1": 0.5, "t2": 0.75, "delta": 0.25},
    {"kind": "sofr1m", "t1": 0.5, "t2": 0.5833333333333334, "delta": 0.08333333333333337},
    {"kind": "forward", "t1": 1.0, "t2": 1.25, "delta": 0.25}
  ]
}"#;

fn write(dir: &Path, name: &str, text: &str) -> PathBuf {
    let path = dir.join(name);
    std::fs::write(&path, text).unwrap();
    path
}

fn sofrfut(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_sofrfut"))
        .args(args)
        .output()
        .unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

#[test]
fn price_table_matches_the_library_bit_for_bit() {
    let dir = tempfile::tempdir().unwrap();
    let cfg_path = write(dir.path(), "desk.json", DESK);
    let csv_path = dir.path().join("prices.csv");
    let out = sofrfut(&[
        "price",
        "--config",
        cfg_path.to_str().unwrap(),
        "--out",
        csv_path.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));

    let file = std::fs::read_to_string(&csv_path).unwrap();
    assert_eq!(file, stdout(&out));
    assert!(!file.contains('\r'));
    let mut lines = file.lines();
    assert_eq!(
        lines.next().unwrap(),
        "kind,T1,T2,v0,v1,total,reference,convexity,epsilon"
    );

    let cfg = load_config(&cfg_path).unwrap();
    let k = KernelSet::new(cfg.params.clone()).unwrap();
    let row: Vec<&str> = lines.next().unwrap().split(',').collect();
    let b = convexity(&k, &cfg.contracts[0]).unwrap();
    assert_eq!(row[0], "sofr3m");
    let parsed: Vec<f64> = row[3..8].iter().map(|x| x.parse().unwrap()).collect();
    assert_eq!(parsed, vec![b.v0, b.v1, b.total, b.reference, b.convexity]);
    assert_eq!(file.lines().count(), 4);
}

#[test]
fn single_contract_selection() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "desk.json", DESK);
    let out = sofrfut(&["price", "--config", cfg.to_str().unwrap(), "--contract", "1"]);
    assert!(out.status.success());
    let text = stdout(&out);
    assert_eq!(text.lines().count(), 2);
    assert!(text.lines().nth(1).unwrap().starts_with("sofr1m,"));
    let out = sofrfut(&["price", "--config", cfg.to_str().unwrap(), "--contract", "7"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn zero_volatility_prices_carry_no_convexity() {
    let dir = tempfile::tempdir().unwrap();
    let text = DESK.replace(r#""values": [0.01, 0.008]"#, r#""values": [0.0, 0.0]"#);
    let cfg = write(dir.path(), "still.json", &text);
    let out = sofrfut(&["price", "--config", cfg.to_str().unwrap()]);
    assert!(out.status.success());
    for line in stdout(&out).lines().skip(1) {
        assert_eq!(
            line.split(',').nth(7).unwrap().parse::<f64>().unwrap(),
            0.0,
            "{line}"
        );
    }
}

#[test]
fn malformed_config_exits_two_and_names_the_field() {
    let dir = tempfile::tempdir().unwrap();
    let text = DESK.replace(r#""values": [0.03]"#, r#""values": "fast""#);
    let cfg = write(dir.path(), "bad.json", &text);
    let out = sofrfut(&["price", "--config", cfg.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("curves.alpha.values"));

    let missing = dir.path().join("absent.json");
    let out = sofrfut(&["closedform-validate", "--config", missing.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn sweep_writes_ascending_rows_with_difference_columns() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "desk.json", DESK);
    let csv = dir.path().join("sweep.csv");
    let args = |end: &str| {
        vec![
            "sweep".to_string(),
            "--config".into(),
            cfg.to_str().unwrap().into(),
            "--kind".into(),
            "sofr3m".into(),
            "--t1-start".into(),
            "0.25".into(),
            "--t1-end".into(),
            end.into(),
            "--t1-step".into(),
            "0.25".into(),
            "--tenor".into(),
            "0.25".into(),
            "--out".into(),
            csv.to_str().unwrap().into(),
        ]
    };
    let run = |end: &str| {
        let a = args(end);
        sofrfut(&a.iter().map(String::as_str).collect::<Vec<_>>())
    };
    let out = run("2.5");
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = std::fs::read_to_string(&csv).unwrap();
    let mut lines = text.lines();
    assert_eq!(
        lines.next().unwrap(),
        "T1,convexity_full,convexity_hw,difference,ratio,eurodollar_minus_sofr,eurodollar_minus_sofr_ratio"
    );
    let t1: Vec<f64> = lines
        .map(|l| l.split(',').next().unwrap().parse().unwrap())
        .collect();
    assert_eq!(t1.len(), 10);
    assert!(t1.windows(2).all(|w| w[1] > w[0]));

    let out = run("3.0");
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("t1-end"));
}

#[test]
fn validation_commands_report_and_set_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "desk.json", DESK);
    let cfg = cfg.to_str().unwrap();

    let out = sofrfut(&["closedform-validate", "--config", cfg]);
    assert_eq!(out.status.code(), Some(0), "{}", stdout(&out));
    assert!(stdout(&out).contains("PASS bond_price(0,0,2) = D"));

    let out = sofrfut(&["greens-validate", "--config", cfg, "--grid", "48", "--box", "10"]);
    assert_eq!(out.status.code(), Some(0), "{}", stdout(&out));

    let broken = [
        "greens-validate",
        "--config",
        cfg,
        "--grid",
        "48",
        "--tolerance-scale",
        "1e-30",
    ];
    let out = sofrfut(&broken);
    assert_eq!(out.status.code(), Some(1));
    assert!(stdout(&out).contains("failed: mass of G0"), "{}", stdout(&out));

    let out = sofrfut(&[
        "mc-validate",
        "--config",
        cfg,
        "--paths",
        "20000",
        "--seed",
        "5",
        "--step",
        "0.0192",
        "--antithetic",
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", stdout(&out));
    assert_eq!(stdout(&out).matches("PASS").count(), 4);

    let out = sofrfut(&["mc-validate", "--config", cfg, "--paths", "100", "--step", "0.5"]);
    assert_eq!(out.status.code(), Some(2));
}
