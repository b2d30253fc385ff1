use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn stratvar(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_stratvar"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> String {
    let out = stratvar(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn data_lines(text: &str) -> Vec<&str> {
    text.lines().filter(|l| !l.starts_with('#')).collect()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

#[test]
fn presets_are_listed_and_shown() {
    let list = ok(&["presets", "list"]);
    assert_eq!(
        list.lines().collect::<Vec<_>>(),
        ["table1", "table3", "table4", "figure1"]
    );
    let shown = ok(&["presets", "show", "table4"]);
    assert!(shown.contains("study = \"coverage\""));
    assert_eq!(stratvar(&["presets", "show", "nope"]).status.code(), Some(2));
}

#[test]
fn generate_table1_population() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("pop.csv");
    ok(&["generate", "--preset", "table1", "--out", p(&out)]);
    let text = fs::read_to_string(&out).unwrap();
    let rows = data_lines(&text);
    assert_eq!(rows[0], "stratum,group,y,x");
    assert_eq!(rows.len(), 20_001);
    for h in 1..=10 {
        let n = rows[1..]
            .iter()
            .filter(|r| r.split(',').next() == Some(&h.to_string()))
            .count();
        assert_eq!(n, 2000);
    }
    let summary = fs::read_to_string(dir.path().join("pop.summary.csv")).unwrap();
    assert_eq!(summary.lines().count(), 11);
    assert!(text.starts_with("# study=table1:2h=10\n# seed=271828\n"));
}

#[test]
fn generate_is_deterministic_and_seed_overrides() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a.csv");
    let b = dir.path().join("b.csv");
    let c = dir.path().join("c.csv");
    ok(&["generate", "--preset", "table3", "--index", "2", "--out", p(&a)]);
    ok(&["generate", "--preset", "table3", "--index", "2", "--out", p(&b)]);
    ok(&[
        "generate",
        "--preset",
        "table3",
        "--index",
        "2",
        "--out",
        p(&c),
        "--seed",
        "7",
    ]);
    let (a, b, c) = (fs::read(a).unwrap(), fs::read(b).unwrap(), fs::read(c).unwrap());
    assert_eq!(a, b);
    assert_ne!(a, c);
    assert!(String::from_utf8(c).unwrap().contains("# seed=7\n"));
}

#[test]
fn zero_unit_config_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.toml");
    let src = ok(&["presets", "show", "table1"]).replace("total_units = 20000", "total_units = 0");
    fs::write(&cfg, src).unwrap();
    let out = stratvar(&["generate", "--config", p(&cfg), "--out", p(&dir.path().join("x.csv"))]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("total_units"));
}

#[test]
fn unknown_key_reports_its_name() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.toml");
    let src = ok(&["presets", "show", "table4"]).replace("[design]", "[design]\ncolour = 3");
    fs::write(&cfg, src).unwrap();
    let out = stratvar(&["simulate", "--config", p(&cfg)]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("colour"));
}

#[test]
fn theory_on_equal_means_population() {
    let dir = tempfile::tempdir().unwrap();
    let pop = dir.path().join("pop.csv");
    ok(&["generate", "--preset", "table3", "--index", "0", "--out", p(&pop)]);
    let text = ok(&["theory", p(&pop)]);
    let rows = data_lines(&text);
    let header: Vec<&str> = rows[0].split(',').collect();
    let col = |name: &str| header.iter().position(|h| *h == name).unwrap();
    assert_eq!(rows.len(), 5);
    for row in &rows[1..] {
        let f: Vec<&str> = row.split(',').collect();
        let deff: f64 = f[col("deff")].parse().unwrap();
        assert!((deff - 1.0).abs() < 1e-3, "{deff}");
    }
    assert!(text.contains("# seed=271828"));
}

#[test]
fn theory_paper_bias_zero_for_exactly_equal_means() {
    let dir = tempfile::tempdir().unwrap();
    let pop = dir.path().join("pop.csv");
    fs::write(
        &pop,
        "stratum,group,y\n1,1,1\n1,1,3\n2,1,0\n2,1,4\n3,2,5\n3,2,5\n4,2,4\n4,2,6\n",
    )
    .unwrap();
    let text = ok(&["theory", p(&pop), "--design", "one-per-stratum"]);
    let paper = text.lines().find(|l| l.starts_with("one_per_stratum,paper")).unwrap();
    assert_eq!(paper.split(',').nth(4), Some("0"));
}

#[test]
fn theory_on_tiny_population_fills_oracle_columns() {
    let dir = tempfile::tempdir().unwrap();
    let pop = dir.path().join("pop.csv");
    fs::write(&pop, "stratum,group,y\n1,1,1\n1,1,2\n1,1,6\n2,1,3\n2,1,8\n2,1,9\n").unwrap();
    let text = ok(&["theory", p(&pop)]);
    let rows = data_lines(&text);
    let header: Vec<&str> = rows[0].split(',').collect();
    let col = |name: &str| header.iter().position(|h| *h == name).unwrap();
    for row in &rows[1..] {
        let f: Vec<&str> = row.split(',').collect();
        if f[1] == "exact" {
            let var: f64 = f[col("var_v")].parse().unwrap();
            let oracle: f64 = f[col("oracle_variance")].parse().unwrap();
            assert!((var - oracle).abs() <= 1e-12 * var.abs(), "{row}");
        } else {
            assert_eq!(f[col("oracle_variance")], "");
        }
    }
}

#[test]
fn malformed_population_reports_row() {
    let dir = tempfile::tempdir().unwrap();
    let pop = dir.path().join("pop.csv");
    fs::write(&pop, "stratum,group,y\n1,1,1\n1,1,oops\n").unwrap();
    let out = stratvar(&["theory", p(&pop)]);
    assert_eq!(out.status.code(), Some(5));
    assert!(String::from_utf8_lossy(&out.stderr).contains("row 3"));
    let out = stratvar(&["theory", p(&dir.path().join("missing.csv"))]);
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn simulate_table4_has_eight_cells() {
    let text = ok(&["simulate", "--preset", "table4", "--replications", "50"]);
    let rows = data_lines(&text);
    assert_eq!(rows[0], "study,estimator,e,metric,value,mc_se");
    // 4 case studies x 2 designs x (cp, al)
    assert_eq!(rows.len() - 1, 16);
    assert!(text.starts_with("# seed=271828\n"));
}

#[test]
fn simulate_figure1_rows_per_grid_point() {
    let dir = tempfile::tempdir().unwrap();
    let shrink = dir.path().join("shrink.csv");
    let text = ok(&[
        "simulate",
        "--preset",
        "figure1",
        "--replications",
        "20",
        "--shrinkage-dump",
        p(&shrink),
    ]);
    let rows = data_lines(&text);
    assert_eq!(rows.len() - 1, 4 * (1 + 2 * 8));
    let dump = fs::read_to_string(shrink).unwrap();
    assert_eq!(data_lines(&dump).len() - 1, 4 * 20 * 5);
}

#[test]
fn single_replication_marks_mc_se_absent() {
    let text = ok(&["simulate", "--preset", "table4", "--replications", "1"]);
    for row in data_lines(&text).iter().skip(1) {
        assert!(row.ends_with(','), "{row}");
    }
}

#[test]
fn seed_and_workers_flags() {
    let dir = tempfile::tempdir().unwrap();
    let raw1 = dir.path().join("raw1.csv");
    let raw2 = dir.path().join("raw2.csv");
    let a = ok(&[
        "simulate",
        "--preset",
        "figure1",
        "--replications",
        "40",
        "--workers",
        "1",
        "--raw-dump",
        p(&raw1),
    ]);
    let b = ok(&[
        "simulate",
        "--preset",
        "figure1",
        "--replications",
        "40",
        "--workers",
        "4",
        "--raw-dump",
        p(&raw2),
    ]);
    assert_eq!(a, b);
    assert_eq!(fs::read(raw1).unwrap(), fs::read(raw2).unwrap());
    let c = ok(&["simulate", "--preset", "figure1", "--replications", "40", "--seed", "5"]);
    assert!(c.starts_with("# seed=5\n"));
    assert_ne!(data_lines(&a), data_lines(&c));
}

#[test]
fn infeasible_design_fails_before_running() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("cfg.toml");
    let src = ok(&["presets", "show", "table4"]).replace(
        "kinds = [\"one_per_stratum\", \"two_per_stratum\"]",
        "kinds = [\"one_per_stratum\"]",
    );
    fs::write(&cfg, src).unwrap();
    let out = stratvar(&["simulate", "--config", p(&cfg)]);
    assert_eq!(out.status.code(), Some(2));
}
