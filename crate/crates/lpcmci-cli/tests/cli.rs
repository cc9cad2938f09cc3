use lpcmci::bench::Report;
use lpcmci::graph::{EndMark, WindowGraph};
use lpcmci::model::GroundTruthModel;
use lpcmci::oracle::true_pag;
use rand::{Rng, SeedableRng};
use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn lpcmci(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_lpcmci")).args(args).output().expect("run binary")
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn assert_error(out: &Output, code: i32) {
    assert_eq!(out.status.code(), Some(code), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    assert!(out.stdout.is_empty(), "stdout: {}", String::from_utf8_lossy(&out.stdout));
    assert!(!out.stderr.is_empty());
}

#[test]
fn usage_errors_exit_1_on_stderr() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("g.json");
    assert_error(&lpcmci(&["frobnicate"]), 1);
    assert_error(&lpcmci(&["discover", "x.csv", "--tau-max", "1", "--alpha", "1.5", "--out", p(&out)]), 1);
    assert_error(&lpcmci(&["discover", "x.csv", "--tau-max", "1", "--ci", "oracle", "--out", p(&out)]), 1);
    assert_error(&lpcmci(&["benchmark", "cfg.json", "--out", p(&out)]), 1);
    assert_error(&lpcmci(&["simulate", "-T", "10", "--out", p(&out)]), 1);
}

#[test]
fn runtime_errors_exit_2_on_stderr() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("g.json");
    let missing = dir.path().join("missing.csv");
    assert_error(&lpcmci(&["discover", p(&missing), "--tau-max", "1", "--out", p(&out)]), 2);

    let short = dir.path().join("short.csv");
    let rows: String = (0..12).map(|r| format!("{r},{}\n", 2 * r % 5)).collect();
    fs::write(&short, format!("a,b\n{rows}")).unwrap();
    assert_error(&lpcmci(&["discover", p(&short), "--tau-max", "2", "--out", p(&out)]), 2);

    let ragged = dir.path().join("ragged.csv");
    fs::write(&ragged, "a,b\n1,2\n3\n").unwrap();
    assert_error(&lpcmci(&["discover", p(&ragged), "--tau-max", "0", "--out", p(&out)]), 2);
    assert!(!out.exists());
}

#[test]
fn white_noise_gives_an_empty_graph() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("noise.csv");
    let out = dir.path().join("g.json");
    let mut rng = seeded_rng(5);
    let mut csv = String::from("a,b,c\n");
    for _ in 0..400 {
        let row: Vec<String> = (0..3).map(|_| format!("{:.6}", rng.random::<f64>() - 0.5)).collect();
        csv.push_str(&row.join(","));
        csv.push('\n');
    }
    fs::write(&data, csv).unwrap();
    let res = lpcmci(&["discover", p(&data), "--tau-max", "1", "--alpha", "0.001", "--out", p(&out)]);
    assert_eq!(res.status.code(), Some(0));
    let g = WindowGraph::from_json_str(&fs::read_to_string(&out).unwrap()).unwrap();
    assert_eq!(g.n_edges(), 0, "{g}");
    assert!(String::from_utf8_lossy(&res.stdout).contains("edges: 0 total"));
}

fn seeded_rng(seed: u64) -> rand::rngs::StdRng {
    rand::rngs::StdRng::seed_from_u64(seed)
}

#[test]
fn simulate_then_discover_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let (d1, d2) = (dir.path().join("a.csv"), dir.path().join("b.csv"));
    for d in [&d1, &d2] {
        let r = lpcmci(&["simulate", "--example", "-T", "300", "--seed", "9", "--out", p(d)]);
        assert_eq!(r.status.code(), Some(0));
    }
    assert_eq!(fs::read(&d1).unwrap(), fs::read(&d2).unwrap());

    let (g1, g2) = (dir.path().join("g1.json"), dir.path().join("g2.json"));
    for g in [&g1, &g2] {
        let r = lpcmci(&["discover", p(&d1), "--tau-max", "2", "--k", "2", "--alpha", "0.01", "--out", p(g)]);
        assert_eq!(r.status.code(), Some(0));
    }
    assert_eq!(fs::read(&g1).unwrap(), fs::read(&g2).unwrap());

    // without a seed one is drawn and reported
    let r = lpcmci(&["simulate", "--example", "-T", "50", "--out", p(&d2)]);
    assert_eq!(r.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&r.stdout).contains("seed: "));
}

#[test]
fn oracle_check_passes_and_detects_a_wrong_expectation() {
    let dir = tempfile::tempdir().unwrap();
    let model_path = dir.path().join("model.json");
    let model = GroundTruthModel::latent_confounder_example();
    fs::write(&model_path, model.to_json_string()).unwrap();
    let r = lpcmci(&["oracle-check", p(&model_path), "--tau-max", "2"]);
    assert_eq!(r.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&r.stdout).starts_with("PASS"));

    let mut wrong = true_pag(&model.graph(), 2).unwrap();
    let (i, tau, j, m) = wrong.canonical_edges()[0];
    let flipped = lpcmci::graph::EdgeMarks { at_i: if m.at_i == EndMark::Head { EndMark::Circle } else { EndMark::Head }, ..m };
    wrong.set_slot(i, tau, j, Some(flipped)).unwrap();
    let expected = dir.path().join("expected.json");
    fs::write(&expected, wrong.to_json_string()).unwrap();
    let r = lpcmci(&["oracle-check", p(&model_path), "--tau-max", "2", "--expected", p(&expected)]);
    assert_eq!(r.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&r.stdout).contains("FAIL"));
}

#[test]
fn benchmark_reports_are_identical_up_to_timing() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("cfg.json");
    fs::write(
        &cfg,
        r#"[{"method": "lpcmci", "k": 1, "ci": "parcorr", "alpha": 0.05, "tau_max": 1,
            "model": {"n_total": 3, "autocorr": 0.6}, "T": 150, "reps": 3},
           {"method": "svarrfci", "ci": "oracle", "alpha": 0.05, "tau_max": 1,
            "model": {"n_total": 4, "autocorr": 0.6}, "T": 0, "reps": 2}]"#,
    )
    .unwrap();
    let (o1, o2, csv) = (dir.path().join("r1.json"), dir.path().join("r2.json"), dir.path().join("r.csv"));
    let r = lpcmci(&["benchmark", p(&cfg), "--seed", "4", "--out", p(&o1), "--csv", p(&csv)]);
    assert_eq!(r.status.code(), Some(0), "{}", String::from_utf8_lossy(&r.stderr));
    let r = lpcmci(&["benchmark", p(&cfg), "--seed", "4", "--jobs", "2", "--out", p(&o2)]);
    assert_eq!(r.status.code(), Some(0));
    let read = |f: &Path| Report::from_json_str(&fs::read_to_string(f).unwrap()).unwrap().without_timing();
    assert_eq!(read(&o1).to_json_string().unwrap(), read(&o2).to_json_string().unwrap());
    assert_eq!(read(&o1).cells[0].config.seed_base, 4);
    assert!(fs::read_to_string(&csv).unwrap().starts_with("cell,method"));
}
