use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_incidence-lab"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8(o.stderr.clone()).unwrap()
}

fn json(o: &Output) -> Value {
    assert!(o.status.success(), "stderr: {}", stderr(o));
    serde_json::from_slice(&o.stdout).unwrap()
}

fn write(dir: &Path, name: &str, body: &str) -> String {
    let p = dir.join(name);
    fs::write(&p, body).unwrap();
    p.to_str().unwrap().to_string()
}

fn gen_sheaf(dir: &Path, m: &str, extra: &[&str]) -> (String, String) {
    let out = dir.to_str().unwrap();
    let mut args = vec!["gen", "sheaf", "--m", m, "--seed", "1", "--out", out];
    args.extend_from_slice(extra);
    let o = run(&args);
    assert!(o.status.success(), "{}", stderr(&o));
    (
        dir.join("points.txt").to_str().unwrap().into(),
        dir.join("lines.txt").to_str().unwrap().into(),
    )
}

#[test]
fn count_of_a_singleton_pair_is_one() {
    let d = tempfile::tempdir().unwrap();
    let p = write(d.path(), "p.txt", "scale m=4 kind=cell\n3 3\n");
    let l = write(d.path(), "l.txt", "scale m=4 kind=dual\n0 3\n");
    let o = run(&["count", &p, &l]);
    assert!(o.status.success());
    assert_eq!(stdout(&o), "1\n");
}

#[test]
fn count_writes_per_tube_csv() {
    let d = tempfile::tempdir().unwrap();
    let p = write(d.path(), "p.txt", "scale m=4 kind=cell\n3 3\n3 4\n");
    let l = write(d.path(), "l.json", r#"{"kind":"dual","m":4,"cells":[[0,3],[0,12]]}"#);
    let out = d.path().join("out");
    let o = run(&["count", &p, &l, "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    let csv = fs::read_to_string(out.join("tube_counts.csv")).unwrap();
    assert_eq!(csv, "tube_a,tube_b,count\n0,3,2\n0,12,0\n");
    let report: Value = serde_json::from_str(&fs::read_to_string(out.join("report.json")).unwrap()).unwrap();
    assert_eq!(report["result"]["incidences"], 2);
}

#[test]
fn malformed_family_exits_2_with_line_number() {
    let d = tempfile::tempdir().unwrap();
    let p = write(d.path(), "p.txt", "# points\nscale m=4 kind=cell\n1 2\n1 x\n");
    let l = write(d.path(), "l.txt", "scale m=4 kind=dual\n0 3\n");
    let o = run(&["count", &p, &l]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("line 4"), "{}", stderr(&o));
}

#[test]
fn validation_failures_exit_2() {
    let d = tempfile::tempdir().unwrap();
    let p = write(d.path(), "p.txt", "scale m=4 kind=cell\n1 2\n");
    let l = write(d.path(), "l.txt", "scale m=5 kind=dual\n0 3\n");
    let mismatch = run(&["count", &p, &l]);
    assert_eq!(mismatch.status.code(), Some(2));
    assert!(stderr(&mismatch).contains("scale mismatch"));

    let swapped = run(&["count", &l, &p]);
    assert_eq!(swapped.status.code(), Some(2));

    let bad_params = run(&["clique", &p, &p, "--params", r#"{"bogus": 1}"#]);
    assert_eq!(bad_params.status.code(), Some(2));
    assert!(stderr(&bad_params).contains("bogus"));

    let no_out = run(&["gen", "sheaf", "--m", "6"]);
    assert_eq!(no_out.status.code(), Some(2));

    let usage = run(&["count"]);
    assert_eq!(usage.status.code(), Some(2));
}

#[test]
fn pipeline_failure_exits_3() {
    let d = tempfile::tempdir().unwrap();
    let p = write(d.path(), "p.txt", "scale m=4 kind=cell\n0 0\n");
    let l = write(d.path(), "l.txt", "scale m=4 kind=dual\n0 10\n");
    let o = run(&["clique", &p, &l]);
    assert_eq!(o.status.code(), Some(3));
    assert!(stderr(&o).contains("pipeline failure"));
}

#[test]
fn identical_specs_give_identical_bytes() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    gen_sheaf(a.path(), "8", &[]);
    gen_sheaf(b.path(), "8", &[]);
    for name in ["points.txt", "lines.txt", "labels.json", "report.json"] {
        assert_eq!(
            fs::read(a.path().join(name)).unwrap(),
            fs::read(b.path().join(name)).unwrap(),
            "{name}"
        );
    }
    let (p, l) = (a.path().join("points.txt"), a.path().join("lines.txt"));
    let args = ["clique", p.to_str().unwrap(), l.to_str().unwrap()];
    assert_eq!(run(&args).stdout, run(&args).stdout);
}

#[test]
fn reports_embed_version_params_and_digests() {
    let d = tempfile::tempdir().unwrap();
    let (p, l) = gen_sheaf(d.path(), "8", &[]);
    let gen: Value = serde_json::from_str(&fs::read_to_string(d.path().join("report.json")).unwrap()).unwrap();
    let r = json(&run(&["bound", &p, &l, "--eps", "0"]));
    assert_eq!(r["tool"], "incidence-lab");
    assert_eq!(r["version"], env!("CARGO_PKG_VERSION"));
    assert_eq!(r["command"], "bound");
    assert_eq!(r["params"]["s"], 1.0);
    assert_eq!(r["inputs"][0]["digest"], gen["result"]["points"]["digest"]);
    assert_eq!(r["inputs"][1]["digest"], gen["result"]["lines"]["digest"]);
    assert!(r["result"]["ratio"].as_f64().unwrap() > 0.0);
}

#[test]
fn clique_and_sheaf_on_planted_configurations() {
    let d = tempfile::tempdir().unwrap();
    let (p, l) = gen_sheaf(d.path(), "8", &[]);
    let r = json(&run(&["clique", &p, &l, "--params", r#"{"c_prime": 4.0}"#]));
    assert!(r["result"]["theta"].as_f64().unwrap() >= 0.5);
    assert_eq!(r["result"]["replay"], true);
    assert_eq!(r["params"]["clique"]["c_prime"], 4.0);

    let single = tempfile::tempdir().unwrap();
    let (p, l) = gen_sheaf(single.path(), "8", &["--single"]);
    let r = json(&run(&["sheaf", &p, &l]));
    assert!(r["result"]["points_in_r"].as_u64().unwrap() >= 1);
    assert_eq!(r["params"]["theta"], 1.0);
}

#[test]
fn exhaust_reports_disjoint_cliques_and_traces() {
    let d = tempfile::tempdir().unwrap();
    let (p, l) = gen_sheaf(d.path(), "8", &[]);
    let params = write(d.path(), "params.json", r#"{"n_max": 4}"#);
    let o = run(&["exhaust", &p, &l, "--params", &params, "--trace"]);
    let r = json(&o);
    assert!(stderr(&o).contains("[trace] clique 0: decompose"));
    let cliques = r["result"]["cliques"].as_array().unwrap();
    assert!(!cliques.is_empty() && cliques.len() <= 4);
}

#[test]
fn uniformize_and_branching_outputs() {
    let d = tempfile::tempdir().unwrap();
    let out = d.path().join("c");
    let o = run(&[
        "gen",
        "cantor",
        "--m",
        "8",
        "--s",
        "1",
        "--h",
        "2",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let p = out.join("points.txt");
    let r = json(&run(&["uniformize", p.to_str().unwrap(), "--h", "2"]));
    assert_eq!(r["result"]["retention"], 1.0);
    assert_eq!(r["result"]["branching"], serde_json::json!([4, 4, 4, 4]));

    let b = d.path().join("b");
    let o = run(&[
        "branching",
        p.to_str().unwrap(),
        "--h",
        "2",
        "--out",
        b.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(
        fs::read_to_string(b.join("branching.csv")).unwrap(),
        "j,beta\n0,0\n1,1\n2,2\n3,3\n4,4\n"
    );
    assert_eq!(
        fs::read_to_string(b.join("decomposition.csv")).unwrap(),
        "start,end,slope\n0,4,1\n"
    );
}

#[test]
fn verify_reports_the_katz_tao_constant() {
    let d = tempfile::tempdir().unwrap();
    let out = d.path().join("c");
    let o = run(&["gen", "cantor", "--m", "10", "--s", "1", "--out", out.to_str().unwrap()]);
    assert!(o.status.success());
    let r = json(&run(&["verify", out.join("points.txt").to_str().unwrap(), "--s", "1"]));
    assert!(r["result"]["best_constant"].as_f64().unwrap() <= 8.0);
    let r = json(&run(&[
        "verify",
        out.join("points.txt").to_str().unwrap(),
        "--variant",
        "delta-s",
    ]));
    assert_eq!(r["params"]["variant"], "delta_s");
}

#[test]
fn sweep_fits_the_extremal_exponent() {
    let d = tempfile::tempdir().unwrap();
    let out = d.path().join("sweep");
    let o = run(&[
        "sweep",
        "--ms",
        "8,10,12",
        "--seeds",
        "0,1",
        "--jobs",
        "2",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let report: Value = serde_json::from_str(&fs::read_to_string(out.join("report.json")).unwrap()).unwrap();
    let fits = report["result"]["fits"].as_array().unwrap();
    let all = fits.iter().find(|f| f["seed"] == "all").unwrap();
    assert!((all["slope"].as_f64().unwrap() - 1.5).abs() <= 0.15);
    let table = fs::read_to_string(out.join("sweep.csv")).unwrap();
    assert_eq!(table.lines().count(), 7);
    assert!(table.starts_with("m,seed,cells,tubes,incidences,log2_incidences\n"));
}
