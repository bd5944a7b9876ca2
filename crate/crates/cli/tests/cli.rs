use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use attrql_core::nn::{fixtures, Dataset, Tensor};
use serde_json::Value;

const BIN: &str = env!("CARGO_BIN_EXE_attrql");

struct Fixture {
    dir: tempfile::TempDir,
}

impl Fixture {
    /// A 3-stage MLP over 6 features, two inputs and a blob dataset.
    fn new() -> Self {
        let dir = tempfile::tempdir().unwrap();
        let write = |name: &str, bytes: Vec<u8>| fs::write(dir.path().join(name), bytes).unwrap();
        write("f.json", json(&fixtures::random_mlp("f", &[6, 5, 4, 3], 3)));
        write("x.json", json(&fixtures::random_tensor(&[6], -1.0, 1.0, 10)));
        write("y.json", json(&fixtures::random_tensor(&[6], -1.0, 1.0, 11)));
        let centers: Vec<Vec<f64>> = (0..3)
            .map(|k| (0..6).map(|i| if i % 3 == k { 1.5 } else { -0.5 }).collect())
            .collect();
        write("data.json", json(&fixtures::gaussian_blobs(&centers, 20, 0.4, 5)));
        Self { dir }
    }

    fn path(&self, name: &str) -> PathBuf {
        self.dir.path().join(name)
    }

    fn run(&self, args: &[&str]) -> Output {
        Command::new(BIN)
            .args(args)
            .current_dir(self.dir.path())
            .env_remove("ATTRQL_STORE")
            .output()
            .unwrap()
    }
}

fn json<T: serde::Serialize>(value: &T) -> Vec<u8> {
    serde_json::to_vec(value).unwrap()
}

fn read_json(path: &Path) -> Value {
    serde_json::from_slice(&fs::read(path).unwrap()).unwrap()
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

#[test]
fn identity_query_writes_a_single_map() {
    let fx = Fixture::new();
    let out = fx.run(&[
        "query", "select * from f(x)", "--model", "f=f.json", "--input", "x=x.json", "--backend", "shapley-exact",
        "--out", "r.json",
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
    let r = read_json(&fx.path("r.json"));
    assert_eq!(r["shape"], serde_json::json!([6]));
    assert_eq!(r["kind"], "single");
    assert_eq!(r["values"].as_array().unwrap().len(), 6);
    assert_eq!(r["meta"]["backend"], "shapley-exact");
    assert_eq!(r["meta"]["query"], "select * from f(x)");
}

#[test]
fn stage_out_of_range_exits_with_validation_status() {
    let fx = Fixture::new();
    let out = fx.run(&["query", "select 9 from f(x)", "--model", "f=f.json", "--input", "x=x.json"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("layer-range"), "{}", stderr(&out));
    assert!(stderr(&out).contains("offset 7"));
}

#[test]
fn syntax_and_binding_errors_exit_2_and_io_errors_exit_1() {
    let fx = Fixture::new();
    let out = fx.run(&["query", "select * from", "--model", "f=f.json", "--input", "x=x.json"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("offset 13"));
    let out = fx.run(&["query", "select * from f(z)", "--model", "f=f.json", "--input", "x=x.json"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("unbound"));
    let out = fx.run(&["query", "select * from f(x)", "--model", "f=missing.json", "--input", "x=x.json"]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn reruns_are_bytewise_identical() {
    let fx = Fixture::new();
    let args = |out: &'static str| {
        vec![
            "query", "select * from f(x) left join (select * from f(y))", "--model", "f=f.json", "--input", "x=x.json",
            "--input", "y=y.json", "--samples", "300", "--seed", "4", "--out", out,
        ]
    };
    assert!(fx.run(&args("a.json")).status.success());
    assert!(fx.run(&args("b.json")).status.success());
    assert_eq!(fs::read(fx.path("a.json")).unwrap(), fs::read(fx.path("b.json")).unwrap());
    assert_eq!(read_json(&fx.path("a.json"))["kind"], "pair");
}

#[test]
fn selection_uses_truncations_from_the_store() {
    let fx = Fixture::new();
    let query = ["query", "select 1 from f(x)", "--model", "f=f.json", "--input", "x=x.json", "--store", "st"];
    let out = fx.run(&query);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("truncate"), "{}", stderr(&out));

    let out = fx.run(&["truncate", "--model", "f.json", "--stage", "1", "--data", "data.json", "--out", "f1.json", "--store", "st"]);
    assert!(out.status.success(), "{}", stderr(&out));
    assert!(String::from_utf8_lossy(&out.stdout).contains("accuracy"));
    let out = fx.run(&query);
    assert!(out.status.success(), "{}", stderr(&out));
    let r: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(r["meta"]["targets"][0]["stage"], 1);

    let out = fx.run(&[
        "query", "select 2 from f(x)", "--model", "f=f.json", "--input", "x=x.json", "--stage-model", "f:2=f1.json",
    ]);
    assert_eq!(out.status.code(), Some(2), "a stage-1 model cannot stand in for stage 2");

    let out = fx.run(&["truncate", "--model", "f.json", "--stage", "5", "--data", "data.json", "--out", "bad.json"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn spectral_needs_two_examples() {
    let fx = Fixture::new();
    let x = fixtures::random_tensor(&[6], -1.0, 1.0, 1);
    let tiny = Dataset::new(vec![x.clone(), x], vec![0, 1]).unwrap();
    fs::write(fx.path("tiny.json"), json(&tiny)).unwrap();
    let out = fx.run(&["spectral", "--model", "f.json", "--data", "tiny.json", "--class", "0"]);
    assert_eq!(out.status.code(), Some(2));

    let out = fx.run(&["spectral", "--model", "f.json", "--data", "data.json", "--class", "1"]);
    assert!(out.status.success(), "{}", stderr(&out));
    let report: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(report["report"]["scores"].as_array().unwrap().len(), 20);
}

#[test]
fn oracle_dump_satisfies_efficiency() {
    let fx = Fixture::new();
    let out = fx.run(&["oracle", "--model", "f.json", "--input", "x.json", "--baseline", "y.json"]);
    assert!(out.status.success(), "{}", stderr(&out));
    let d: Value = serde_json::from_slice(&out.stdout).unwrap();
    let sum: f64 = d["values"].as_array().unwrap().iter().map(|v| v.as_f64().unwrap()).sum();
    let delta = d["f_x"].as_f64().unwrap() - d["f_baseline"].as_f64().unwrap();
    assert!((sum - delta).abs() < 1e-9);
}

#[test]
fn heatmaps_render_from_queries_and_files() {
    let fx = Fixture::new();
    let img: Tensor = fixtures::random_tensor(&[1, 6, 6], -1.0, 1.0, 2);
    fs::write(fx.path("img.json"), json(&img)).unwrap();
    fs::write(fx.path("cnn.json"), json(&fixtures::random_cnn("c", 6, 2, 3, 1))).unwrap();
    let out = fx.run(&[
        "query", "select * from c(x) where w", "--model", "c=cnn.json", "--input", "x=img.json", "--window",
        "w=rect:1,1,3,3", "--backend", "shapley-exact", "--out", "r.json", "--pgm", "q.pgm",
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
    let pgm = fs::read(fx.path("q.pgm")).unwrap();
    assert!(pgm.starts_with(b"P5\n6 6\n255\n"));
    assert_eq!(pgm.len(), 11 + 36);
    let out = fx.run(&["render", "r.json", "--out", "r.pgm"]);
    assert!(out.status.success());
    assert_eq!(fs::read(fx.path("r.pgm")).unwrap(), pgm);

    let out = fx.run(&["render", "r.json", "--out", "nodir/r.pgm"]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn demo_files_feed_a_query() {
    let fx = Fixture::new();
    let out = fx.run(&["demo", "--out", "demo"]);
    assert!(out.status.success(), "{}", stderr(&out));
    let out = fx.run(&[
        "query", "select * from m(a) join (select * from m(b))", "--model", "m=demo/model.json", "--input",
        "a=demo/x0.json", "--input", "b=demo/x1.json", "--samples", "50",
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
    let r: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(r["shape"], serde_json::json!([8, 8]));
}
