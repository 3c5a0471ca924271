use std::path::Path;
use std::process::{Command, Output};

use elliptical_moments::harness::read_records_csv;
use elliptical_moments::io::write_samples_csv;
use elliptical_moments::model::{sample, EllipticalSpec, RadialFamily};
use elliptical_moments::rng::seeded;
use nalgebra::{DMatrix, DVector};

fn ellmom(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ellmom")).args(args).output().expect("run ellmom")
}

fn write_gaussian_sample(path: &Path, n: usize, p: usize) {
    let sigma = DMatrix::from_fn(p, p, |i, j| {
        if i == j {
            1.0
        } else if i / 2 == j / 2 {
            0.6
        } else {
            0.0
        }
    });
    let spec = EllipticalSpec::new(DVector::zeros(p), sigma, RadialFamily::Gaussian).unwrap();
    write_samples_csv(path, &sample(&spec, n, &mut seeded(11)).unwrap()).unwrap();
}

fn json(out: &Output) -> serde_json::Value {
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    serde_json::from_slice(&out.stdout).unwrap()
}

#[test]
fn estimate_prints_one_object() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("y.csv");
    write_gaussian_sample(&input, 400, 6);
    let input = input.to_str().unwrap();

    let v = json(&ellmom(&["estimate", "--input", input, "--method", "mae", "--m", "2"]));
    let keys: Vec<&str> = v.as_object().unwrap().keys().map(String::as_str).collect();
    assert_eq!(keys, ["method", "m", "value", "ci", "n", "p"]);
    assert_eq!((v["n"].as_u64(), v["p"].as_u64(), v["method"].as_str()), (Some(400), Some(6), Some("mae")));
    assert!(v["ci"].is_null());
    // Gaussian θ₂ = 1 + 2/p
    assert!((v["value"].as_f64().unwrap() - 4.0 / 3.0).abs() < 0.3);

    let v = json(&ellmom(&["estimate", "--input", input, "--method", "marginal", "--ci", "0.05", "--j", "3"]));
    assert_eq!(v["method"], "marginal[3]");
    let ci = v["ci"].as_array().unwrap();
    assert!(ci[0].as_f64().unwrap() <= v["value"].as_f64().unwrap());
    assert!(ci[1].as_f64().unwrap() >= v["value"].as_f64().unwrap());

    let v = json(&ellmom(&["estimate", "--input", input, "--method", "ie"]));
    assert_eq!(v["method"], "ie");

    let robust = json(&ellmom(&["estimate", "--input", input, "--method", "mae", "--robust", "--seed", "3"]));
    let again = json(&ellmom(&["estimate", "--input", input, "--method", "mae", "--robust", "--seed", "3"]));
    assert_eq!(robust, again);
}

#[test]
fn blocks_then_bae() {
    let dir = tempfile::tempdir().unwrap();
    let cov = dir.path().join("cov.csv");
    std::fs::write(&cov, "1,0.6,0,0\n0.6,1,0,0\n0,0,1,0.1\n0,0,0.1,1\n").unwrap();
    let blocks = dir.path().join("b.json");
    let out = ellmom(&[
        "blocks",
        "--input",
        cov.to_str().unwrap(),
        "--method",
        "threshold",
        "--t",
        "0.3",
        "--out",
        blocks.to_str().unwrap(),
    ]);
    assert!(out.status.success());
    assert_eq!(std::fs::read_to_string(&blocks).unwrap().trim(), "[[1,2],[3],[4]]");

    let out = ellmom(&["blocks", "--input", cov.to_str().unwrap(), "--method", "pairs", "--count", "2", "--seed", "5"]);
    let pairs: Vec<Vec<usize>> = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(pairs.len(), 2);
    assert!(pairs.iter().all(|b| b.len() == 2 && b.iter().all(|i| (1..=4).contains(i))));

    let input = dir.path().join("y.csv");
    write_gaussian_sample(&input, 200, 4);
    let v = json(&ellmom(&[
        "estimate",
        "--input",
        input.to_str().unwrap(),
        "--method",
        "bae",
        "--blocks",
        blocks.to_str().unwrap(),
    ]));
    assert_eq!(v["method"], "bae");
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("missing.csv");
    let out = ellmom(&["estimate", "--input", missing.to_str().unwrap(), "--method", "mae"]);
    assert_eq!(out.status.code(), Some(3));

    let cfg = dir.path().join("bad.cfg");
    std::fs::write(&cfg, "scenario = x\nwhat = 1\n").unwrap();
    let out =
        ellmom(&["simulate", "--config", cfg.to_str().unwrap(), "--out", dir.path().join("r.csv").to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));

    let out = ellmom(&["estimate", "--method", "nonsense"]);
    assert_eq!(out.status.code(), Some(2));

    let input = dir.path().join("y.csv");
    write_gaussian_sample(&input, 50, 4);
    let out = ellmom(&["estimate", "--input", input.to_str().unwrap(), "--method", "bae"]);
    assert_eq!(out.status.code(), Some(2));
    let out = ellmom(&["estimate", "--input", input.to_str().unwrap(), "--method", "mae", "--ci", "0.1"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn simulate_is_worker_independent() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("exp.cfg");
    std::fs::write(
        &cfg,
        "scenario = cli\nfamily = t:6\ncov.kind = blockdiag\ncov.param = 2:0.5\nn_grid = 30,60\np_grid = 8\nm = 2\n\
         estimators = ie,me,mae,bae,mae_plugin,me_ci\nR = 15\nseed = 21\nblocks.method = aligned\nblocks.param = 2\n",
    )
    .unwrap();
    let run = |workers: &str, name: &str| {
        let out = dir.path().join(name);
        let status = ellmom(&[
            "simulate",
            "--config",
            cfg.to_str().unwrap(),
            "--out",
            out.to_str().unwrap(),
            "--workers",
            workers,
        ]);
        assert!(status.status.success(), "{}", String::from_utf8_lossy(&status.stderr));
        out
    };
    let one = run("1", "a.csv");
    let four = run("4", "b.csv");
    assert_eq!(std::fs::read(&one).unwrap(), std::fs::read(&four).unwrap());
    let records = read_records_csv(&one).unwrap();
    assert_eq!(records.len(), 2 * 15 * 6);
    assert!(records.iter().all(|r| r.theta_hat.is_some()));

    let jsonl = dir.path().join("c.jsonl");
    let summary = dir.path().join("s.csv");
    let out = ellmom(&[
        "simulate",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        jsonl.to_str().unwrap(),
        "--summary",
        summary.to_str().unwrap(),
    ]);
    assert!(out.status.success());
    assert_eq!(std::fs::read_to_string(&jsonl).unwrap().lines().count(), records.len());
    assert_eq!(std::fs::read_to_string(&summary).unwrap().lines().count(), 1 + 2 * 6);
}

#[test]
fn xi_writes_dated_series() {
    let dir = tempfile::tempdir().unwrap();
    let t = 200;
    let p = 5;
    let mut panel = String::from("date,y1,y2,y3,y4,y5\n");
    let mut factors = String::from("date,f1\n");
    let mut rng = seeded(8);
    use rand_distr::{Distribution, StandardNormal};
    for i in 0..t {
        let f: f64 = StandardNormal.sample(&mut rng);
        factors.push_str(&format!("t{i:04},{f}\n"));
        panel.push_str(&format!("t{i:04}"));
        for j in 0..p {
            let e: f64 = StandardNormal.sample(&mut rng);
            panel.push_str(&format!(",{}", 0.5 * (j + 1) as f64 * f + e));
        }
        panel.push('\n');
    }
    let returns = dir.path().join("r.csv");
    let fpath = dir.path().join("f.csv");
    std::fs::write(&returns, panel).unwrap();
    std::fs::write(&fpath, factors).unwrap();
    let out = dir.path().join("xi.csv");
    let status = ellmom(&[
        "xi",
        "--returns",
        returns.to_str().unwrap(),
        "--factors",
        fpath.to_str().unwrap(),
        "--arch-order",
        "2",
        "--smooth",
        "9",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(status.status.success(), "{}", String::from_utf8_lossy(&status.stderr));
    let text = std::fs::read_to_string(&out).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("date,xi_sq,xi_sq_smoothed"));
    let rows: Vec<&str> = lines.collect();
    assert_eq!(rows.len(), t - 2);
    assert!(rows[0].starts_with("t0002,"));
    for row in rows {
        let cols: Vec<&str> = row.split(',').collect();
        assert_eq!(cols.len(), 3);
        assert!(cols[1].parse::<f64>().unwrap() > 0.0);
        assert!(cols[2].parse::<f64>().unwrap() > 0.0);
    }

    let both = ellmom(&[
        "xi",
        "--returns",
        returns.to_str().unwrap(),
        "--factors",
        fpath.to_str().unwrap(),
        "--pca",
        "1",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(both.status.code(), Some(2));
}
