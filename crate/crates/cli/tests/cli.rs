use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tempfile::TempDir;

fn acnn(args: &[&str], envs: &[(&str, &str)]) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_acnn"));
    cmd.args(args);
    for (k, _) in std::env::vars().filter(|(k, _)| k.starts_with("ACNN_")) {
        cmd.env_remove(k);
    }
    for (k, v) in envs {
        cmd.env(k, v);
    }
    cmd.output().expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn sdf(coords: &[[f64; 3]], elements: &[&str], bonds: &[(usize, usize)]) -> String {
    let mut s = String::from("lig\n  synthetic\n\n");
    let _ = writeln!(
        s,
        "{:>3}{:>3}  0  0  0  0  0  0  0  0999 V2000",
        coords.len(),
        bonds.len()
    );
    for (c, e) in coords.iter().zip(elements) {
        let _ = writeln!(
            s,
            "{:>10.4}{:>10.4}{:>10.4} {:<3} 0  0  0  0  0  0  0  0  0  0  0  0",
            c[0], c[1], c[2], e
        );
    }
    for (a, b) in bonds {
        let _ = writeln!(s, "{:>3}{:>3}  1  0", a + 1, b + 1);
    }
    s + "M  END\n$$$$\n"
}

fn pdb(coords: &[[f64; 3]], elements: &[&str]) -> String {
    let mut s = String::new();
    for (k, (c, e)) in coords.iter().zip(elements).enumerate() {
        let _ = writeln!(
            s,
            "ATOM  {:>5}  {:<3} GLY A{:>4}    {:>8.3}{:>8.3}{:>8.3}  1.00  0.00          {:>2}",
            k + 1,
            e,
            k / 4 + 1,
            c[0],
            c[1],
            c[2],
            e
        );
    }
    s + "END\n"
}

type Molecule = (Vec<[f64; 3]>, Vec<&'static str>, Vec<(usize, usize)>);

/// A ring ligand with a side chain of `tail` atoms, centred at `center`.
fn ligand(r: &mut ChaCha8Rng, ring: usize, tail: usize, center: [f64; 3]) -> Molecule {
    let radius = 1.4 / (2.0 * (std::f64::consts::PI / ring as f64).sin());
    let mut coords: Vec<[f64; 3]> = (0..ring)
        .map(|k| {
            let t = 2.0 * std::f64::consts::PI * k as f64 / ring as f64;
            [center[0] + radius * t.cos(), center[1] + radius * t.sin(), center[2]]
        })
        .collect();
    let mut bonds: Vec<(usize, usize)> = (0..ring).map(|k| (k, (k + 1) % ring)).collect();
    let mut prev = 0;
    for t in 0..tail {
        let c = coords[prev];
        coords.push([c[0] + 1.45, c[1], c[2] + 0.3 * (t as f64 + 1.0)]);
        bonds.push((prev, ring + t));
        prev = ring + t;
    }
    let elements = (0..coords.len())
        .map(|_| ["C", "C", "N", "O"][r.gen_range(0..4)])
        .collect();
    (coords, elements, bonds)
}

fn pocket(r: &mut ChaCha8Rng, n: usize, avoid: &[[f64; 3]], center: [f64; 3]) -> (Vec<[f64; 3]>, Vec<&'static str>) {
    let mut coords: Vec<[f64; 3]> = Vec::new();
    while coords.len() < n {
        let c = [
            center[0] + r.gen_range(-7.0..7.0),
            center[1] + r.gen_range(-7.0..7.0),
            center[2] + r.gen_range(-7.0..7.0),
        ];
        let clear = coords.iter().chain(avoid).all(|q| {
            let d2: f64 = (0..3).map(|k| (c[k] - q[k]).powi(2)).sum();
            d2 > 1.3 * 1.3
        });
        if clear {
            coords.push(c);
        }
    }
    let elements = (0..n).map(|_| ["C", "C", "N", "O", "S"][r.gen_range(0..5)]).collect();
    (coords, elements)
}

struct Dataset {
    dir: TempDir,
    index: PathBuf,
    ids: Vec<String>,
}

/// `n` complexes on disk with an index file. `missing_year` blanks the
/// year of one record.
fn dataset(n: usize, seed: u64, missing_year: Option<usize>) -> Dataset {
    let dir = tempfile::tempdir().unwrap();
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    let mut index = String::from("# id\tligand\tprotein\tlog_ki\tyear\n");
    let mut ids = Vec::new();
    for i in 0..n {
        let id = format!("cx{i:03}");
        let tail = r.gen_range(0..3);
        let (lc, le, lb) = ligand(&mut r, 5 + i % 3, tail, [0.0; 3]);
        let (pc, pe) = pocket(&mut r, 14 + i % 5, &lc, [0.0; 3]);
        std::fs::write(dir.path().join(format!("{id}_ligand.sdf")), sdf(&lc, &le, &lb)).unwrap();
        std::fs::write(dir.path().join(format!("{id}_pocket.pdb")), pdb(&pc, &pe)).unwrap();
        let log_ki: f64 = r.gen_range(-10.0..-3.0);
        let year = if missing_year == Some(i) {
            "-".to_string()
        } else {
            (2000 + i % 15).to_string()
        };
        let _ = writeln!(index, "{id}\t{id}_ligand.sdf\t{id}_pocket.pdb\t{log_ki:.3}\t{year}");
        ids.push(id);
    }
    let index_path = dir.path().join("index.tsv");
    std::fs::write(&index_path, index).unwrap();
    Dataset {
        dir,
        index: index_path,
        ids,
    }
}

fn read(path: &Path) -> String {
    std::fs::read_to_string(path).unwrap_or_else(|e| panic!("{}: {e}", path.display()))
}

fn json(path: &Path) -> serde_json::Value {
    serde_json::from_str(&read(path)).unwrap()
}

/// Small-network training run for speed.
fn quick_train(ds: &Dataset, out: &Path, extra: &[&str]) -> Output {
    let mut args = vec![
        "train",
        "--index",
        p(&ds.index),
        "--out",
        p(out),
        "--epochs",
        "3",
        "--deterministic",
        "--set",
        "layers=8,4",
        "--set",
        "batch_size=4",
    ];
    args.extend_from_slice(extra);
    acnn(&args, &[])
}

#[test]
fn temporal_split_with_missing_year_exits_3_naming_the_record() {
    let ds = dataset(6, 1, Some(4));
    let out = ds.dir.path().join("split.csv");
    let o = acnn(
        &["split", "--index", p(&ds.index), "--kind", "temporal", "--out", p(&out)],
        &[],
    );
    assert_eq!(code(&o), 3, "{}", stderr(&o));
    assert!(stderr(&o).contains("cx004"), "{}", stderr(&o));
}

#[test]
fn random_split_is_byte_identical_across_runs() {
    let dir = tempfile::tempdir().unwrap();
    let mut index = String::new();
    for i in 0..195 {
        let _ = writeln!(
            index,
            "r{i:03}\tl.sdf\tp.pdb\t{:.2}\t{}",
            -3.0 - (i % 17) as f64 * 0.4,
            1995 + i % 20
        );
    }
    let idx = dir.path().join("core.tsv");
    std::fs::write(&idx, index).unwrap();
    let run = |name: &str| {
        let out = dir.path().join(name);
        let o = acnn(
            &[
                "split",
                "--index",
                p(&idx),
                "--kind",
                "random",
                "--seed",
                "42",
                "--out",
                p(&out),
            ],
            &[],
        );
        assert_eq!(code(&o), 0, "{}", stderr(&o));
        out
    };
    let (a, b) = (run("a.csv"), run("b.csv"));
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
    let prov = json(&a.with_extension("json"));
    assert_eq!(prov["counts"]["train"], 156);
    assert_eq!(prov["counts"]["test"], 39);
    assert_eq!(prov["kind"], "random");
    assert_eq!(prov["seed"], 42);
    assert_eq!(read(&a).lines().count(), 196);

    for kind in ["stratified", "temporal"] {
        let out = dir.path().join(format!("{kind}.csv"));
        let o = acnn(&["split", "--index", p(&idx), "--kind", kind, "--out", p(&out)], &[]);
        assert_eq!(code(&o), 0, "{}", stderr(&o));
        assert_eq!(json(&out.with_extension("json"))["counts"]["test"], 39);
    }
}

#[test]
fn scaffold_split_reads_ligand_graphs() {
    let ds = dataset(12, 2, None);
    let out = ds.dir.path().join("scaffold.csv");
    let o = acnn(
        &["split", "--index", p(&ds.index), "--kind", "scaffold", "--out", p(&out)],
        &[],
    );
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let csv = read(&out);
    // Ring sizes cycle through 5, 6, 7: whole ring-size groups stay together.
    let mut subset_of_ring = std::collections::HashMap::new();
    for line in csv.lines().skip(1) {
        let (id, subset) = line.split_once(',').unwrap();
        let i: usize = id[2..].parse().unwrap();
        let prev = subset_of_ring.insert(i % 3, subset.to_string());
        assert!(
            prev.is_none() || prev.as_deref() == Some(subset),
            "ring group split across subsets"
        );
    }
}

#[test]
fn presets_expand_in_the_resolved_config() {
    let ds = dataset(6, 3, None);
    for (preset, expect) in [
        (
            "core",
            ["n_types = 15", "n_radial = 3", "layers = 32,32,16", "dropout = 0.0"],
        ),
        (
            "refined",
            ["n_types = 25", "n_radial = 5", "layers = 128,128,64", "dropout = 0.4"],
        ),
    ] {
        let out = ds.dir.path().join(format!("run_{preset}"));
        let o = acnn(
            &[
                "train",
                "--index",
                p(&ds.index),
                "--preset",
                preset,
                "--epochs",
                "1",
                "--out",
                p(&out),
            ],
            &[],
        );
        assert_eq!(code(&o), 0, "{}", stderr(&o));
        let cfg = read(&out.join("run_config.cfg"));
        for line in expect {
            assert!(cfg.lines().any(|l| l == line), "{preset}: missing {line:?} in\n{cfg}");
        }
        let side = json(&out.join("model.json"));
        assert_eq!(
            side["atom_types"].as_array().unwrap().len(),
            if preset == "core" { 15 } else { 25 }
        );
    }
}

#[test]
fn run_directory_is_complete_and_reproducible() {
    let ds = dataset(10, 4, None);
    let a = ds.dir.path().join("run_a");
    let o = quick_train(&ds, &a, &[]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    for f in [
        "run_config.cfg",
        "split.csv",
        "split.json",
        "history.csv",
        "model.ckpt",
        "model.json",
        "metrics.json",
    ] {
        assert!(a.join(f).exists(), "missing {f}");
    }
    let history = read(&a.join("history.csv"));
    assert_eq!(
        history.lines().next().unwrap(),
        "epoch,train_loss,train_r2,train_mue_kcal"
    );
    assert_eq!(history.lines().count(), 4);
    let metrics = json(&a.join("metrics.json"));
    for key in ["r2_train", "r2_test", "mue_train_kcal", "mue_test_kcal"] {
        assert!(metrics.get(key).is_some(), "metrics lacks {key}");
    }

    let b = ds.dir.path().join("run_b");
    let o = acnn(
        &["train", "--config", p(&a.join("run_config.cfg")), "--out", p(&b)],
        &[],
    );
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    for f in [
        "run_config.cfg",
        "split.csv",
        "split.json",
        "history.csv",
        "model.ckpt",
        "model.json",
        "metrics.json",
    ] {
        assert_eq!(
            std::fs::read(a.join(f)).unwrap(),
            std::fs::read(b.join(f)).unwrap(),
            "{f} differs"
        );
    }
}

#[test]
fn environment_and_flags_override_the_config_file() {
    let ds = dataset(6, 5, None);
    let cfg = ds.dir.path().join("run.cfg");
    std::fs::write(
        &cfg,
        "index = index.tsv\nepochs = 5\nlayers = 8\nbatch_size = 6 # whole set\n",
    )
    .unwrap();
    let run = |name: &str, env: &[(&str, &str)], extra: &[&str]| {
        let out = ds.dir.path().join(name);
        let mut args = vec!["train", "--config", p(&cfg), "--out", p(&out)];
        args.extend_from_slice(extra);
        let o = acnn(&args, env);
        assert_eq!(code(&o), 0, "{}", stderr(&o));
        read(&out.join("history.csv")).lines().count() - 1
    };
    assert_eq!(run("file", &[], &[]), 5);
    assert_eq!(run("env", &[("ACNN_EPOCHS", "2")], &[]), 2);
    assert_eq!(run("flag", &[("ACNN_EPOCHS", "2")], &["--set", "epochs=1"]), 1);
}

#[test]
fn bad_config_exits_2() {
    let ds = dataset(4, 6, None);
    let cfg = ds.dir.path().join("bad.cfg");
    std::fs::write(&cfg, "index = index.tsv\nlearning_rate = 3\n").unwrap();
    let o = acnn(
        &["train", "--config", p(&cfg), "--out", p(&ds.dir.path().join("x"))],
        &[],
    );
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("learning_rate"));
    let o = acnn(
        &["train", "--index", p(&ds.index), "--set", "epochs=0", "--out", "unused"],
        &[],
    );
    assert_eq!(code(&o), 2);
}

#[test]
fn non_finite_loss_exits_4_and_keeps_partial_history() {
    let ds = dataset(8, 7, None);
    let out = ds.dir.path().join("diverge");
    let args = [
        "train",
        "--index",
        p(&ds.index),
        "--out",
        p(&out),
        "--epochs",
        "50",
        "--deterministic",
        "--set",
        "layers=8,4",
        "--set",
        "batch_size=64",
        "--set",
        "activation=relu",
        "--set",
        "lr=1e300",
    ];
    let o = acnn(&args, &[]);
    assert_eq!(code(&o), 4, "{}", stderr(&o));
    assert!(stderr(&o).contains("epoch"), "{}", stderr(&o));
    let history = read(&out.join("history.csv"));
    let rows = history.lines().count() - 1;
    assert!(rows < 50, "history has {rows} rows");
    assert!(history.starts_with("epoch,train_loss,train_r2,train_mue_kcal\n"));
    assert!(!out.join("model.ckpt").exists());
}

#[test]
fn eval_on_the_train_subset_reproduces_history() {
    let ds = dataset(10, 8, None);
    let run = ds.dir.path().join("run");
    let o = quick_train(&ds, &run, &[]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let split = read(&run.join("split.csv"));
    let train_only: String = split
        .lines()
        .filter(|l| !l.ends_with(",test"))
        .map(|l| format!("{l}\n"))
        .collect();
    let subset = ds.dir.path().join("train_subset.csv");
    std::fs::write(&subset, &train_only).unwrap();
    let out = ds.dir.path().join("eval");
    let o = acnn(
        &[
            "eval",
            "--checkpoint",
            p(&run.join("model.ckpt")),
            "--index",
            p(&ds.index),
            "--split",
            p(&subset),
            "--out",
            p(&out),
        ],
        &[],
    );
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let history = read(&run.join("history.csv"));
    let last: Vec<f64> = history
        .lines()
        .last()
        .unwrap()
        .split(',')
        .map(|v| v.parse().unwrap())
        .collect();
    let m = json(&out.join("metrics.json"));
    assert!((m["r2_train"].as_f64().unwrap() - last[2]).abs() <= 1e-9);
    assert!((m["mue_train_kcal"].as_f64().unwrap() - last[3]).abs() <= 1e-9);
    assert!(m["r2_test"].is_null());

    let scatter = read(&out.join("scatter.csv"));
    assert_eq!(
        scatter.lines().next().unwrap(),
        "id,actual_logki,pred_logki,actual_kcal,pred_kcal"
    );
    assert_eq!(scatter.lines().count() - 1, train_only.lines().count() - 1);
}

#[test]
fn scatter_covers_every_listed_record() {
    let ds = dataset(10, 9, None);
    let run = ds.dir.path().join("run");
    assert_eq!(code(&quick_train(&ds, &run, &[])), 0);
    let out = ds.dir.path().join("eval_all");
    let o = acnn(
        &[
            "eval",
            "--checkpoint",
            p(&run.join("model.ckpt")),
            "--index",
            p(&ds.index),
            "--split",
            p(&run.join("split.csv")),
            "--out",
            p(&out),
        ],
        &[],
    );
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let scatter = read(&out.join("scatter.csv"));
    let ids: Vec<&str> = scatter.lines().skip(1).map(|l| l.split(',').next().unwrap()).collect();
    assert_eq!(ids, ds.ids.iter().map(String::as_str).collect::<Vec<_>>());
    for line in scatter.lines().skip(1) {
        let v: Vec<f64> = line.split(',').skip(1).map(|x| x.parse().unwrap()).collect();
        assert!((v[2] - v[0] * 1.9872e-3 * 298.15 * std::f64::consts::LN_10).abs() < 1e-9);
        assert!((v[3] - v[1] * 1.9872e-3 * 298.15 * std::f64::consts::LN_10).abs() < 1e-9);
    }
    let m = json(&out.join("metrics.json"));
    assert!(m["mue_test_kcal"].as_f64().is_some());
}

#[test]
fn radial_count_mismatch_exits_5() {
    let ds = dataset(6, 10, None);
    let run = ds.dir.path().join("run");
    assert_eq!(code(&quick_train(&ds, &run, &[])), 0);
    let o = acnn(
        &[
            "eval",
            "--checkpoint",
            p(&run.join("model.ckpt")),
            "--index",
            p(&ds.index),
            "--split",
            p(&run.join("split.csv")),
            "--out",
            p(&ds.dir.path().join("e")),
            "--set",
            "n_radial=5",
            "--set",
            "layers=8,4",
        ],
        &[],
    );
    assert_eq!(code(&o), 5, "{}", stderr(&o));
    assert!(stderr(&o).contains("n_radial"));
}

#[test]
fn predict_far_apart_is_zero_and_repeatable() {
    let ds = dataset(6, 11, None);
    let run = ds.dir.path().join("run");
    assert_eq!(code(&quick_train(&ds, &run, &[])), 0);
    let mut r = ChaCha8Rng::seed_from_u64(99);
    let (lc, le, lb) = ligand(&mut r, 6, 2, [40.0, 0.0, 0.0]);
    let (pc, pe) = pocket(&mut r, 20, &[], [0.0; 3]);
    let lig = ds.dir.path().join("far_ligand.sdf");
    let prot = ds.dir.path().join("far_pocket.pdb");
    std::fs::write(&lig, sdf(&lc, &le, &lb)).unwrap();
    std::fs::write(&prot, pdb(&pc, &pe)).unwrap();
    let ckpt = run.join("model.ckpt");
    let args = [
        "predict",
        "--checkpoint",
        p(&ckpt),
        "--ligand",
        p(&lig),
        "--protein",
        p(&prot),
    ];
    let a = acnn(&args, &[]);
    let b = acnn(&args, &[]);
    assert_eq!(code(&a), 0, "{}", stderr(&a));
    assert_eq!(a.stdout, b.stdout);
    let v: serde_json::Value = serde_json::from_slice(&a.stdout).unwrap();
    assert!(v["dg_kcal"].as_f64().unwrap().abs() <= 1e-10, "{v}");
    assert!(v["log_ki"].as_f64().unwrap().abs() <= 1e-10);

    let (nc, ne, nb) = ligand(&mut r, 6, 0, [0.0; 3]);
    let near = ds.dir.path().join("near_ligand.sdf");
    std::fs::write(&near, sdf(&nc, &ne, &nb)).unwrap();
    let (pc, pe) = pocket(&mut r, 20, &nc, [0.0; 3]);
    std::fs::write(&prot, pdb(&pc, &pe)).unwrap();
    let o = acnn(
        &[
            "predict",
            "--checkpoint",
            p(&run.join("model.ckpt")),
            "--ligand",
            p(&near),
            "--protein",
            p(&prot),
        ],
        &[],
    );
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    let dg = v["dg_kcal"].as_f64().unwrap();
    let lk = v["log_ki"].as_f64().unwrap();
    assert!((dg - lk * 1.9872e-3 * 298.15 * std::f64::consts::LN_10).abs() < 1e-9);
}

#[test]
fn malformed_sdf_exits_2_with_line_number() {
    let ds = dataset(6, 12, None);
    let run = ds.dir.path().join("run");
    assert_eq!(code(&quick_train(&ds, &run, &[])), 0);
    let bad = ds.dir.path().join("bad.sdf");
    std::fs::write(
        &bad,
        "bad\n\n\n  3  0  0  0  0  0  0  0  0  0999 V2000\n    0.0000    0.0000    0.0000 C\n    1.5000    0.0000    0.0000 C\nM  END\n",
    )
    .unwrap();
    let o = acnn(
        &[
            "predict",
            "--checkpoint",
            p(&run.join("model.ckpt")),
            "--ligand",
            p(&bad),
            "--protein",
            p(&ds.dir.path().join("cx000_pocket.pdb")),
        ],
        &[],
    );
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("line 7"), "{}", stderr(&o));
}

#[test]
fn malformed_structure_in_training_names_the_record() {
    let ds = dataset(6, 13, None);
    std::fs::write(ds.dir.path().join("cx002_pocket.pdb"), "REMARK nothing here\n").unwrap();
    let o = quick_train(&ds, &ds.dir.path().join("run"), &[]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("cx002"), "{}", stderr(&o));
}

#[test]
fn featurize_writes_one_row_per_atom() {
    let ds = dataset(3, 14, None);
    let structure = ds.dir.path().join("cx001_pocket.pdb");
    let o = acnn(
        &[
            "featurize",
            "--structure",
            p(&structure),
            "--set",
            "n_types=3",
            "--set",
            "n_radial=2",
        ],
        &[],
    );
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let csv = String::from_utf8(o.stdout).unwrap();
    let header: Vec<&str> = csv.lines().next().unwrap().split(',').collect();
    assert_eq!(header.len(), 2 + 3 * 2);
    let atoms = read(&structure).lines().filter(|l| l.starts_with("ATOM")).count();
    assert_eq!(csv.lines().count() - 1, atoms);

    let run = ds.dir.path().join("run");
    assert_eq!(code(&quick_train(&ds, &run, &[])), 0);
    let out = ds.dir.path().join("features.csv");
    let o = acnn(
        &[
            "featurize",
            "--structure",
            p(&structure),
            "--checkpoint",
            p(&run.join("model.ckpt")),
            "--out",
            p(&out),
        ],
        &[],
    );
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert_eq!(read(&out).lines().next().unwrap().split(',').count(), 2 + 15 * 3);
}
