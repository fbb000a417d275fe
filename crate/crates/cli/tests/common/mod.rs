#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

pub const REFERENCES: &str = "H = -13.6\nC = -1030.0\nO = -2040.0\n";

/// Random H/C/O molecules whose energy is the reference sum plus a smooth pair
/// term and a little noise.
pub fn synthetic_xyz(n: usize, seed: u64) -> String {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = Normal::new(0.0, 0.02).unwrap();
    let table = [("H", -13.6), ("C", -1030.0), ("O", -2040.0)];
    let mut text = String::new();
    for i in 0..n {
        let atoms = rng.random_range(3..=7);
        let mut pos = Vec::new();
        let mut syms = Vec::new();
        let mut energy = 0.0;
        for _ in 0..atoms {
            let (s, e) = table[rng.random_range(0..3)];
            syms.push(s);
            energy += e;
            pos.push([0; 3].map(|_| rng.random_range(-1.5..1.5f64)));
        }
        for a in 0..atoms {
            for b in a + 1..atoms {
                let d: f64 = (0..3).map(|k| (pos[a][k] - pos[b][k]).powi(2)).sum::<f64>().sqrt();
                energy -= (-d).exp();
            }
        }
        energy += noise.sample(&mut rng);
        text.push_str(&format!("{atoms}\nid=m{i:04} U0={energy}\n"));
        for (s, p) in syms.iter().zip(&pos) {
            text.push_str(&format!("{s} {} {} {}\n", p[0], p[1], p[2]));
        }
    }
    text
}

/// Writes structures, references and a small fast configuration into `dir`.
pub fn write_inputs(dir: &Path, molecules: usize) -> PathBuf {
    std::fs::write(dir.join("mols.xyz"), synthetic_xyz(molecules, 7)).unwrap();
    std::fs::write(dir.join("refs.txt"), REFERENCES).unwrap();
    let config = format!(
        "data.xyz = {}\ndata.references = {}\nsplit.n_train = {}\nsplit.n_val = {}\n\
         net.embedding_dim = 8\nnet.rbf_count = 8\nnet.hidden_dims = 8\n\
         train.max_steps = 60\ntrain.warmup_steps = 20\ntrain.interp_steps = 20\ntrain.eval_every = 20\n\
         train.batch_size = 16\ntrain.lr0 = 0.003\nensemble.m = 3\neval.k = 4\nseed = 11\n",
        dir.join("mols.xyz").display(),
        dir.join("refs.txt").display(),
        molecules * 3 / 5,
        molecules / 5,
    );
    let path = dir.join("config.txt");
    std::fs::write(&path, config).unwrap();
    path
}

pub fn uqmol(out: &Path, config: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_uqmol"))
        .arg("--config")
        .arg(config)
        .arg("--out")
        .arg(out)
        .args(args)
        .env_remove("UQMOL_OUT")
        .output()
        .expect("uqmol runs")
}

pub fn ok(out: &Path, config: &Path, args: &[&str]) -> String {
    let o = uqmol(out, config, args);
    assert!(
        o.status.success(),
        "uqmol {args:?} failed: {}",
        String::from_utf8_lossy(&o.stderr)
    );
    String::from_utf8(o.stdout).unwrap()
}

/// Full pipeline: ingest, train, predict validation and test, recalibrate, evaluate both.
pub fn pipeline(out: &Path, config: &Path, extra: &[&str]) {
    for step in [
        &["ingest"][..],
        &["train"],
        &["predict", "--split", "val"],
        &["predict", "--split", "test"],
        &["recalibrate"],
        &["evaluate", "--both"],
    ] {
        let args: Vec<&str> = step.iter().chain(extra).copied().collect();
        ok(out, config, &args);
    }
}
