use rand::Rng;

use uqmol::calibrate::{apply_calibration, fit_isotonic, Interpolation};
use uqmol::chemgraph::{build_graph, parse_xyz_many, Dataset, Entry, MolecularGraph, ReferenceEnergies, Target};
use uqmol::diffnet::{Checkpoint, Mpnn, NetConfig};
use uqmol::ensemble::predict_ensemble;
use uqmol::evalmetrics::{report, EvalConfig};
use uqmol::seed;
use uqmol::sweep::train_ensemble;
use uqmol::training::{Samples, TrainConfig};

fn xyz_corpus(n: usize) -> String {
    let mut rng = seed::rng(3);
    let mut text = String::new();
    for i in 0..n {
        let atoms = rng.random_range(2..=5);
        let mut energy = 0.0;
        let mut lines = String::new();
        for a in 0..atoms {
            let (sym, e) = if a == 0 { ("C", -1030.0) } else { ("H", -13.6) };
            energy += e - 0.5;
            let p: [f64; 3] = [0; 3].map(|_| rng.random_range(-1.2..1.2));
            lines.push_str(&format!("{sym} {:.5} {:.5} {:.5}\n", p[0], p[1], p[2]));
        }
        text.push_str(&format!("{atoms}\nid=q{i} U0={energy}\n{lines}"));
    }
    text
}

fn dataset(n: usize) -> Dataset {
    let refs = ReferenceEnergies::parse("H = -13.6\nC = -1030.0\n").unwrap();
    let entries = parse_xyz_many(&xyz_corpus(n), "mol")
        .unwrap()
        .into_iter()
        .map(|record| {
            let y = Target::U0.atomisation(&record, &refs).unwrap();
            Entry { record, y }
        })
        .collect();
    Dataset::new(Target::U0, entries).unwrap()
}

fn small_net() -> Mpnn {
    Mpnn::new(NetConfig {
        embedding_dim: 6,
        interaction_steps: 2,
        rbf_count: 6,
        hidden_dims: vec![6],
        ..NetConfig::default()
    })
    .unwrap()
}

fn short_training() -> TrainConfig {
    TrainConfig {
        max_steps: 40,
        warmup_steps: 10,
        interp_steps: 10,
        eval_every: 10,
        batch_size: 8,
        lr0: 3e-3,
        ..TrainConfig::default()
    }
}

#[test]
fn atomisation_targets_follow_atom_counts() {
    let data = dataset(20);
    for e in data.entries() {
        let expected = -0.5 * e.record.elements.len() as f64;
        assert!((e.y - expected).abs() < 1e-9, "{} has y {}", e.record.id, e.y);
    }
}

#[test]
fn dataset_cache_round_trips() {
    let data = dataset(15);
    let mut buf = Vec::new();
    data.write_jsonl(&mut buf).unwrap();
    let back = Dataset::read_jsonl(buf.as_slice()).unwrap();
    assert_eq!(back.entries(), data.entries());
}

#[test]
fn train_checkpoint_calibrate_evaluate() {
    let data = dataset(60);
    let net = small_net();
    let graphs: Vec<MolecularGraph> = data.entries().iter().map(|e| build_graph(&e.record, net.config.cutoff)).collect();
    let ids: Vec<String> = data.ids();
    let ys: Vec<f64> = data.entries().iter().map(|e| e.y).collect();
    let view = |r: std::ops::Range<usize>| {
        Samples::new(
            ids[r.clone()].iter().map(String::as_str).collect(),
            graphs[r.clone()].iter().collect(),
            ys[r].to_vec(),
        )
    };
    let (train, val, test) = (view(0..36), view(36..48), view(48..60));

    let outcomes = train_ensemble(&net, &train, &val, &short_training(), 3, 5, 1);
    let members: Vec<_> = outcomes.into_iter().map(|o| o.unwrap()).collect();

    let dir = std::env::temp_dir().join(format!("uqmol-core-pipeline-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    let mut restored = Vec::new();
    for (i, o) in members.iter().enumerate() {
        let path = dir.join(format!("m{i}.json"));
        Checkpoint::from_member(&o.member, o.counters.clone()).save(&path).unwrap();
        let cp = Checkpoint::<Mpnn>::load(&path).unwrap();
        cp.ensure_model(&net).unwrap();
        restored.push(cp.into_member().unwrap());
    }
    std::fs::remove_dir_all(&dir).ok();

    let originals: Vec<_> = members.iter().map(|o| o.member.clone()).collect();
    let before = predict_ensemble(&originals, &test.inputs).unwrap();
    let after = predict_ensemble(&restored, &test.inputs).unwrap();
    assert_eq!(before, after, "checkpoint reload must reproduce predictions bit for bit");

    let val_pred = predict_ensemble(&restored, &val.inputs).unwrap();
    let vars: Vec<f64> = val_pred.iter().map(|p| p.total_variance).collect();
    let errs: Vec<f64> = val_pred.iter().zip(&val.targets).map(|(p, y)| (y - p.mean).powi(2)).collect();
    let map = fit_isotonic(&vars, &errs, 1e-6, Interpolation::Step).unwrap();
    let calibrated: Vec<_> = after.iter().map(|p| apply_calibration(&map, p)).collect();
    for (c, p) in calibrated.iter().zip(&after) {
        assert_eq!(c.mean, p.mean);
        assert!((c.total_variance - c.aleatoric - c.epistemic).abs() < 1e-9 * c.total_variance.max(1.0));
    }
    let config = EvalConfig {
        k: 3,
        ..EvalConfig::default()
    };
    for preds in [&after, &calibrated] {
        let r = report(preds, &test.targets, &config).unwrap();
        assert!(r.mae.is_finite() && r.nll.is_finite() && r.ence.is_finite());
        assert!(r.mae <= r.rmse);
        assert_eq!(r.bins.bins.len(), 3);
    }
}

#[test]
fn ensemble_training_is_independent_of_worker_count() {
    let data = dataset(30);
    let net = small_net();
    let graphs: Vec<MolecularGraph> = data.entries().iter().map(|e| build_graph(&e.record, net.config.cutoff)).collect();
    let ids = data.ids();
    let ys: Vec<f64> = data.entries().iter().map(|e| e.y).collect();
    let all = Samples::new(ids.iter().map(String::as_str).collect(), graphs.iter().collect(), ys);
    let train = all.subset(&(0..20).collect::<Vec<_>>());
    let val = all.subset(&(20..30).collect::<Vec<_>>());
    let config = TrainConfig {
        max_steps: 24,
        eval_every: 5,
        ..short_training()
    };
    let params = |workers| -> Vec<Vec<f64>> {
        train_ensemble(&net, &train, &val, &config, 3, 9, workers)
            .into_iter()
            .map(|o| o.unwrap().member.params.values)
            .collect()
    };
    assert_eq!(params(1), params(3));
}
