use std::collections::BTreeSet;
use std::path::Path;

use graphpmu_core::feeder::{read_dataset, Split};
use graphpmu_core::pipeline::{
    ablate, check_no_leak, generate, graph_inputs, run_variant, sweep, train_aeds, RunConfig, StageAudit, Variant,
    DATASET_FILE, GRAPH_FILE, REPORT_FILE,
};
use graphpmu_core::Error;

fn tiny_config() -> RunConfig {
    let mut c = RunConfig::default();
    for (k, v) in [
        ("train_per_class", "4"),
        ("eval_per_class", "2"),
        ("test_per_class", "3"),
        ("window", "24"),
        ("aed.epochs", "2"),
        ("aed.batch", "16"),
        ("aed.windows_per_epoch", "48"),
        ("aed.eval_windows", "32"),
        ("graph.epochs", "2"),
        ("graph.batch", "8"),
        ("graph.hidden1", "8"),
        ("graph.hidden2", "4"),
        ("graph.disc_hidden", "4"),
        ("gmm_restarts", "2"),
    ] {
        c.set(k, v).unwrap();
    }
    c
}

fn quiet(_: &str) {}

fn files(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut out = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in std::fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                let rel = p.strip_prefix(dir).unwrap().display().to_string();
                out.push((rel, std::fs::read(&p).unwrap()));
            }
        }
    }
    out.sort();
    out
}

#[test]
fn graph_variant_reuses_the_sensor_embeddings() {
    let c = tiny_config();
    let (topo, ds) = generate(&c, 3).unwrap();
    let encoders = train_aeds(&c, &topo, &ds, &[1], 5, None, &mut quiet).unwrap();
    let plain = run_variant(&c, Variant::Aed, false, &topo, &ds, &encoders, 5).unwrap();
    let graph = run_variant(&c, Variant::GraphPmu, false, &topo, &ds, &encoders, 5).unwrap();
    assert!(plain.graph.is_none());
    assert!(graph.graph.is_some());
    assert_eq!(plain.sensor_embeddings, graph.sensor_embeddings);
    let test_ids: Vec<u64> = ds.split(Split::Test).map(|r| r.event_id).collect();
    assert_eq!(plain.report.event_ids, test_ids);
    assert_eq!(graph.report.event_ids, test_ids);
    let stages: Vec<&str> = graph.audits.iter().map(|a| a.stage.as_str()).collect();
    assert_eq!(stages, ["aed-order1", "graph", "gmm"]);
}

#[test]
fn graph_inputs_match_each_variant() {
    let c = tiny_config();
    let (topo, ds) = generate(&c, 3).unwrap();
    let encoders = train_aeds(&c, &topo, &ds, &[1], 5, None, &mut quiet).unwrap();
    let nodes = |v| {
        let g = graph_inputs(v, &encoders, &topo, &ds, false, 5).unwrap();
        assert_eq!(g.features.len(), ds.len());
        assert!(g.features.iter().all(|f| f.features.rows() == g.adjacency.rows()));
        g.adjacency.rows()
    };
    assert_eq!(nodes(Variant::AedNg), 4);
    for v in [Variant::AedNgRl, Variant::AedGNl, Variant::GraphPmu, Variant::TsNgNl] {
        assert_eq!(nodes(v), 34, "{v:?}");
    }
}

#[test]
fn leak_check_rejects_held_out_events() {
    let c = tiny_config();
    let (_, ds) = generate(&c, 3).unwrap();
    let train: BTreeSet<u64> = ds.split(Split::Train).map(|r| r.event_id).collect();
    let ok = StageAudit {
        stage: "graph".into(),
        ids: train.clone(),
    };
    check_no_leak(&ds, std::slice::from_ref(&ok)).unwrap();
    let mut leaked = train;
    leaked.insert(ds.split(Split::Test).next().unwrap().event_id);
    let bad = StageAudit {
        stage: "gmm".into(),
        ids: leaked,
    };
    assert!(matches!(check_no_leak(&ds, &[ok, bad]), Err(Error::Validation(_))));
}

#[test]
fn ablation_is_reproducible_and_writes_expected_artifacts() {
    let c = tiny_config();
    let dirs = [tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap()];
    let variants = [Variant::Aed, Variant::AedGNl];
    let mut results = Vec::new();
    for d in &dirs {
        results.push(ablate(&c, &variants, &[false], &[1, 2], 9, Some(d.path()), &mut quiet).unwrap());
    }
    assert_eq!(results[0], results[1]);
    assert_eq!(files(dirs[0].path()), files(dirs[1].path()));
    let root = dirs[0].path();
    assert_eq!(read_dataset(root.join(DATASET_FILE)).unwrap().len(), 9 * 9);
    assert!(root.join("seed-1/aed-order1.model").exists());
    assert!(!root.join("seed-1/aed/").join(GRAPH_FILE).exists());
    assert!(root.join("seed-2/aed-g-nl").join(GRAPH_FILE).exists());
    assert!(root.join("seed-2/aed-g-nl").join(REPORT_FILE).exists());
    let summary = std::fs::read_to_string(root.join("summary.csv")).unwrap();
    assert_eq!(summary.lines().count(), 1 + 2 * 2);
    let table = std::fs::read_to_string(root.join("table.csv")).unwrap();
    assert!(table.starts_with("variant,median_ari,seed_1,seed_2\naed,"));
    assert!(results[0].median_of("aed-g-nl").is_some());
}

#[test]
fn sweep_uses_nested_placements() {
    let c = tiny_config();
    let dir = tempfile::tempdir().unwrap();
    let rows = sweep(&c, &[2, 4], &[1], 4, Some(dir.path()), &mut quiet).unwrap();
    assert_eq!(rows.len(), 4);
    assert_eq!(rows[0].buses[..], rows[2].buses[..2]);
    assert!(rows.iter().all(|r| r.aris.len() == 1 && r.median.is_finite()));
    let summary = std::fs::read_to_string(dir.path().join("summary.csv")).unwrap();
    assert!(summary.starts_with("sensors,harmonics,median_ari,seed_1,buses\n2,false,"));
    assert!(dir.path().join("placement.txt").exists());

    let mut reuse = c.clone();
    reuse.aed_dir = Some(dir.path().to_path_buf());
    let again = sweep(&reuse, &[2, 4], &[1], 4, None, &mut quiet).unwrap();
    assert_eq!(rows, again);
}
