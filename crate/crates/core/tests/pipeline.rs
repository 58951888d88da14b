use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use lch_core::harness::{run_to_dir, ContextSize, OfflineModel, RunConfig};
use lch_core::retriever::{Bm25, Retriever};
use lch_core::world::{derive_seed, generate_sample, supporting_needles, GenSpec, Query, TaskId};

const REPORT_FILES: [&str; 7] = [
    "records.csv",
    "table_baseline.txt",
    "table_naive_rag.txt",
    "table_proposed.txt",
    "tables_by_task.txt",
    "heatmap.csv",
    "heatmap.svg",
];

fn config(out: &Path, offline: OfflineModel) -> RunConfig {
    RunConfig {
        context_sizes: vec![ContextSize(1024), ContextSize(2048)],
        samples_per_cell: 4,
        seed: 99,
        offline: Some(offline),
        out: out.to_path_buf(),
        ..RunConfig::default()
    }
}

/// Accuracy per heatmap row label and column, recomputed from raw CSV rows.
fn accuracies_from_csv(path: &Path) -> BTreeMap<(String, String), f64> {
    let mut reader = csv::Reader::from_path(path).unwrap();
    let header = reader.headers().unwrap().clone();
    let col = |name: &str| header.iter().position(|h| h == name).unwrap();
    let (task, size, method, order, correct) =
        (col("task"), col("context_size"), col("method"), col("order"), col("correct"));
    let mut tallies: BTreeMap<(String, String), BTreeMap<String, (f64, f64)>> = BTreeMap::new();
    for row in reader.records() {
        let row = row.unwrap();
        let key = (format!("{}/{}", &row[task], &row[method]), row[size].to_string());
        let t = tallies.entry(key).or_default().entry(row[order].to_string()).or_default();
        t.1 += 1.0;
        if &row[correct] == "true" {
            t.0 += 1.0;
        }
    }
    tallies
        .into_iter()
        .map(|(k, orders)| {
            let mean = orders.values().map(|(c, n)| c / n).sum::<f64>() / orders.len() as f64;
            (k, mean)
        })
        .collect()
}

#[test]
fn offline_runs_are_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    let c = dir.path().join("c");
    let first = run_to_dir(&config(&a, OfflineModel::Oracle)).unwrap();
    run_to_dir(&config(&b, OfflineModel::Oracle)).unwrap();
    run_to_dir(&config(&c, OfflineModel::Replay(a.join("transcripts.log")))).unwrap();
    for f in REPORT_FILES {
        let reference = fs::read(a.join(f)).unwrap();
        assert_eq!(fs::read(b.join(f)).unwrap(), reference, "{f}");
        assert_eq!(fs::read(c.join(f)).unwrap(), reference, "{f} after replay");
    }
    // 3 tasks x 2 sizes x (1 + 1 + 3 orders) x 4 samples
    assert_eq!(first.records.len(), 3 * 2 * 5 * 4);
    let csv = fs::read_to_string(a.join("records.csv")).unwrap();
    assert_eq!(csv.lines().next().unwrap(), "task,context_size,method,order,index,question,target,output,correct");
}

#[test]
fn reported_accuracy_matches_csv() {
    let dir = tempfile::tempdir().unwrap();
    run_to_dir(&config(dir.path(), OfflineModel::Oracle)).unwrap();
    let expected = accuracies_from_csv(&dir.path().join("records.csv"));
    let mut reader = csv::Reader::from_path(dir.path().join("heatmap.csv")).unwrap();
    let columns: Vec<String> = reader.headers().unwrap().iter().skip(1).map(String::from).collect();
    let mut seen = 0;
    for row in reader.records() {
        let row = row.unwrap();
        for (j, col) in columns.iter().enumerate() {
            let value: f64 = row[j + 1].parse().unwrap();
            let want = expected[&(row[0].to_string(), col.clone())];
            assert_eq!(format!("{value:.2}"), format!("{want:.2}"));
            seen += 1;
        }
    }
    assert_eq!(seen, expected.len());
}

#[test]
fn failing_model_still_reports() {
    let dir = tempfile::tempdir().unwrap();
    let empty = dir.path().join("empty.log");
    fs::write(&empty, "").unwrap();
    let out = dir.path().join("run");
    let outcome = run_to_dir(&config(&out, OfflineModel::Replay(empty))).unwrap();
    assert_eq!(outcome.records.len(), 120);
    assert!(outcome.records.iter().all(|r| r.flagged && !r.correct));
    let table = fs::read_to_string(out.join("table_proposed.txt")).unwrap();
    assert!(table.contains("0.00"));
    assert!(!table.contains("1.00"));
}

#[test]
fn resolved_config_names_only_the_key_variable() {
    let dir = tempfile::tempdir().unwrap();
    run_to_dir(&config(dir.path(), OfflineModel::Oracle)).unwrap();
    let resolved = fs::read_to_string(dir.path().join("config.resolved")).unwrap();
    assert!(resolved.contains("api_key_env = \"LCH_API_KEY\""));
    assert!(!resolved.lines().any(|l| l.starts_with("api_key =")));
    let reloaded = RunConfig::from_toml(&resolved).unwrap();
    assert_eq!(reloaded.samples_per_cell, 4);
}

#[test]
fn planted_needles_are_recalled() {
    // The question names the object only; adding the holder's name gives the
    // move sentence a shared term too.
    let mut both = 0;
    for i in 0..100 {
        let s = generate_sample(&GenSpec::new(TaskId::Qa2, 4096, derive_seed(5, i))).unwrap();
        let Some(Query::ObjectLocation { object }) = &s.query else { unreachable!() };
        let support = supporting_needles(&s).unwrap();
        let holder = s.events.as_ref().unwrap()[*support.last().unwrap()].fact.actor().to_string();
        let query = format!("{} {holder}", s.question);
        assert!(query.contains(object.as_str()));
        let hits = Bm25::default().retrieve(&s.input, &query, 5).unwrap();
        let found = support.iter().all(|&k| hits.iter().any(|h| h.offset == s.needles[k].offset));
        both += usize::from(found);
    }
    assert!(both >= 90, "both needles recalled on {both}/100");
}
