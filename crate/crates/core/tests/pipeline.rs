use std::path::Path;

use stagewise::datakit::{generate_synthetic_domain, SyntheticDomainSpec};
use stagewise::eval::{best_regimen, ForgettingReport};
use stagewise::model::EncoderConfig;
use stagewise::pipeline::regimen::FORGETTING_FILE;
use stagewise::pipeline::{
    canonical_methods, enumerate_grid, rebuild_index, run_many, Domain, GridOptions, RunOptions, TaskKind,
};
use stagewise::report::{results_table, table_from_records, Layout};

fn bundle(dir: &Path, seed: u64) {
    let spec = SyntheticDomainSpec {
        domain_vocab_size: 60,
        n_train_ner: 40,
        n_train_qa: 40,
        n_dev_qa: 12,
        n_qcls: 30,
        seed,
        ..Default::default()
    };
    generate_synthetic_domain(&spec).unwrap().write_to(dir).unwrap();
}

#[test]
fn grid_over_two_domains_end_to_end() {
    let tmp = tempfile::tempdir().unwrap();
    let domains: Vec<Domain> = ["alpha", "beta"]
        .iter()
        .enumerate()
        .map(|(i, name)| {
            let dir = tmp.path().join(name);
            bundle(&dir, i as u64);
            Domain::from_bundle(name, &dir)
        })
        .collect();
    let opts = GridOptions {
        seed: 1,
        encoder: EncoderConfig {
            n_layers: 1,
            hidden: 16,
            heads: 2,
            ffn: 32,
            max_positions: 64,
            ..Default::default()
        },
        ..Default::default()
    };
    let specs = enumerate_grid(&domains, &canonical_methods(), &opts).unwrap();
    assert_eq!(specs.len(), 8);
    let root = tmp.path().join("results");
    let results = run_many(&specs, &root, 2, RunOptions::default());
    let records: Vec<_> = results.into_iter().map(|(dir, r)| (dir, r.unwrap())).collect();
    assert!(records.iter().all(|(_, r)| r.is_completed()));

    let index = rebuild_index(&root).unwrap();
    assert_eq!(index.len(), 8);
    assert!(index.iter().all(|e| e.status == "completed" && e.wall_time_ms.is_some()));

    // every [.., NER, QA] run has a finite NER-after-QA forgetting entry
    for (dir, rec) in &records {
        let order = rec.regimen.task_order();
        let f: ForgettingReport = serde_json::from_slice(&std::fs::read(dir.join(FORGETTING_FILE)).unwrap()).unwrap();
        assert_eq!(f.stages.len(), order.len());
        if let Some(ner) = order.iter().position(|t| *t == TaskKind::Ner) {
            assert!(f.entry(ner + 2, ner + 1).is_some_and(f64::is_finite));
        }
    }

    let recs: Vec<_> = records.into_iter().map(|(_, r)| r).collect();
    let table = table_from_records(&recs, Layout::Grid).unwrap();
    let labels: Vec<&str> = table.rows.iter().map(|r| r.label.as_str()).collect();
    assert_eq!(labels, ["baseline", "DAPT", "T+DAPT", "DAPT+T+DAPT"]);
    assert_eq!(table.columns, ["alpha", "beta"]);
    let best = best_regimen(&results_table(&table)).unwrap();
    assert_eq!(best.len(), 2);
    for (domain, b) in best {
        assert_eq!(Some(b.score), table.cell(&b.regimen, &domain));
    }
}
