//! Acceptance harness: one PASS/FAIL line per criterion.

use std::collections::BTreeMap;
use std::ops::Range;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::process::ExitCode;
use std::time::Instant;

use proptest::prelude::*;
use proptest::test_runner::{Config, TestRunner};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use stagewise::datakit::{
    build_vocabulary, features::qa_training_features, generate_synthetic_domain, parse_conll_ner, parse_corpus,
    parse_qcls_tsv, parse_squad_json, Answer, NerExample,
    PackingLimits, QaExample, QclsExample, SyntheticDomainSpec, TextCorpus,
};
use stagewise::datakit::formats::{write_conll, write_corpus, write_qcls_tsv, write_squad_json};
use stagewise::eval::{entity_f1, evaluate_qa, exact_match, normalize_answer, token_f1};
use stagewise::model::checkpoint::{load_checkpoint, save_checkpoint, CheckpointMeta};
use stagewise::model::{
    backward, encode, example_loss, head_loss, init_encoder, BackwardOptions, Batch, EncoderConfig, Example,
    HeadKind, Model, TaskHead, Target,
};
use stagewise::pipeline::regimen::{checkpoint_path, read_record};
use stagewise::pipeline::train::{predict_qa, train_stage};
use stagewise::pipeline::{
    canonical_methods, enumerate_grid, DatasetRef, lineage_tasks, run_dir_for, run_regimen, scan_runs, Domain, GridOptions,
    RunOptions, StageSpec, TaskKind,
};
use stagewise::report::{parse_csv, reference_grid, Layout};
use stagewise_cli::{cmd_ablate, cmd_report, cmd_run};

type Outcome = Result<String, String>;

macro_rules! ensure {
    ($cond:expr, $($msg:tt)+) => {
        if !$cond {
            return Err(format!($($msg)+));
        }
    };
}

fn err(e: impl std::fmt::Display) -> String {
    e.to_string()
}

fn small_bundle(dir: &Path, seed: u64) {
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

fn tiny_encoder() -> EncoderConfig {
    EncoderConfig {
        n_layers: 1,
        hidden: 16,
        heads: 2,
        ffn: 32,
        max_positions: 64,
        ..Default::default()
    }
}

// ---- 1 ----------------------------------------------------------------------

fn metric_fixtures() -> Outcome {
    let f1 = token_f1("ribose", "ribose, whereas the sugar in DNA is deoxyribose");
    ensure!(f1 == 0.25, "token_f1 = {f1}");
    let em = exact_match("Victor Stone", "Victor Stone");
    ensure!(em == 1.0, "exact_match = {em}");
    Ok(format!("token_f1 = {f1}, exact_match = {em}"))
}

// ---- 2 ----------------------------------------------------------------------

struct GradCase {
    ids: Vec<u32>,
    valid: Vec<bool>,
    mlm: Vec<Option<u32>>,
    tags: Vec<u32>,
    context: Range<usize>,
}

fn grad_case(seed: u64) -> GradCase {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut ids: Vec<u32> = (0..8).map(|_| rng.random_range(5..50)).collect();
    ids[6] = 0;
    ids[7] = 0;
    GradCase {
        ids,
        valid: vec![true, true, true, true, true, true, false, false],
        mlm: vec![None, Some(7), None, Some(30), None, None, None, None],
        tags: (0..8).map(|_| rng.random_range(0..3)).collect(),
        context: 2..6,
    }
}

fn grad_model(kind: HeadKind, seed: u64) -> Model<f64> {
    let cfg = EncoderConfig {
        n_layers: 1,
        hidden: 16,
        heads: 2,
        ffn: 32,
        max_positions: 8,
        vocab_size: 50,
        dropout: 0.0,
        seed,
    };
    let labels: Vec<String> = match kind {
        HeadKind::TokenCls => vec!["O".into(), "B-PER".into(), "I-PER".into()],
        HeadKind::SeqCls => vec!["a".into(), "b".into(), "c".into(), "d".into()],
        _ => vec![],
    };
    let mut model = Model {
        encoder: init_encoder::<f64>(&cfg).unwrap(),
        head: TaskHead::zeros(kind, 16, labels, 50),
    };
    // move every tensor off its init so no gradient path is trivially zero
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xA5);
    for (name, t) in model.tensors_mut() {
        let gain = name.ends_with(".gain");
        for v in t.data.iter_mut() {
            let noise = rng.random_range(-0.5..0.5);
            *v = if gain { 1.0 + noise } else { *v * 10.0 + noise * 0.4 };
        }
    }
    model
}

/// Largest per-tensor `‖analytic − numeric‖ / max(‖analytic‖, ‖numeric‖, 1e-6)`.
fn gradient_error(kind: HeadKind, seed: u64, h: f64) -> (f64, String) {
    let model = grad_model(kind, seed);
    let cases = [grad_case(seed), grad_case(seed + 100)];
    let exs: Vec<Example<'_>> = cases
        .iter()
        .map(|c| Example {
            ids: &c.ids,
            valid: &c.valid,
            target: match kind {
                HeadKind::Mlm => Target::Mlm(&c.mlm),
                HeadKind::TokenCls => Target::Tags(&c.tags),
                HeadKind::SpanExtract => Target::Span {
                    context: &c.context,
                    start: 3,
                    end: 4,
                },
                HeadKind::SeqCls => Target::Class(1),
            },
        })
        .collect();
    let loss = |m: &Model<f64>| exs.iter().map(|e| example_loss(m, e).unwrap().0).sum::<f64>() / exs.len() as f64;
    let (_, grads) = backward(&model, &exs, BackwardOptions::default()).unwrap();
    let mut probe = model.clone();
    let mut worst = (0.0, String::new());
    for (ti, (name, g)) in grads.tensors().into_iter().enumerate() {
        let (mut diff, mut na, mut nn) = (0.0f64, 0.0f64, 0.0f64);
        for j in 0..g.data.len() {
            let orig = model.tensors()[ti].1.data[j];
            probe.tensors_mut()[ti].1.data[j] = orig + h;
            let up = loss(&probe);
            probe.tensors_mut()[ti].1.data[j] = orig - h;
            let down = loss(&probe);
            probe.tensors_mut()[ti].1.data[j] = orig;
            let numeric = (up - down) / (2.0 * h);
            diff += (g.data[j] - numeric).powi(2);
            na += g.data[j].powi(2);
            nn += numeric.powi(2);
        }
        let rel = diff.sqrt() / na.sqrt().max(nn.sqrt()).max(1e-6);
        if rel > worst.0 {
            worst = (rel, name);
        }
    }
    worst
}

fn gradient_oracle() -> Outcome {
    let mut parts = Vec::new();
    for kind in [HeadKind::Mlm, HeadKind::TokenCls, HeadKind::SpanExtract, HeadKind::SeqCls] {
        let (rel, name) = gradient_error(kind, 7, 1e-3);
        ensure!(rel < 1e-4, "{} head: relative error {rel:.3e} at {name}", kind.name());
        parts.push(format!("{} {rel:.1e}", kind.name()));
    }
    Ok(parts.join(", "))
}

// ---- 3 ----------------------------------------------------------------------

fn loss_anchors() -> Outcome {
    let hidden_size = 16;
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let t = 12;
    let hidden: Vec<f64> = (0..t * hidden_size).map(|_| rng.random_range(-2.0..2.0)).collect();
    let valid = vec![true; t];
    let span = TaskHead::<f64>::zeros(HeadKind::SpanExtract, hidden_size, vec![], 50);
    let context = 1..11;
    let (span_loss, _) = head_loss(
        &span,
        &hidden,
        &valid,
        Target::Span {
            context: &context,
            start: 4,
            end: 6,
        },
    )
    .map_err(err)?;
    let labels = ["a", "b", "c", "d"].map(String::from).to_vec();
    let cls = TaskHead::<f64>::zeros(HeadKind::SeqCls, hidden_size, labels, 50);
    let (cls_loss, _) = head_loss(&cls, &hidden, &valid, Target::Class(2)).map_err(err)?;
    let (e10, e4) = ((span_loss - 10f64.ln()).abs(), (cls_loss - 4f64.ln()).abs());
    ensure!(e10 <= 1e-6, "span loss {span_loss} vs ln 10");
    ensure!(e4 <= 1e-6, "class loss {cls_loss} vs ln 4");
    Ok(format!("span {span_loss:.9} (ln 10), class {cls_loss:.9} (ln 4)"))
}

// ---- 4 ----------------------------------------------------------------------

fn overfit() -> Outcome {
    let spec = SyntheticDomainSpec {
        n_train_qa: 16,
        n_dev_qa: 4,
        n_train_ner: 8,
        n_qcls: 8,
        seed: 4,
        ..Default::default()
    };
    let bundle = generate_synthetic_domain(&spec).map_err(err)?;
    let examples = &bundle.qa_train;
    ensure!(examples.len() == 16, "{} examples", examples.len());
    let texts: Vec<&str> = examples.iter().flat_map(|e| [e.context.as_str(), e.question.as_str()]).collect();
    let vocab = build_vocabulary(texts, 8000).map_err(err)?;
    let mut cfg = EncoderConfig {
        dropout: 0.0,
        seed: 4,
        ..Default::default()
    };
    cfg.vocab_size = vocab.size();
    let (features, dropped) = qa_training_features(examples, &vocab, PackingLimits::new(cfg.max_positions));
    ensure!(dropped == 0 && features.len() == 16, "{dropped} examples dropped");
    let mut model = Model {
        encoder: init_encoder::<f32>(&cfg).map_err(err)?,
        head: TaskHead::zeros(HeadKind::SpanExtract, cfg.hidden, vec![], cfg.vocab_size),
    };
    let mut stage = StageSpec::new(TaskKind::Qa, DatasetRef::Path("qa_train.json".into()));
    stage.lr = 3e-3;
    stage.batch_size = 16;
    stage.epochs = 500;
    let summary = train_stage(&mut model, &stage, &features, 4).map_err(err)?;
    ensure!(summary.steps <= 500, "{} steps", summary.steps);
    ensure!(summary.final_loss < 0.1, "loss {} after {} steps", summary.final_loss, summary.steps);
    let preds = predict_qa(&model.encoder, &model.head, examples, &vocab).map_err(err)?;
    let report = evaluate_qa(&preds, examples).map_err(err)?;
    let em = report.exact_match.unwrap_or(0.0);
    ensure!(em == 100.0, "EM {em} (loss {})", summary.final_loss);
    Ok(format!("loss {:.4} after {} steps, EM {em}", summary.final_loss, summary.steps))
}

// ---- 5 ----------------------------------------------------------------------

fn synthetic_transfer(root: &Path) -> Outcome {
    let methods: Vec<_> = canonical_methods()
        .into_iter()
        .filter(|m| m.name == "baseline" || m.name == "T+DAPT")
        .collect();
    let mut scores: BTreeMap<String, Vec<f64>> = BTreeMap::new();
    for seed in 0..5u64 {
        let dir = root.join(format!("bundle-{seed}"));
        let spec = SyntheticDomainSpec {
            entity_answer_correlation: 1.0,
            generic_overlap: 0.1,
            seed,
            ..Default::default()
        };
        generate_synthetic_domain(&spec).map_err(err)?.write_to(&dir).map_err(err)?;
        let domain = Domain::from_bundle("synth", &dir);
        let opts = GridOptions {
            seed,
            ..Default::default()
        };
        for regimen in enumerate_grid(&[domain], &methods, &opts).map_err(err)? {
            let rec = run_regimen(&regimen, &run_dir_for(root, &regimen), RunOptions { forgetting_probe: false })
                .map_err(err)?;
            ensure!(rec.is_completed(), "{} failed: {:?}", rec.name, rec.status);
            let method = regimen.name.split('/').next().unwrap().to_string();
            scores.entry(method).or_default().push(rec.headline_f1().unwrap_or(f64::NAN));
        }
    }
    let mean = |m: &str| scores[m].iter().sum::<f64>() / scores[m].len() as f64;
    let (base, ner) = (mean("baseline"), mean("T+DAPT"));
    ensure!(ner - base >= 5.0, "[NER, QA] {ner:.2} vs [QA] {base:.2}");
    Ok(format!("[NER, QA] {ner:.2} vs [QA] {base:.2} F1 over 5 seeds (margin {:.2})", ner - base))
}

// ---- 6 ----------------------------------------------------------------------

fn grid_shape(root: &Path) -> Outcome {
    let mut domains = Vec::new();
    let mut entries = Vec::new();
    for (i, name) in ["movies", "news", "bio", "covid"].iter().enumerate() {
        let dir = root.join(format!("bundle-{name}"));
        small_bundle(&dir, i as u64 + 10);
        domains.push(Domain::from_bundle(name, &dir));
        entries.push(serde_json::json!({"name": name, "bundle": format!("bundle-{name}")}));
    }
    let specs = enumerate_grid(&domains, &canonical_methods(), &GridOptions::default()).map_err(err)?;
    ensure!(specs.len() == 16, "{} runs enumerated", specs.len());

    let config = root.join("grid.json");
    let body = serde_json::json!({
        "seed": 3,
        "workers": 2,
        "encoder": tiny_encoder(),
        "forgetting_probe": false,
        "grid": {"domains": entries},
    });
    std::fs::write(&config, serde_json::to_vec_pretty(&body).unwrap()).map_err(err)?;
    cmd_run(&config, Some(root.join("results")), None, None, 1).map_err(err)?;
    let runs = scan_runs(&root.join("results")).map_err(err)?;
    ensure!(runs.len() == 16, "{} run records", runs.len());
    let table = cmd_report(&root.join("results"), Layout::Grid).map_err(err)?;
    ensure!(
        table.rows.len() == 4 && table.columns.len() == 4,
        "{}×{} table",
        table.rows.len(),
        table.columns.len()
    );
    ensure!(table.rows.iter().all(|r| r.cells.iter().all(Option::is_some)), "missing cells");

    let fixture = reference_grid();
    let md = fixture.to_markdown(1);
    // bold cell of each column, read back from the rendered rows
    let rows: Vec<Vec<&str>> = md
        .lines()
        .skip(4)
        .map(|l| l.trim_matches('|').split('|').map(str::trim).skip(1).collect())
        .collect();
    let bold: Vec<&str> = (0..fixture.columns.len())
        .filter_map(|c| rows.iter().find_map(|r| r[c].strip_prefix("**")?.strip_suffix("**")))
        .collect();
    ensure!(md.matches("**").count() == 2 * 4 + 2, "extra bold marks");
    ensure!(bold == ["68.0", "57.0", "58.9", "47.2"], "bold cells {bold:?}");
    Ok(format!("16 runs, 4×4 report, fixture bold {bold:?}"))
}

// ---- 7 ----------------------------------------------------------------------

fn ablation(root: &Path) -> Outcome {
    let bundle = root.join("bundle");
    let spec = SyntheticDomainSpec {
        domain_vocab_size: 60,
        n_train_ner: 40,
        n_train_qa: 120,
        n_dev_qa: 12,
        n_qcls: 30,
        seed: 21,
        ..Default::default()
    };
    generate_synthetic_domain(&spec).map_err(err)?.write_to(&bundle).map_err(err)?;
    let member = |m: &str| serde_json::json!({"bundle": "bundle", "member": m});
    let body = serde_json::json!({
        "seed": 5,
        "encoder": tiny_encoder(),
        "ablation": {
            "base": {
                "name": "budget",
                "stages": [{"task": "QA", "dataset": member("qa_train")}],
                "eval_targets": [member("qa_dev")],
            },
            "sweep": {"epochs": [1, 2], "samples": [1000, 5000, "all"]},
            "extra_cells": [{"epochs": 2, "samples": "all", "freeze": {"kind": "encoder_frozen_head_only"}}],
        },
    });
    let config = root.join("ablate.json");
    std::fs::write(&config, serde_json::to_vec_pretty(&body).unwrap()).map_err(err)?;
    let out = root.join("results");
    cmd_ablate(&config, Some(out.clone()), None, Some(2), 4).map_err(err)?;

    let csv = std::fs::read_to_string(out.join("sweep_summary.csv")).map_err(err)?;
    let table = parse_csv(&csv).map_err(err)?;
    ensure!(table.rows.len() == 7, "{} summary rows", table.rows.len());
    ensure!(
        table.rows.iter().all(|r| r.status.is_none() && r.cells.iter().all(Option::is_some)),
        "missing cells in summary"
    );
    let runs = scan_runs(&out).map_err(err)?;
    let (dir, head) = runs
        .iter()
        .find(|(_, r)| r.name.ends_with("(Head)]"))
        .ok_or("no head-only run")?;
    let stage = &head.stages[0];
    ensure!(stage.encoder_frozen, "head-only stage not marked frozen");
    let before = load_checkpoint(&checkpoint_path(dir, &stage.parent_id)).map_err(err)?;
    let after = load_checkpoint(&checkpoint_path(dir, &stage.checkpoint_id)).map_err(err)?;
    let same = before
        .encoder
        .tensors()
        .iter()
        .zip(after.encoder.tensors())
        .all(|((_, a), (_, b))| a.data.iter().map(|v| v.to_bits()).eq(b.data.iter().map(|v| v.to_bits())));
    ensure!(same, "head-only run changed the encoder");
    let labels: Vec<&str> = table.rows.iter().map(|r| r.label.as_str()).collect();
    Ok(format!("7 complete rows {labels:?}; head-only encoder bitwise equal"))
}

// ---- 8 ----------------------------------------------------------------------

fn determinism_and_lineage(root: &Path) -> Outcome {
    let bundle = root.join("bundle");
    small_bundle(&bundle, 31);
    let domain = Domain::from_bundle("synth", &bundle);
    let opts = GridOptions {
        seed: 8,
        encoder: tiny_encoder(),
        ..Default::default()
    };
    let specs = enumerate_grid(&[domain], &canonical_methods(), &opts).map_err(err)?;
    let mut bits = Vec::new();
    for spec in &specs {
        let a = run_regimen(spec, &root.join("a").join(&spec.name), RunOptions::default()).map_err(err)?;
        let b = run_regimen(spec, &root.join("b").join(&spec.name), RunOptions::default()).map_err(err)?;
        let (fa, fb) = (a.headline_f1().ok_or("no F1")?, b.headline_f1().ok_or("no F1")?);
        ensure!(fa.to_bits() == fb.to_bits(), "{}: {fa} vs {fb}", spec.name);
        let ra = std::fs::read(root.join("a").join(&spec.name).join("record.json")).map_err(err)?;
        let rb = std::fs::read(root.join("b").join(&spec.name).join("record.json")).map_err(err)?;
        ensure!(ra == rb, "{}: record.json differs between reruns", spec.name);
        bits.push(format!("{} {fa:.2}", spec.name));
    }
    let dir = root.join("a").join("DAPT+T+DAPT/synth");
    let rec = read_record(&dir).map_err(err)?;
    let lineage = lineage_tasks(&dir, rec.final_checkpoint()).map_err(err)?;
    ensure!(lineage == [TaskKind::Mlm, TaskKind::Ner, TaskKind::Qa], "lineage {lineage:?}");
    Ok(format!("bit-identical F1 ({}); lineage {lineage:?}", bits.join(", ")))
}

// ---- 9 ----------------------------------------------------------------------

fn checkpoint_roundtrip(root: &Path) -> Outcome {
    let cfg = EncoderConfig {
        vocab_size: 300,
        seed: 9,
        ..Default::default()
    };
    let encoder = init_encoder::<f32>(&cfg).map_err(err)?;
    let head = TaskHead::zeros(HeadKind::SpanExtract, cfg.hidden, vec![], cfg.vocab_size);
    let dir = root.join("ckpt");
    save_checkpoint(&dir, &encoder, &[("qa", &head)], CheckpointMeta::default()).map_err(err)?;
    let loaded = load_checkpoint(&dir).map_err(err)?;
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    for b in 0..100 {
        let n = rng.random_range(1..5);
        let rows: Vec<Vec<u32>> = (0..n)
            .map(|_| {
                let len = rng.random_range(1..=cfg.max_positions);
                (0..len).map(|_| rng.random_range(0..cfg.vocab_size as u32)).collect()
            })
            .collect();
        let refs: Vec<&[u32]> = rows.iter().map(Vec::as_slice).collect();
        let batch = Batch::pad(&refs);
        let x = encode(&encoder, &batch).map_err(err)?;
        let y = encode(&loaded.encoder, &batch).map_err(err)?;
        let same = x.iter().flatten().map(|v| v.to_bits()).eq(y.iter().flatten().map(|v| v.to_bits()));
        ensure!(same, "batch {b} differs after reload");
    }
    Ok("100 batches bit-identical".into())
}

// ---- 10 ---------------------------------------------------------------------

fn spans_oracle(tags: &[String]) -> Vec<(String, usize, usize)> {
    // every maximal run starting at B-X or at an I-X whose predecessor is not X
    let typ = |t: &str| t.split_once('-').map(|(_, x)| x.to_string());
    let mut out = Vec::new();
    for start in 0..tags.len() {
        let Some(x) = typ(&tags[start]) else { continue };
        let opens = tags[start].starts_with("B-")
            || start == 0
            || typ(&tags[start - 1]).as_deref() != Some(x.as_str());
        if !opens {
            continue;
        }
        let mut end = start + 1;
        while end < tags.len() && tags[end] == format!("I-{x}") {
            end += 1;
        }
        out.push((x, start, end));
    }
    out
}

fn oracle_f1(pairs: &[(Vec<String>, Vec<String>)]) -> f64 {
    let (mut p, mut g, mut m) = (0usize, 0usize, 0usize);
    for (pred, gold) in pairs {
        let (ps, gs) = (spans_oracle(pred), spans_oracle(gold));
        m += ps.iter().filter(|s| gs.contains(s)).count();
        p += ps.len();
        g += gs.len();
    }
    if p + g == 0 {
        return 1.0;
    }
    2.0 * m as f64 / (p + g) as f64
}

fn tag_seq(len: usize) -> impl Strategy<Value = Vec<String>> {
    prop::collection::vec(
        prop::sample::select(vec!["O", "B-PER", "I-PER", "B-LOC", "I-LOC"]).prop_map(String::from),
        len,
    )
}

fn suite<S: Strategy>(name: &str, cases: u32, strategy: S, test: impl Fn(S::Value) -> Result<(), TestCaseError>) -> Result<String, String> {
    let mut runner = TestRunner::new(Config {
        cases,
        failure_persistence: None,
        ..Config::default()
    });
    runner.run(&strategy, test).map_err(|e| format!("{name}: {e}"))?;
    Ok(format!("{name} ({cases})"))
}

fn property_suites(root: &Path) -> Outcome {
    let text = "[ a-zA-Z0-9,.!?'()-]{0,40}";
    let mut done = Vec::new();
    done.push(suite("normalization idempotence", 256, text, |s| {
        let once = normalize_answer(&s);
        prop_assert_eq!(normalize_answer(&once), once);
        Ok(())
    })?);
    done.push(suite("F1 symmetry and bounds", 256, (text, text), |(a, b)| {
        let (ab, ba) = (token_f1(&a, &b), token_f1(&b, &a));
        prop_assert_eq!(ab, ba);
        prop_assert!((0.0..=1.0).contains(&ab));
        Ok(())
    })?);
    done.push(suite("EM implies F1 = 1", 256, (text, text), |(a, b)| {
        for (p, g) in [(&a, &b), (&a, &a)] {
            if exact_match(p, g) == 1.0 && !normalize_answer(g).is_empty() {
                prop_assert_eq!(token_f1(p, g), 1.0);
            }
        }
        Ok(())
    })?);
    let pairs = prop::collection::vec((0usize..=10).prop_flat_map(|n| (tag_seq(n), tag_seq(n))), 1..4);
    done.push(suite("entity F1 vs span oracle", 1000, pairs, |pairs| {
        let got = entity_f1(pairs.iter().map(|(p, g)| (p.as_slice(), g.as_slice()))).unwrap();
        prop_assert!((got - oracle_f1(&pairs)).abs() < 1e-12, "{} vs {}", got, oracle_f1(&pairs));
        Ok(())
    })?);

    let cfg = EncoderConfig {
        n_layers: 2,
        hidden: 16,
        heads: 2,
        ffn: 32,
        max_positions: 12,
        vocab_size: 40,
        dropout: 0.0,
        seed: 12,
    };
    let encoder = init_encoder::<f64>(&cfg).map_err(err)?;
    let seqs = (1usize..=12, 1usize..=12).prop_flat_map(|(a, b)| {
        (prop::collection::vec(1u32..40, a), prop::collection::vec(1u32..40, b))
    });
    done.push(suite("padding invariance", 128, seqs, |(a, b)| {
        let alone = encode(&encoder, &Batch::pad(&[&a])).unwrap().remove(0);
        let padded = encode(&encoder, &Batch::pad(&[&a, &b])).unwrap().remove(0);
        prop_assert_eq!(&padded[..alone.len()], &alone[..]);
        Ok(())
    })?);

    let word = "[a-z]{1,6}";
    let qa = (prop::collection::vec(word, 3..12), 0usize..100, 1usize..3).prop_map(|(words, at, len)| {
        let context = words.join(" ");
        let start = at % words.len();
        let end = (start + len).min(words.len());
        let text = words[start..end].join(" ");
        let char_start = words[..start].iter().map(|w| w.chars().count() + 1).sum();
        QaExample {
            id: format!("q{at}"),
            question: format!("what {}", words[0]),
            context,
            answers: vec![Answer { text, char_start }],
        }
    });
    done.push(suite("SQuAD round-trip", 128, prop::collection::vec(qa, 1..5), |exs| {
        let back = parse_squad_json(&write_squad_json(&exs, "t")).unwrap();
        prop_assert!(back.invalid.is_empty());
        prop_assert_eq!(back.examples, exs);
        Ok(())
    })?);
    let ner = prop::collection::vec(
        (1usize..8).prop_flat_map(|n| (prop::collection::vec(word, n), tag_seq(n))),
        1..5,
    );
    done.push(suite("CoNLL round-trip", 128, ner, |rows| {
        let exs: Vec<NerExample> = rows
            .into_iter()
            .map(|(tokens, mut tags)| {
                // valid BIO: a leading I-X becomes B-X
                for i in 0..tags.len() {
                    if let Some(x) = tags[i].strip_prefix("I-") {
                        if i == 0 || !tags[i - 1].ends_with(x) {
                            tags[i] = format!("B-{x}");
                        }
                    }
                }
                NerExample { tokens, tags }
            })
            .collect();
        let back = parse_conll_ner(&write_conll(&exs)).unwrap();
        prop_assert_eq!(back.repairs, 0);
        prop_assert_eq!(back.examples, exs);
        Ok(())
    })?);
    let qcls = prop::collection::vec(
        ("[a-z]{1,6}( [a-z]{1,6}){0,4}\\?", "(DESC|ENTY|HUM|LOC|NUM)").prop_map(|(question, label)| QclsExample { question, label }),
        1..6,
    );
    done.push(suite("QCLS round-trip", 128, qcls, |exs| {
        let back = parse_qcls_tsv(&write_qcls_tsv(&exs)).unwrap();
        prop_assert_eq!(back.examples, exs);
        Ok(())
    })?);
    let docs = prop::collection::vec("[a-z]{1,6}( [a-z]{1,6}){0,8}", 1..5);
    done.push(suite("corpus round-trip", 128, docs, |docs| {
        let corpus = TextCorpus::new("c", docs).unwrap();
        let back = parse_corpus("c", &write_corpus(&corpus)).unwrap();
        prop_assert_eq!(back.documents, corpus.documents);
        Ok(())
    })?);
    let _ = root;
    Ok(done.join(", "))
}

// ---- harness ----------------------------------------------------------------

fn main() -> ExitCode {
    type Criterion = (&'static str, fn(&Path) -> Outcome);
    let criteria: [Criterion; 10] = [
        ("metric fixtures", |_| metric_fixtures()),
        ("gradient oracle", |_| gradient_oracle()),
        ("analytic-loss anchors", |_| loss_anchors()),
        ("overfit sanity", |_| overfit()),
        ("synthetic transfer", synthetic_transfer),
        ("grid shape", grid_shape),
        ("ablation harness", ablation),
        ("determinism and lineage", determinism_and_lineage),
        ("checkpoint roundtrip", checkpoint_roundtrip),
        ("property suites", property_suites),
    ];
    let filter: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let mut failed = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        if !filter.is_empty() && !filter.iter().any(|p| name.contains(p.as_str())) {
            continue;
        }
        let tmp = tempfile::tempdir().expect("temp dir");
        let started = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(|| f(tmp.path())))
            .unwrap_or_else(|p| Err(format!("panicked: {}", panic_text(&p))));
        let secs = started.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("PASS [{}] {name}: {detail} ({secs:.1}s)", i + 1),
            Err(detail) => {
                failed += 1;
                println!("FAIL [{}] {name}: {detail} ({secs:.1}s)", i + 1);
            }
        }
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}

fn panic_text(p: &Box<dyn std::any::Any + Send>) -> String {
    p.downcast_ref::<&str>()
        .map(|s| s.to_string())
        .or_else(|| p.downcast_ref::<String>().cloned())
        .unwrap_or_else(|| "unknown".into())
}
