//! Synthetic domain generator.
//!
//! A domain is a vocabulary of pseudo-words split into entity words (grouped
//! by entity type) and plain content words. Contexts are structure-free runs
//! of content words with one entity mention, so an entity can only be found
//! by knowing the domain lexicon. QA answers are entity spans with a
//! controllable probability; NER and QCLS data draw from the same lexicon.
//! The generic domain (the SQuAD stand-in) shares a controllable number of
//! word types with the target domain.

use std::collections::{BTreeSet, HashSet};
use std::path::Path;

use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::formats::{
    parse_conll_ner, parse_corpus, parse_qcls_tsv, parse_squad_json, write_conll, write_corpus,
    write_qcls_tsv, write_squad_json, Answer, NerExample, QaExample, QclsExample, TextCorpus,
};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticDomainSpec {
    pub domain_vocab_size: usize,
    pub generic_overlap: f64,
    pub entity_types: Vec<String>,
    pub entity_answer_correlation: f64,
    pub n_train_ner: usize,
    pub n_train_qa: usize,
    pub n_dev_qa: usize,
    pub n_qcls: usize,
    pub template_count: usize,
    pub seed: u64,
}

impl Default for SyntheticDomainSpec {
    fn default() -> Self {
        Self {
            domain_vocab_size: 200,
            generic_overlap: 0.1,
            entity_types: vec!["PER".into(), "LOC".into(), "ORG".into()],
            entity_answer_correlation: 1.0,
            n_train_ner: 600,
            n_train_qa: 600,
            n_dev_qa: 200,
            n_qcls: 300,
            template_count: 8,
            seed: 0,
        }
    }
}

/// Share of each vocabulary used for entity words.
const ENTITY_SHARE: f64 = 0.3;
const SENTENCES_PER_CONTEXT: usize = 3;
const MIN_VOCAB: usize = 40;

impl SyntheticDomainSpec {
    pub fn validate(&self) -> Result<()> {
        let mut problems = Vec::new();
        for (name, v) in [
            ("n_train_ner", self.n_train_ner),
            ("n_train_qa", self.n_train_qa),
            ("n_dev_qa", self.n_dev_qa),
            ("n_qcls", self.n_qcls),
            ("template_count", self.template_count),
        ] {
            if v == 0 {
                problems.push(format!("{name} must be positive"));
            }
        }
        if self.domain_vocab_size < MIN_VOCAB {
            problems.push(format!("domain_vocab_size must be at least {MIN_VOCAB}"));
        }
        for (name, v) in [
            ("generic_overlap", self.generic_overlap),
            ("entity_answer_correlation", self.entity_answer_correlation),
        ] {
            if !(0.0..=1.0).contains(&v) {
                problems.push(format!("{name} must lie in [0, 1]"));
            }
        }
        if self.entity_types.len() < 2 {
            problems.push("at least two entity types are required".into());
        }
        let unique: HashSet<_> = self.entity_types.iter().collect();
        if unique.len() != self.entity_types.len() {
            problems.push("entity types must be unique".into());
        }
        if self
            .entity_types
            .iter()
            .any(|t| t.is_empty() || t.chars().any(|c| c.is_whitespace() || c == '-'))
        {
            problems.push("entity types must be non-empty and contain no whitespace or '-'".into());
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::InvalidSpec(problems.join("; ")))
        }
    }

    pub fn shared_type_count(&self) -> usize {
        (self.generic_overlap * self.domain_vocab_size as f64).round() as usize
    }

    fn entity_word_count(&self) -> usize {
        ((ENTITY_SHARE * self.domain_vocab_size as f64).round() as usize).max(self.entity_types.len() * 2)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Entity {
    pub words: Vec<String>,
    pub entity_type: usize,
}

impl Entity {
    pub fn surface(&self) -> String {
        self.words.iter().map(|w| capitalize(w)).collect::<Vec<_>>().join(" ")
    }
}

fn capitalize(w: &str) -> String {
    let mut c = w.chars();
    match c.next() {
        Some(f) => f.to_uppercase().chain(c).collect(),
        None => String::new(),
    }
}

/// Word inventory and lexicon of one domain.
#[derive(Debug, Clone)]
pub struct DomainLexicon {
    pub content_words: Vec<String>,
    /// Entity words per entity type.
    pub entity_words: Vec<Vec<String>>,
    pub entities: Vec<Entity>,
    /// Sentence skeletons: content-slot count and optional comma position.
    templates: Vec<(usize, Option<usize>)>,
}

impl DomainLexicon {
    pub fn word_types(&self) -> BTreeSet<String> {
        self.content_words
            .iter()
            .chain(self.entity_words.iter().flatten())
            .cloned()
            .collect()
    }
}

#[derive(Debug, Clone)]
pub struct SyntheticBundle {
    pub spec: SyntheticDomainSpec,
    pub domain: DomainLexicon,
    pub generic: DomainLexicon,
    pub ner: Vec<NerExample>,
    pub qa_train: Vec<QaExample>,
    pub qa_dev: Vec<QaExample>,
    pub qcls: Vec<QclsExample>,
    pub domain_corpus: TextCorpus,
    pub generic_corpus: TextCorpus,
}

/// Bundle member roles and their file names.
pub const BUNDLE_FILES: [(&str, &str); 6] = [
    ("ner", "ner.conll"),
    ("qa_train", "qa_train.json"),
    ("qa_dev", "qa_dev.json"),
    ("qcls", "qcls.tsv"),
    ("domain_corpus", "domain_corpus.txt"),
    ("generic_corpus", "generic_corpus.txt"),
];
pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BundleFile {
    pub role: String,
    pub path: String,
    pub bytes: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BundleManifest {
    pub files: Vec<BundleFile>,
    pub seed: u64,
    pub spec: SyntheticDomainSpec,
}

impl BundleManifest {
    pub fn path_of(&self, role: &str) -> Option<&str> {
        self.files.iter().find(|f| f.role == role).map(|f| f.path.as_str())
    }
}

const CONSONANTS: &[u8] = b"bdfgklmnprstvz";
const VOWELS: &[u8] = b"aeiou";

fn pseudo_word(rng: &mut ChaCha8Rng) -> String {
    let syllables = rng.random_range(2..=3);
    let mut w = String::with_capacity(syllables * 2);
    for _ in 0..syllables {
        w.push(*CONSONANTS.choose(rng).unwrap() as char);
        w.push(*VOWELS.choose(rng).unwrap() as char);
    }
    w
}

fn fresh_words(rng: &mut ChaCha8Rng, n: usize, taken: &mut HashSet<String>) -> Vec<String> {
    let mut out = Vec::with_capacity(n);
    while out.len() < n {
        let w = pseudo_word(rng);
        if taken.insert(w.clone()) {
            out.push(w);
        }
    }
    out
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Role {
    Content,
    Entity(usize),
}

fn build_lexicon(
    words: Vec<(String, Role)>,
    n_types: usize,
    template_count: usize,
    rng: &mut ChaCha8Rng,
) -> DomainLexicon {
    let mut content_words = Vec::new();
    let mut entity_words = vec![Vec::new(); n_types];
    for (w, role) in words {
        match role {
            Role::Content => content_words.push(w),
            Role::Entity(t) => entity_words[t].push(w),
        }
    }
    let mut entities = Vec::new();
    for (t, group) in entity_words.iter().enumerate() {
        for w in group {
            let mut ent = vec![w.clone()];
            if group.len() > 1 && rng.random_bool(0.4) {
                let other = loop {
                    let o = group.choose(rng).unwrap();
                    if o != w {
                        break o.clone();
                    }
                };
                ent.push(other);
            }
            entities.push(Entity {
                words: ent,
                entity_type: t,
            });
        }
    }
    let templates = (0..template_count)
        .map(|_| {
            let slots = rng.random_range(5..=9);
            let comma = rng.random_bool(0.5).then(|| rng.random_range(1..slots - 1));
            (slots, comma)
        })
        .collect();
    DomainLexicon {
        content_words,
        entity_words,
        entities,
        templates,
    }
}

fn make_lexicons(spec: &SyntheticDomainSpec, rng: &mut ChaCha8Rng) -> (DomainLexicon, DomainLexicon, Vec<String>) {
    let n = spec.domain_vocab_size;
    let n_types = spec.entity_types.len();
    let n_entity = spec.entity_word_count().min(n - MIN_VOCAB / 2);
    let mut taken = HashSet::new();
    let domain_words = fresh_words(rng, n, &mut taken);
    let domain_roles: Vec<Role> = (0..n)
        .map(|i| if i < n_entity { Role::Entity(i % n_types) } else { Role::Content })
        .collect();

    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(rng);
    let mut shared_idx = idx[..spec.shared_type_count()].to_vec();
    shared_idx.sort_unstable();

    let mut generic: Vec<(String, Role)> = shared_idx
        .iter()
        .map(|&i| (domain_words[i].clone(), domain_roles[i]))
        .collect();
    let mut per_type = vec![0usize; n_types];
    for (_, r) in &generic {
        if let Role::Entity(t) = r {
            per_type[*t] += 1;
        }
    }
    let fresh = fresh_words(rng, n - generic.len(), &mut taken);
    let mut entity_total: usize = per_type.iter().sum();
    for w in fresh {
        let role = if entity_total < n_entity {
            let t = (0..n_types).min_by_key(|&t| (per_type[t], t)).unwrap();
            per_type[t] += 1;
            entity_total += 1;
            Role::Entity(t)
        } else {
            Role::Content
        };
        generic.push((w, role));
    }
    let shared: Vec<String> = shared_idx.iter().map(|&i| domain_words[i].clone()).collect();
    let domain = build_lexicon(
        domain_words.into_iter().zip(domain_roles).collect(),
        n_types,
        spec.template_count,
        rng,
    );
    let generic = build_lexicon(generic, n_types, spec.template_count, rng);
    (domain, generic, shared)
}

/// One generated passage with its token roles.
struct Passage {
    text: String,
    /// (char_start, surface) of the entity mention.
    entity: (usize, String, usize),
    /// Content words in order with their char starts, sentence index, and
    /// whether they end a sentence or carry a trailing comma.
    content: Vec<(usize, String, bool)>,
    entity_sentence: Vec<String>,
}

fn passage(lex: &DomainLexicon, rng: &mut ChaCha8Rng) -> Passage {
    let skeletons: Vec<(usize, Option<usize>)> = (0..SENTENCES_PER_CONTEXT)
        .map(|_| *lex.templates.choose(rng).unwrap())
        .collect();
    let total: usize = skeletons.iter().map(|s| s.0).sum();
    let words: Vec<&String> = lex
        .content_words
        .choose_multiple(rng, total.min(lex.content_words.len()))
        .collect();
    let entity = lex.entities.choose(rng).unwrap();
    let host = rng.random_range(0..SENTENCES_PER_CONTEXT);

    let mut text = String::new();
    let mut chars = 0usize;
    let push = |text: &mut String, s: &str, chars: &mut usize| {
        text.push_str(s);
        *chars += s.chars().count();
    };
    let mut content = Vec::new();
    let mut entity_at = (0, String::new(), entity.entity_type);
    let mut entity_sentence = Vec::new();
    let mut cursor = 0;
    for (si, &(slots, comma)) in skeletons.iter().enumerate() {
        let n = slots.min(words.len() - cursor);
        let sentence = &words[cursor..cursor + n];
        cursor += n;
        let ent_pos = (si == host).then(|| rng.random_range(0..=n));
        let mut first = true;
        for pos in 0..=n {
            if ent_pos == Some(pos) {
                if !(si == 0 && first) {
                    push(&mut text, " ", &mut chars);
                }
                first = false;
                let surface = entity.surface();
                entity_at = (chars, surface.clone(), entity.entity_type);
                push(&mut text, &surface, &mut chars);
                if pos == n {
                    push(&mut text, ".", &mut chars);
                }
            }
            if pos == n {
                break;
            }
            if !(si == 0 && first) {
                push(&mut text, " ", &mut chars);
            }
            first = false;
            let w = sentence[pos];
            let last = pos + 1 == n && ent_pos != Some(n);
            let breaks = last || comma == Some(pos);
            content.push((chars, w.clone(), breaks));
            push(&mut text, w, &mut chars);
            if si == host {
                entity_sentence.push(w.clone());
            }
            if last {
                push(&mut text, ".", &mut chars);
            } else if comma == Some(pos) {
                push(&mut text, ",", &mut chars);
            }
        }
    }
    Passage {
        text,
        entity: entity_at,
        content,
        entity_sentence,
    }
}

const QUESTION_WORDS: [&str; 3] = ["who", "where", "which"];

fn qa_examples(
    lex: &DomainLexicon,
    n: usize,
    correlation: f64,
    prefix: &str,
    rng: &mut ChaCha8Rng,
) -> Vec<QaExample> {
    let n_entity = (correlation * n as f64).round() as usize;
    let mut is_entity: Vec<bool> = (0..n).map(|i| i < n_entity).collect();
    is_entity.shuffle(rng);
    is_entity
        .into_iter()
        .enumerate()
        .map(|(i, entity_answer)| {
            let p = passage(lex, rng);
            let (question, answer) = if entity_answer {
                let (start, surface, ty) = &p.entity;
                let cues: Vec<&String> = p.entity_sentence.choose_multiple(rng, 2).collect();
                let cue = cues.iter().map(|s| s.as_str()).collect::<Vec<_>>().join(" ");
                let qword = QUESTION_WORDS[(*ty).min(QUESTION_WORDS.len() - 1)];
                (
                    format!("{qword} is mentioned with {cue}?"),
                    Answer {
                        text: surface.clone(),
                        char_start: *start,
                    },
                )
            } else {
                // cue word followed by one or two content words in the same sentence
                let candidates: Vec<usize> = (0..p.content.len().saturating_sub(1))
                    .filter(|&j| {
                        !p.content[j].2 && p.content[j + 1].0 == p.content[j].0 + p.content[j].1.len() + 1
                    })
                    .collect();
                let j = *candidates.choose(rng).expect("passages have adjacent content words");
                let mut text = p.content[j + 1].1.clone();
                if !p.content[j + 1].2
                    && j + 2 < p.content.len()
                    && p.content[j + 2].0 == p.content[j + 1].0 + text.len() + 1
                    && rng.random_bool(0.5)
                {
                    text = format!("{text} {}", p.content[j + 2].1);
                }
                (
                    format!("what follows {}?", p.content[j].1),
                    Answer {
                        text,
                        char_start: p.content[j + 1].0,
                    },
                )
            };
            QaExample {
                id: format!("{prefix}-{i:05}"),
                context: p.text,
                question,
                answers: vec![answer],
            }
        })
        .collect()
}

fn ner_examples(lex: &DomainLexicon, types: &[String], n: usize, rng: &mut ChaCha8Rng) -> Vec<NerExample> {
    (0..n)
        .map(|_| {
            let &(slots, comma) = lex.templates.choose(rng).unwrap();
            let words: Vec<&String> = lex.content_words.choose_multiple(rng, slots).collect();
            let n_ent = rng.random_range(1..=2);
            let ents: Vec<&Entity> = lex.entities.choose_multiple(rng, n_ent).collect();
            let mut positions: Vec<usize> = (0..n_ent).map(|_| rng.random_range(0..=words.len())).collect();
            positions.sort_unstable();
            let mut tokens = Vec::new();
            let mut tags = Vec::new();
            let mut next_ent = 0;
            for pos in 0..=words.len() {
                while next_ent < n_ent && positions[next_ent] == pos {
                    let e = ents[next_ent];
                    for (k, w) in e.words.iter().enumerate() {
                        tokens.push(capitalize(w));
                        let prefix = if k == 0 { "B" } else { "I" };
                        tags.push(format!("{prefix}-{}", types[e.entity_type]));
                    }
                    next_ent += 1;
                }
                if pos == words.len() {
                    break;
                }
                tokens.push(words[pos].clone());
                tags.push("O".into());
                if comma == Some(pos) {
                    tokens.push(",".into());
                    tags.push("O".into());
                }
            }
            tokens.push(".".into());
            tags.push("O".into());
            NerExample { tokens, tags }
        })
        .collect()
}

fn qcls_examples(lex: &DomainLexicon, types: &[String], n: usize, rng: &mut ChaCha8Rng) -> Vec<QclsExample> {
    (0..n)
        .map(|_| {
            let e = lex.entities.choose(rng).unwrap();
            let w = lex.content_words.choose(rng).unwrap();
            QclsExample {
                question: format!("what about {} {w}?", e.surface()),
                label: types[e.entity_type].clone(),
            }
        })
        .collect()
}

fn corpus(lex: &DomainLexicon, name: &str, n: usize, rng: &mut ChaCha8Rng) -> TextCorpus {
    let docs = (0..n).map(|_| passage(lex, rng).text).collect();
    TextCorpus::new(name, docs).expect("passages are non-empty")
}

/// Generates a bundle. Pure in the spec (including its seed).
pub fn generate_synthetic_domain(spec: &SyntheticDomainSpec) -> Result<SyntheticBundle> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let (domain, generic, _) = make_lexicons(spec, &mut rng);
    let c = spec.entity_answer_correlation;
    let types = &spec.entity_types;
    let ner = ner_examples(&domain, types, spec.n_train_ner, &mut rng);
    let qa_train = qa_examples(&generic, spec.n_train_qa, c, "train", &mut rng);
    let qa_dev = qa_examples(&domain, spec.n_dev_qa, c, "dev", &mut rng);
    let qcls = qcls_examples(&domain, types, spec.n_qcls, &mut rng);
    let domain_corpus = corpus(&domain, "domain", spec.n_train_ner, &mut rng);
    let generic_corpus = corpus(&generic, "generic", spec.n_train_qa, &mut rng);
    Ok(SyntheticBundle {
        spec: spec.clone(),
        domain,
        generic,
        ner,
        qa_train,
        qa_dev,
        qcls,
        domain_corpus,
        generic_corpus,
    })
}

impl SyntheticBundle {
    /// Serialized member files, in [`BUNDLE_FILES`] order.
    pub fn files(&self) -> Vec<(&'static str, &'static str, Vec<u8>)> {
        BUNDLE_FILES
            .iter()
            .map(|&(role, name)| {
                let bytes = match role {
                    "ner" => write_conll(&self.ner),
                    "qa_train" => write_squad_json(&self.qa_train, "generic"),
                    "qa_dev" => write_squad_json(&self.qa_dev, "domain"),
                    "qcls" => write_qcls_tsv(&self.qcls),
                    "domain_corpus" => write_corpus(&self.domain_corpus),
                    _ => write_corpus(&self.generic_corpus),
                };
                (role, name, bytes)
            })
            .collect()
    }

    pub fn manifest(&self) -> BundleManifest {
        BundleManifest {
            files: self
                .files()
                .into_iter()
                .map(|(role, name, bytes)| BundleFile {
                    role: role.into(),
                    path: name.into(),
                    bytes: bytes.len(),
                })
                .collect(),
            seed: self.spec.seed,
            spec: self.spec.clone(),
        }
    }

    /// Writes the six member files and `manifest.json` into `dir`.
    pub fn write_to(&self, dir: &Path) -> Result<BundleManifest> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        for (_, name, bytes) in self.files() {
            let path = dir.join(name);
            std::fs::write(&path, bytes).map_err(|e| Error::io(path, e))?;
        }
        let manifest = self.manifest();
        let path = dir.join(MANIFEST_FILE);
        let json = serde_json::to_vec_pretty(&manifest).expect("manifest serializes");
        std::fs::write(&path, json).map_err(|e| Error::io(path, e))?;
        Ok(manifest)
    }

    pub fn entity_surfaces(&self) -> HashSet<String> {
        self.domain.entities.iter().map(Entity::surface).collect()
    }

    /// Fraction of dev golds that are entity surface forms.
    pub fn dev_entity_answer_fraction(&self) -> f64 {
        let surfaces = self.entity_surfaces();
        let hits = self
            .qa_dev
            .iter()
            .filter(|ex| ex.answers.iter().any(|a| surfaces.contains(&a.text)))
            .count();
        hits as f64 / self.qa_dev.len() as f64
    }

    /// Post-condition checker; returns the list of violated guarantees.
    pub fn check(&self) -> Vec<String> {
        let mut problems = Vec::new();
        let shared = self
            .domain
            .word_types()
            .intersection(&self.generic.word_types())
            .count();
        if shared != self.spec.shared_type_count() {
            problems.push(format!(
                "domain and generic vocabularies share {shared} types, expected {}",
                self.spec.shared_type_count()
            ));
        }
        for ex in self.qa_train.iter().chain(&self.qa_dev) {
            if let Err(e) = ex.check_answers() {
                problems.push(format!("{}: {e}", ex.id));
            }
        }
        let target = self.spec.entity_answer_correlation;
        let frac = self.dev_entity_answer_fraction();
        if (frac - target).abs() > 0.5 / self.qa_dev.len() as f64 + 1e-12 {
            problems.push(format!("dev entity-answer fraction {frac} differs from {target}"));
        }
        for (role, _, bytes) in self.files() {
            let ok = match role {
                "ner" => parse_conll_ner(&bytes).map(|d| d.examples.len() == self.ner.len()),
                "qa_train" | "qa_dev" => parse_squad_json(&bytes).map(|d| d.invalid.is_empty()),
                "qcls" => parse_qcls_tsv(&bytes).map(|d| d.examples.len() == self.qcls.len()),
                _ => parse_corpus(role, &bytes).map(|_| true),
            };
            match ok {
                Ok(true) => {}
                Ok(false) => problems.push(format!("{role}: re-parse differs")),
                Err(e) => problems.push(format!("{role}: {e}")),
            }
        }
        problems
    }
}
