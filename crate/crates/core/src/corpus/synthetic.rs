//! Templated corpus with planted attribute classes.
//!
//! Each paragraph expresses exactly one attribute class through marker words
//! (a verb and an adjective lexicon per class) and mentions the cluster's
//! topic words. Every cluster mixes classes, so its documents conflict; the
//! reference summary is drawn from the paragraphs of a single class.

use serde::{Deserialize, Serialize};

use super::cluster::{DocumentCluster, RawCluster};
use super::prefix::{expand_all, labeled_sentences, LabeledPrefix};
use super::vocab::{Vocabulary, RESERVED_COUNT};
use crate::error::{AcmError, Result};
use crate::numeric::RngState;

const FUNCTION_WORDS: &[&str] = &[
    "the", "new", "officials", "said", "was", "reports", "on", "appeared", "this", "week",
    "residents", "and", "called", "its", "critics", "supporters", "by", "plan", ".", ":",
];

const MARKER_VERBS: [&[&str]; 2] = [
    &["praised", "welcomed", "celebrated", "backed", "applauded", "embraced"],
    &["criticized", "condemned", "attacked", "opposed", "rejected", "denounced"],
];

const MARKER_ADJECTIVES: [&[&str]; 2] = [
    &["strong", "excellent", "successful", "promising", "impressive", "hopeful"],
    &["weak", "poor", "disappointing", "troubled", "failing", "worrying"],
];

const MARKERS_PER_KIND: usize = 6;

const ENTITIES: &[&str] = &[
    "council", "company", "team", "school", "hospital", "city", "union", "agency", "court",
    "museum", "airline", "bank", "studio", "league", "university", "ministry", "railway",
    "festival", "library", "orchestra",
];

const OBJECTS: &[&str] = &[
    "budget", "project", "policy", "season", "program", "report", "proposal", "merger",
    "strategy", "contract", "reform", "campaign", "expansion", "schedule", "design", "review",
    "partnership", "launch", "investment", "renovation",
];

const MIN_ENTITIES: usize = 2;
const MIN_OBJECTS: usize = 2;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SyntheticConfig {
    /// Total vocabulary size, reserved ids included.
    pub vocab_size: usize,
    pub clusters: usize,
    pub docs_per_cluster: usize,
    pub min_paragraphs_per_doc: usize,
    pub max_paragraphs_per_doc: usize,
    pub min_sentences_per_paragraph: usize,
    pub max_sentences_per_paragraph: usize,
    pub classes: usize,
    /// Sentences copied into the reference summary.
    pub summary_sentences: usize,
    /// Class every reference summary is written from; `None` draws one per
    /// cluster.
    pub summary_class: Option<usize>,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        Self {
            vocab_size: 80,
            clusters: 50,
            docs_per_cluster: 3,
            min_paragraphs_per_doc: 2,
            max_paragraphs_per_doc: 2,
            min_sentences_per_paragraph: 2,
            max_sentences_per_paragraph: 3,
            classes: 2,
            summary_sentences: 2,
            summary_class: None,
        }
    }
}

/// The word lists a config expands into.
#[derive(Clone, Debug)]
pub struct Lexicon {
    pub verbs: Vec<Vec<String>>,
    pub adjectives: Vec<Vec<String>>,
    pub entities: Vec<String>,
    pub objects: Vec<String>,
}

impl Lexicon {
    pub fn minimum_vocab_size(classes: usize) -> usize {
        RESERVED_COUNT + FUNCTION_WORDS.len() + 2 * MARKERS_PER_KIND * classes + MIN_ENTITIES + MIN_OBJECTS
    }

    pub fn new(config: &SyntheticConfig) -> Result<Self> {
        if config.classes < 2 {
            return Err(AcmError::Config("synthetic corpus needs at least 2 classes".into()));
        }
        let min = Self::minimum_vocab_size(config.classes);
        if config.vocab_size < min {
            return Err(AcmError::Config(format!(
                "vocab_size {} is too small for the templates (need at least {min})",
                config.vocab_size
            )));
        }
        let markers = |base: &[&[&str]; 2], kind: &str| -> Vec<Vec<String>> {
            (0..config.classes)
                .map(|c| {
                    (0..MARKERS_PER_KIND)
                        .map(|k| match base.get(c) {
                            Some(words) => words[k].to_string(),
                            None => format!("c{c}{kind}{k}"),
                        })
                        .collect()
                })
                .collect()
        };
        let free = config.vocab_size - min;
        let n_entities = MIN_ENTITIES + free / 2;
        let n_objects = MIN_OBJECTS + free - free / 2;
        let named = |base: &[&str], n: usize, prefix: &str| -> Vec<String> {
            (0..n)
                .map(|i| base.get(i).map_or_else(|| format!("{prefix}{i}"), |w| w.to_string()))
                .collect()
        };
        Ok(Self {
            verbs: markers(&MARKER_VERBS, "verb"),
            adjectives: markers(&MARKER_ADJECTIVES, "adj"),
            entities: named(ENTITIES, n_entities, "entity"),
            objects: named(OBJECTS, n_objects, "object"),
        })
    }

    pub fn vocabulary(&self) -> Vocabulary {
        let words = FUNCTION_WORDS
            .iter()
            .map(|s| s.to_string())
            .chain(self.verbs.iter().flatten().cloned())
            .chain(self.adjectives.iter().flatten().cloned())
            .chain(self.entities.iter().cloned())
            .chain(self.objects.iter().cloned());
        Vocabulary::from_tokens(words).expect("lexicon words are distinct")
    }

    /// The class whose marker words appear in `words`, if exactly one does.
    pub fn marker_class<'a>(&self, words: impl IntoIterator<Item = &'a str>) -> Option<usize> {
        let mut found: Option<usize> = None;
        for w in words {
            for c in 0..self.verbs.len() {
                if self.verbs[c].iter().chain(&self.adjectives[c]).any(|m| m == w) {
                    match found {
                        Some(prev) if prev != c => return None,
                        _ => found = Some(c),
                    }
                }
            }
        }
        found
    }
}

/// Output of [`generate_synthetic_corpus`].
#[derive(Clone, Debug)]
pub struct SyntheticCorpus {
    pub vocab: Vocabulary,
    pub lexicon: Lexicon,
    pub raw: Vec<RawCluster>,
    pub clusters: Vec<DocumentCluster>,
    /// Labeled full sentences; expand with [`SyntheticCorpus::classifier_prefixes`].
    pub sentences: Vec<LabeledPrefix>,
}

impl SyntheticCorpus {
    pub fn classifier_prefixes(&self) -> Vec<LabeledPrefix> {
        expand_all(&self.sentences)
    }
}

struct Topic<'a> {
    entity: &'a str,
    objects: [&'a str; 2],
}

/// Every template opens with a marker adjective, so each non-empty prefix
/// already carries its class.
fn sentence(lex: &Lexicon, topic: &Topic<'_>, class: usize, rng: &mut RngState) -> String {
    let lead = rng.choose(&lex.adjectives[class]).clone();
    let verb = rng.choose(&lex.verbs[class]).clone();
    let adj = rng.choose(&lex.adjectives[class]).clone();
    let obj = *rng.choose(&topic.objects);
    let e = topic.entity;
    match rng.below(5) {
        0 => format!("{lead} week : the {e} {verb} the new {obj} ."),
        1 => format!("{lead} reports said the {obj} was {adj} ."),
        2 => format!("{lead} reports on the {e} {obj} appeared this week ."),
        3 => format!("{lead} residents {verb} the {e} and called its {obj} {adj} ."),
        _ => format!("{lead} critics and supporters said the {obj} plan by the {e} was {adj} ."),
    }
}

/// Generates `config.clusters` clusters, deterministically per seed.
pub fn generate_synthetic_corpus(config: &SyntheticConfig, rng: &RngState) -> Result<SyntheticCorpus> {
    let lex = Lexicon::new(config)?;
    if config.docs_per_cluster == 0
        || config.min_paragraphs_per_doc == 0
        || config.min_paragraphs_per_doc > config.max_paragraphs_per_doc
        || config.min_sentences_per_paragraph == 0
        || config.min_sentences_per_paragraph > config.max_sentences_per_paragraph
        || config.summary_sentences == 0
    {
        return Err(AcmError::Config("synthetic corpus shape parameters are inconsistent".into()));
    }
    if let Some(c) = config.summary_class {
        if c >= config.classes {
            return Err(AcmError::Config(format!(
                "summary_class {c} out of range for {} classes",
                config.classes
            )));
        }
    }
    let vocab = lex.vocabulary();
    let mut raw = Vec::with_capacity(config.clusters);
    for k in 0..config.clusters {
        let mut rng = rng.split(&format!("cluster-{k}"));
        raw.push(generate_cluster(config, &lex, &mut rng));
    }
    let clusters = raw
        .iter()
        .map(|r| DocumentCluster::from_raw(r, &vocab))
        .collect::<Result<Vec<_>>>()?;
    let sentences = labeled_sentences(&clusters, &vocab);
    Ok(SyntheticCorpus {
        vocab,
        lexicon: lex,
        raw,
        clusters,
        sentences,
    })
}

fn generate_cluster(config: &SyntheticConfig, lex: &Lexicon, rng: &mut RngState) -> RawCluster {
    let entity = rng.choose(&lex.entities).as_str();
    let first = rng.below(lex.objects.len());
    let second = (first + 1 + rng.below(lex.objects.len() - 1)) % lex.objects.len();
    let topic = Topic {
        entity,
        objects: [&lex.objects[first], &lex.objects[second]],
    };

    let counts: Vec<usize> = (0..config.docs_per_cluster)
        .map(|_| rng.range_inclusive(config.min_paragraphs_per_doc, config.max_paragraphs_per_doc))
        .collect();
    let total: usize = counts.iter().sum();

    // Conflicting views: every class appears when there is room for it.
    let mut classes: Vec<usize> = (0..total)
        .map(|i| if i < config.classes { i } else { rng.below(config.classes) })
        .collect();
    rng.shuffle(&mut classes);

    let summary_class = config
        .summary_class
        .unwrap_or_else(|| rng.below(config.classes));

    let mut documents = Vec::with_capacity(counts.len());
    let mut labels = Vec::with_capacity(counts.len());
    let mut summary_parts = Vec::new();
    let mut next = 0;
    for &n in &counts {
        let mut paragraphs = Vec::with_capacity(n);
        let mut doc_labels = Vec::with_capacity(n);
        for _ in 0..n {
            let class = classes[next];
            next += 1;
            let k = rng.range_inclusive(
                config.min_sentences_per_paragraph,
                config.max_sentences_per_paragraph,
            );
            let sents: Vec<String> = (0..k).map(|_| sentence(lex, &topic, class, rng)).collect();
            if class == summary_class && summary_parts.len() < config.summary_sentences {
                summary_parts.push(sents[0].clone());
            }
            paragraphs.push(sents.join(" "));
            doc_labels.push(class);
        }
        documents.push(paragraphs.join("\n\n"));
        labels.push(doc_labels);
    }
    if summary_parts.is_empty() {
        // Only reachable with fewer paragraphs than classes.
        summary_parts.push(sentence(lex, &topic, summary_class, rng));
    }
    RawCluster {
        documents,
        summary: Some(summary_parts.join(" ")),
        labels: Some(labels),
        summary_label: Some(summary_class),
    }
}
