use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::config::{CorpusSource, ExperimentConfig};
use super::manifest::{Manifest, RunLock};
use crate::classifier::{train_classifier, ClassifierModel, ClassifierReport};
use crate::corpus::prefix::{expand_all, labeled_sentences};
use crate::corpus::{
    generate_synthetic_corpus, read_raw_jsonl, save_jsonl, DocumentCluster, LabeledPrefix, RawCluster, TokenId,
    Vocabulary,
};
use crate::decoding::{ablate, summarize_cluster, AblationReport, AblationVariant, Beam, BeamConfig};
use crate::error::{AcmError, Result};
use crate::eval::{attribute_probability, corpus_report, CorpusReport};
use crate::numeric::RngState;
use crate::summarizer::{train_summarizer, ConditioningWeights, SummarizerModel, SummarizerReport};

/// Tokenized corpus with its vocabulary and classifier training prefixes.
#[derive(Clone, Debug)]
pub struct LoadedCorpus {
    pub vocab: Vocabulary,
    pub raw: Vec<RawCluster>,
    pub clusters: Vec<DocumentCluster>,
    pub prefixes: Vec<LabeledPrefix>,
    pub classes: usize,
}

impl LoadedCorpus {
    pub fn from_raw(raw: Vec<RawCluster>, vocab: Vocabulary, classes: Option<usize>) -> Result<Self> {
        let clusters = raw
            .iter()
            .map(|r| DocumentCluster::from_raw(r, &vocab))
            .collect::<Result<Vec<_>>>()?;
        let prefixes = expand_all(&labeled_sentences(&clusters, &vocab));
        let seen = prefixes.iter().map(|p| p.label + 1).max().unwrap_or(0);
        Ok(Self {
            classes: classes.unwrap_or(seen).max(seen).max(2),
            vocab,
            raw,
            clusters,
            prefixes,
        })
    }
}

pub fn load_corpus(config: &ExperimentConfig) -> Result<LoadedCorpus> {
    match config.corpus.source {
        CorpusSource::Synthetic => {
            let rng = RngState::new(config.seed).split("corpus");
            let c = generate_synthetic_corpus(&config.corpus.synthetic, &rng)?;
            LoadedCorpus::from_raw(c.raw, c.vocab, Some(config.corpus.synthetic.classes))
        }
        CorpusSource::Jsonl => {
            let path = config.corpus.path.as_ref().expect("validated");
            let raw = read_raw_jsonl(path)?;
            let vocab = match &config.corpus.vocab {
                Some(v) => Vocabulary::load(v)?,
                None => build_vocab(&raw, config.corpus.max_vocab),
            };
            LoadedCorpus::from_raw(raw, vocab, None)
        }
    }
}

pub fn build_vocab(raw: &[RawCluster], max_size: Option<usize>) -> Vocabulary {
    let texts = raw
        .iter()
        .flat_map(|r| r.documents.iter().map(String::as_str).chain(r.summary.as_deref()));
    Vocabulary::build(texts, max_size)
}

/// Cluster indices per split; deterministic in the seed.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Splits {
    pub train: Vec<usize>,
    pub val: Vec<usize>,
    pub test: Vec<usize>,
}

impl Splits {
    pub fn new(n: usize, val: usize, test: usize, rng: &RngState) -> Result<Self> {
        if val + test >= n {
            return Err(AcmError::Config(format!(
                "{val} validation and {test} test clusters leave nothing to train on out of {n}"
            )));
        }
        let mut idx: Vec<usize> = (0..n).collect();
        rng.split("splits").shuffle(&mut idx);
        let test_idx = idx[..test].to_vec();
        let val_idx = idx[test..test + val].to_vec();
        let mut train = idx[test + val..].to_vec();
        train.sort_unstable();
        Ok(Self {
            train,
            val: val_idx,
            test: test_idx,
        })
    }

    pub fn pick(ids: &[usize], clusters: &[DocumentCluster]) -> Vec<DocumentCluster> {
        ids.iter().map(|&i| clusters[i].clone()).collect()
    }
}

pub fn fit_classifier(config: &ExperimentConfig, corpus: &LoadedCorpus) -> Result<(ClassifierModel, ClassifierReport)> {
    let cfg = crate::classifier::ClassifierConfig {
        vocab_size: corpus.vocab.len(),
        classes: corpus.classes,
        ..config.classifier.clone()
    };
    let rng = RngState::new(config.seed).split("classifier");
    train_classifier(&corpus.prefixes, cfg, &config.classifier_train, &rng)
}

pub fn fit_summarizer(
    config: &ExperimentConfig,
    corpus: &LoadedCorpus,
    splits: &Splits,
    classifier: Option<&ClassifierModel>,
    weights: ConditioningWeights,
) -> Result<(SummarizerModel, SummarizerReport)> {
    let cfg = crate::summarizer::SummarizerConfig {
        vocab_size: corpus.vocab.len(),
        ..config.summarizer.clone()
    };
    let train = Splits::pick(&splits.train, &corpus.clusters);
    let val = Splits::pick(&splits.val, &corpus.clusters);
    let rng = RngState::new(config.seed).split("summarizer");
    let scorer = classifier.map(|c| c as &dyn crate::classifier::AttributeScorer);
    train_summarizer(
        &train,
        &val,
        scorer,
        Some(config.attribute),
        weights,
        cfg,
        &config.summarizer_train,
        &rng,
    )
}

/// One line of a summaries file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SummaryRecord {
    pub summary: String,
    pub base_lp: f64,
    pub attr_lp: f64,
}

pub fn decode_clusters(
    model: &SummarizerModel,
    clusters: &[DocumentCluster],
    classifier: Option<&ClassifierModel>,
    attribute: usize,
    beam: &BeamConfig,
) -> Result<Vec<Beam>> {
    let scorer = classifier.map(|c| c as &dyn crate::classifier::AttributeScorer);
    clusters
        .iter()
        .map(|c| summarize_cluster(model, c, scorer, attribute, beam))
        .collect()
}

pub fn summary_records(beams: &[Beam], vocab: &Vocabulary, eos: TokenId) -> Vec<SummaryRecord> {
    beams
        .iter()
        .map(|b| SummaryRecord {
            summary: vocab.detokenize(b.content(eos)),
            base_lp: b.base_lp,
            attr_lp: b.attr_lp,
        })
        .collect()
}

pub fn write_summaries(records: &[SummaryRecord], path: &Path) -> Result<()> {
    let mut buf = Vec::new();
    for r in records {
        serde_json::to_writer(&mut buf, r).expect("record serializes");
        buf.push(b'\n');
    }
    fs::write(path, buf).map_err(|e| AcmError::io(path, e))
}

pub fn read_summaries(path: &Path) -> Result<Vec<SummaryRecord>> {
    let text = fs::read_to_string(path).map_err(|e| AcmError::io(path, e))?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str(l).map_err(|e| AcmError::Parse {
                path: path.to_path_buf(),
                line: i + 1,
                message: e.to_string(),
            })
        })
        .collect()
}

/// ROUGE over word tokens, plus attribute statistics when a classifier is
/// given.
pub fn evaluate_texts(
    candidates: &[String],
    references: &[String],
    classifier: Option<(&ClassifierModel, &Vocabulary, usize)>,
) -> Result<CorpusReport> {
    let cand: Vec<Vec<String>> = candidates.iter().map(|s| crate::corpus::tokenize::words(s)).collect();
    let refs: Vec<Vec<String>> = references.iter().map(|s| crate::corpus::tokenize::words(s)).collect();
    let probs = match classifier {
        None => None,
        Some((model, vocab, a)) => Some(
            candidates
                .iter()
                .map(|s| attribute_probability(model, &crate::corpus::tokenize(s, vocab), a))
                .collect::<Result<Vec<_>>>()?,
        ),
    };
    corpus_report(&cand, &refs, probs.as_deref())
}

pub fn write_json<T: Serialize>(value: &T, path: &Path) -> Result<()> {
    let text = serde_json::to_string_pretty(value).expect("value serializes");
    fs::write(path, text + "\n").map_err(|e| AcmError::io(path, e))
}

pub fn write_text(text: &str, path: &Path) -> Result<()> {
    let mut f = fs::File::create(path).map_err(|e| AcmError::io(path, e))?;
    f.write_all(text.as_bytes()).map_err(|e| AcmError::io(path, e))
}

/// Files produced by [`run_pipeline`], relative to the run directory.
#[derive(Clone, Debug)]
pub struct PipelineOutcome {
    pub dir: PathBuf,
    pub classifier: ClassifierReport,
    pub summarizer: SummarizerReport,
    pub report: CorpusReport,
}

pub const CONFIG_FILE: &str = "config.toml";
pub const CORPUS_FILE: &str = "corpus.jsonl";
pub const VOCAB_FILE: &str = "vocab.txt";
pub const CLASSIFIER_FILE: &str = "classifier.ckpt";
pub const SUMMARIZER_FILE: &str = "summarizer.ckpt";
pub const TEST_FILE: &str = "test.jsonl";
pub const SUMMARIES_FILE: &str = "summaries.jsonl";
pub const REPORT_FILE: &str = "report.json";
pub const REPORT_TABLE_FILE: &str = "report.txt";
pub const MANIFEST_FILE: &str = "manifest.json";

/// Data generation, classifier and summarizer training, decoding of the test
/// clusters and evaluation, all under `config.output_dir`.
pub fn run_pipeline(config: &ExperimentConfig) -> Result<PipelineOutcome> {
    config.validate()?;
    let dir = config.output_dir.clone();
    let _lock = RunLock::acquire(&dir)?;
    let mut manifest = Manifest::new(config.hash(), config.seed);
    if let (CorpusSource::Jsonl, Some(p)) = (config.corpus.source, &config.corpus.path) {
        manifest.input(p)?;
    }
    let out = |name: &str| dir.join(name);

    config.save(out(CONFIG_FILE))?;
    let corpus = load_corpus(config)?;
    save_jsonl(&corpus.raw, out(CORPUS_FILE))?;
    corpus.vocab.save(out(VOCAB_FILE))?;

    let rng = RngState::new(config.seed);
    let splits = Splits::new(
        corpus.clusters.len(),
        config.split.val_clusters,
        config.split.test_clusters,
        &rng,
    )?;
    let test_raw: Vec<RawCluster> = splits.test.iter().map(|&i| corpus.raw[i].clone()).collect();
    save_jsonl(&test_raw, out(TEST_FILE))?;

    let (classifier, classifier_report) = fit_classifier(config, &corpus)?;
    classifier.to_checkpoint().save(out(CLASSIFIER_FILE))?;

    let (model, summarizer_report) = fit_summarizer(config, &corpus, &splits, Some(&classifier), config.weights)?;
    model.to_checkpoint().save(out(SUMMARIZER_FILE))?;

    let test = Splits::pick(&splits.test, &corpus.clusters);
    let beam = BeamConfig {
        alpha1: config.weights.alpha1,
        ..config.beam.clone()
    };
    let beams = decode_clusters(&model, &test, Some(&classifier), config.attribute, &beam)?;
    let records = summary_records(&beams, &corpus.vocab, beam.eos);
    write_summaries(&records, &out(SUMMARIES_FILE))?;

    let candidates: Vec<String> = records.iter().map(|r| r.summary.clone()).collect();
    let references: Vec<String> = test_raw.iter().map(|r| r.summary.clone().unwrap_or_default()).collect();
    let report = evaluate_texts(
        &candidates,
        &references,
        Some((&classifier, &corpus.vocab, config.attribute)),
    )?;
    write_json(&report, &out(REPORT_FILE))?;
    write_text(&report.to_table(), &out(REPORT_TABLE_FILE))?;

    for name in [
        CONFIG_FILE,
        CORPUS_FILE,
        VOCAB_FILE,
        TEST_FILE,
        CLASSIFIER_FILE,
        SUMMARIZER_FILE,
        SUMMARIES_FILE,
        REPORT_FILE,
        REPORT_TABLE_FILE,
    ] {
        manifest.output(&dir, &out(name))?;
    }
    manifest.save(out(MANIFEST_FILE))?;
    Ok(PipelineOutcome {
        dir,
        classifier: classifier_report,
        summarizer: summarizer_report,
        report,
    })
}

/// Variant names used by [`run_ablation`], in report order.
pub const ABLATION_VARIANTS: [&str; 5] = [
    "baseline",
    "graph-only",
    "training-only",
    "discriminator-only",
    "full",
];

/// Trains the conditioning variants on one corpus and decodes the test
/// clusters with each. The baseline model (no conditioning) also serves the
/// discriminator-only row, decoded with `α₁`.
pub fn run_ablation(
    config: &ExperimentConfig,
    corpus: &LoadedCorpus,
    classifier: &ClassifierModel,
    variants: &[&str],
) -> Result<AblationReport> {
    let rng = RngState::new(config.seed);
    let splits = Splits::new(
        corpus.clusters.len(),
        config.split.val_clusters,
        config.split.test_clusters,
        &rng,
    )?;
    let w = config.weights;
    let none = ConditioningWeights::none();
    let training_weights = |name: &str| -> Result<ConditioningWeights> {
        Ok(match name {
            "baseline" | "discriminator-only" => none,
            "graph-only" => ConditioningWeights { alpha2: w.alpha2, ..none },
            "training-only" => ConditioningWeights { alpha3: w.alpha3, ..none },
            "full" => ConditioningWeights { alpha1: 0.0, ..w },
            other => return Err(AcmError::Config(format!("unknown ablation variant {other:?}"))),
        })
    };
    let mut trained: Vec<(ConditioningWeights, SummarizerModel)> = Vec::new();
    for name in variants {
        let tw = training_weights(name)?;
        if !trained.iter().any(|(k, _)| *k == tw) {
            let (m, _) = fit_summarizer(config, corpus, &splits, Some(classifier), tw)?;
            trained.push((tw, m));
        }
    }
    let rows: Vec<AblationVariant<'_>> = variants
        .iter()
        .map(|name| {
            let tw = training_weights(name).expect("checked");
            let model = &trained.iter().find(|(k, _)| *k == tw).expect("trained").1;
            let alpha1 = if matches!(*name, "discriminator-only" | "full") { w.alpha1 } else { 0.0 };
            AblationVariant {
                name: name.to_string(),
                model,
                alpha1,
            }
        })
        .collect();
    let test = Splits::pick(&splits.test, &corpus.clusters);
    ablate(&rows, &test, classifier, config.attribute, &config.beam)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn splits_are_disjoint_and_deterministic() {
        let rng = RngState::new(4);
        let s = Splits::new(20, 3, 4, &rng).unwrap();
        assert_eq!(s, Splits::new(20, 3, 4, &rng).unwrap());
        let mut all: Vec<usize> = s.train.iter().chain(&s.val).chain(&s.test).copied().collect();
        all.sort_unstable();
        assert_eq!(all, (0..20).collect::<Vec<_>>());
        assert!(Splits::new(5, 2, 3, &rng).is_err());
    }

    #[test]
    fn summaries_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("s.jsonl");
        let recs = vec![SummaryRecord {
            summary: "a b .".into(),
            base_lp: -1.25,
            attr_lp: -0.5,
        }];
        write_summaries(&recs, &p).unwrap();
        assert_eq!(read_summaries(&p).unwrap(), recs);
        let line = fs::read_to_string(&p).unwrap();
        assert_eq!(line, "{\"summary\":\"a b .\",\"base_lp\":-1.25,\"attr_lp\":-0.5}\n");
    }
}
