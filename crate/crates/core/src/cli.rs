//! Command-line front end. Every command writes its outputs plus a manifest
//! naming the config hash, seed and input digests.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use crate::classifier::ClassifierModel;
use crate::corpus::{save_jsonl, DocumentCluster, Vocabulary};
use crate::decoding::BeamConfig;
use crate::error::{AcmError, Result};
use crate::experiment::config::{CorpusSource, ExperimentConfig};
use crate::experiment::manifest::{Manifest, RunLock};
use crate::experiment::pipeline::{
    decode_clusters, evaluate_texts, fit_classifier, fit_summarizer, load_corpus, read_summaries, run_ablation,
    run_pipeline, summary_records, write_json, write_summaries, write_text, Splits, ABLATION_VARIANTS,
};
use crate::numeric::Checkpoint;
use crate::summarizer::SummarizerModel;

#[derive(Debug, Parser)]
#[command(name = "acm", version, about = "Attribute-conditioned multi-document summarization")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args, Clone, Default)]
pub struct Common {
    /// Experiment config (TOML). Flags override its values.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
}

impl Common {
    fn load(&self) -> Result<ExperimentConfig> {
        let mut c = match &self.config {
            Some(p) => ExperimentConfig::load(p)?,
            None => ExperimentConfig::default(),
        };
        if let Some(s) = self.seed {
            c.seed = s;
        }
        Ok(c)
    }
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write the corpus (JSONL) and vocabulary described by the config.
    GenData {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Train the prefix attribute classifier.
    TrainClassifier {
        #[command(flatten)]
        common: Common,
        /// `synthetic` or a JSONL cluster file.
        #[arg(long, default_value = "synthetic")]
        corpus: String,
        #[arg(long)]
        vocab: Option<PathBuf>,
        #[arg(long)]
        epochs: Option<usize>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train the summarizer with the given conditioning weights.
    TrainSummarizer {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value = "synthetic")]
        corpus: String,
        #[arg(long)]
        vocab: Option<PathBuf>,
        #[arg(long)]
        classifier: Option<PathBuf>,
        #[arg(long)]
        attribute: Option<usize>,
        #[arg(long)]
        alpha1: Option<f64>,
        #[arg(long)]
        alpha2: Option<f64>,
        #[arg(long)]
        alpha3: Option<f64>,
        #[arg(long)]
        epochs: Option<usize>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Decode clusters with beam search and future discriminators.
    Summarize {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        classifier: Option<PathBuf>,
        #[arg(long)]
        attribute: Option<usize>,
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        beam: Option<usize>,
        #[arg(long)]
        shortlist: Option<usize>,
        #[arg(long)]
        alpha1: Option<f64>,
        #[arg(long)]
        length_penalty: Option<f64>,
        #[arg(long)]
        max_steps: Option<usize>,
        #[arg(long)]
        out: PathBuf,
    },
    /// ROUGE and attribute statistics for decoded summaries.
    Evaluate {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        candidates: PathBuf,
        /// Cluster JSONL whose `summary` fields are the references.
        #[arg(long)]
        references: PathBuf,
        #[arg(long)]
        classifier: Option<PathBuf>,
        #[arg(long)]
        attribute: Option<usize>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train and decode conditioning variants; report one row per variant.
    Ablate {
        #[command(flatten)]
        common: Common,
        /// Comma-separated subset of the variants; the baseline is always included.
        #[arg(long, value_delimiter = ',')]
        variants: Option<Vec<String>>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Full pipeline: data, classifier, summarizer, decoding, evaluation.
    Run {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

/// Parses `args`, runs the command and maps errors to a nonzero exit.
pub fn main_with_args<I, T>(args: I) -> ExitCode
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(2) } else { ExitCode::SUCCESS };
        }
    };
    match execute(cli.command) {
        Ok(msg) => {
            if !msg.is_empty() {
                println!("{msg}");
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

fn vocab_path(ckpt: &Path) -> PathBuf {
    let mut s = ckpt.as_os_str().to_os_string();
    s.push(".vocab");
    PathBuf::from(s)
}

fn manifest_path(out: &Path) -> PathBuf {
    let mut s = out.as_os_str().to_os_string();
    s.push(".manifest.json");
    PathBuf::from(s)
}

fn with_corpus(mut config: ExperimentConfig, corpus: &str, vocab: Option<PathBuf>) -> ExperimentConfig {
    if corpus != "synthetic" {
        config.corpus.source = CorpusSource::Jsonl;
        config.corpus.path = Some(PathBuf::from(corpus));
    }
    if vocab.is_some() {
        config.corpus.vocab = vocab;
    }
    config
}

fn parent(path: &Path) -> PathBuf {
    path.parent()
        .filter(|p| !p.as_os_str().is_empty())
        .map_or_else(|| PathBuf::from("."), Path::to_path_buf)
}

fn load_classifier(path: &Path) -> Result<ClassifierModel> {
    ClassifierModel::from_checkpoint(&Checkpoint::load(path)?)
}

fn load_summarizer(path: &Path) -> Result<SummarizerModel> {
    SummarizerModel::from_checkpoint(&Checkpoint::load(path)?)
}

fn load_clusters(path: &Path, vocab: &Vocabulary) -> Result<Vec<DocumentCluster>> {
    crate::corpus::load_jsonl(path, vocab)
}

pub fn execute(command: Command) -> Result<String> {
    match command {
        Command::GenData { common, out } => {
            let config = common.load()?;
            let dir = out.unwrap_or_else(|| config.output_dir.clone());
            let _lock = RunLock::acquire(&dir)?;
            let corpus = load_corpus(&config)?;
            let corpus_file = dir.join("corpus.jsonl");
            let vocab_file = dir.join("vocab.txt");
            save_jsonl(&corpus.raw, &corpus_file)?;
            corpus.vocab.save(&vocab_file)?;
            let mut m = Manifest::new(config.hash(), config.seed);
            if let Some(p) = &common.config {
                m.input(p)?;
            }
            m.output(&dir, &corpus_file)?;
            m.output(&dir, &vocab_file)?;
            m.save(dir.join("manifest.json"))?;
            Ok(format!("wrote {} clusters to {}", corpus.raw.len(), corpus_file.display()))
        }
        Command::TrainClassifier {
            common,
            corpus,
            vocab,
            epochs,
            out,
        } => {
            let mut config = with_corpus(common.load()?, &corpus, vocab);
            if let Some(e) = epochs {
                config.classifier_train.epochs = e;
            }
            config.validate()?;
            let data = load_corpus(&config)?;
            let (model, report) = fit_classifier(&config, &data)?;
            model.to_checkpoint().save(&out)?;
            data.vocab.save(vocab_path(&out))?;
            let mut m = Manifest::new(config.hash(), config.seed);
            record_inputs(&mut m, &common, &config)?;
            m.output(&parent(&out), &out)?;
            m.output(&parent(&out), &vocab_path(&out))?;
            m.save(manifest_path(&out))?;
            Ok(format!(
                "classifier accuracy train {:.4} val {:.4} test {:.4}",
                report.train_accuracy, report.val_accuracy, report.test_accuracy
            ))
        }
        Command::TrainSummarizer {
            common,
            corpus,
            vocab,
            classifier,
            attribute,
            alpha1,
            alpha2,
            alpha3,
            epochs,
            out,
        } => {
            // The summarizer must share the classifier's token ids.
            let vocab = vocab.or_else(|| classifier.as_deref().map(vocab_path));
            let mut config = with_corpus(common.load()?, &corpus, vocab);
            let w = &mut config.weights;
            for (slot, v) in [(&mut w.alpha1, alpha1), (&mut w.alpha2, alpha2), (&mut w.alpha3, alpha3)] {
                if let Some(v) = v {
                    *slot = v;
                }
            }
            if let Some(a) = attribute {
                config.attribute = a;
            }
            if let Some(e) = epochs {
                config.summarizer_train.epochs = e;
            }
            config.validate()?;
            let clf = classifier.as_deref().map(load_classifier).transpose()?;
            if clf.is_none() && config.weights.needs_classifier() {
                return Err(AcmError::Config(
                    "alpha2 or alpha3 is non-zero but no --classifier was given".into(),
                ));
            }
            let data = load_corpus(&config)?;
            if let Some(c) = &clf {
                check_vocab(c, &data.vocab)?;
            }
            let val = config.split.val_clusters.min(data.clusters.len().saturating_sub(1));
            let splits = Splits::new(data.clusters.len(), val, 0, &crate::numeric::RngState::new(config.seed))?;
            let (model, report) = fit_summarizer(&config, &data, &splits, clf.as_ref(), config.weights)?;
            model.to_checkpoint().save(&out)?;
            data.vocab.save(vocab_path(&out))?;
            let mut m = Manifest::new(config.hash(), config.seed);
            record_inputs(&mut m, &common, &config)?;
            if let Some(c) = &classifier {
                m.input(c)?;
            }
            m.output(&parent(&out), &out)?;
            m.output(&parent(&out), &vocab_path(&out))?;
            m.save(manifest_path(&out))?;
            Ok(format!(
                "summarizer teacher-forced accuracy {:.4}, best epoch {}",
                report.train_accuracy, report.best_epoch
            ))
        }
        Command::Summarize {
            common,
            model,
            classifier,
            attribute,
            input,
            beam,
            shortlist,
            alpha1,
            length_penalty,
            max_steps,
            out,
        } => {
            let mut config = common.load()?;
            let b: &mut BeamConfig = &mut config.beam;
            if let Some(v) = beam {
                b.beam_width = v;
            }
            if let Some(v) = shortlist {
                b.shortlist_k = v;
            }
            if let Some(v) = length_penalty {
                b.length_penalty = v;
            }
            if let Some(v) = max_steps {
                b.max_steps = v;
            }
            b.alpha1 = alpha1.unwrap_or(config.weights.alpha1);
            config.weights.alpha1 = b.alpha1;
            config.validate()?;
            let summarizer = load_summarizer(&model)?;
            let vocab = Vocabulary::load(vocab_path(&model))?;
            let clf = classifier.as_deref().map(load_classifier).transpose()?;
            let attribute = attribute.or(summarizer.attribute).unwrap_or(config.attribute);
            if let Some(c) = &clf {
                check_vocab(c, &vocab)?;
            }
            let clusters = load_clusters(&input, &vocab)?;
            let beams = decode_clusters(&summarizer, &clusters, clf.as_ref(), attribute, &config.beam)?;
            write_summaries(&summary_records(&beams, &vocab, config.beam.eos), &out)?;
            let mut m = Manifest::new(config.hash(), config.seed);
            if let Some(p) = &common.config {
                m.input(p)?;
            }
            m.input(&model)?;
            if let Some(c) = &classifier {
                m.input(c)?;
            }
            m.input(&input)?;
            m.output(&parent(&out), &out)?;
            m.save(manifest_path(&out))?;
            Ok(format!("wrote {} summaries to {}", beams.len(), out.display()))
        }
        Command::Evaluate {
            common,
            candidates,
            references,
            classifier,
            attribute,
            out,
        } => {
            let config = common.load()?;
            let cands: Vec<String> = read_summaries(&candidates)?.into_iter().map(|r| r.summary).collect();
            let refs: Vec<String> = crate::corpus::read_raw_jsonl(&references)?
                .into_iter()
                .map(|r| {
                    r.summary
                        .ok_or_else(|| AcmError::Data("reference cluster without a summary".into()))
                })
                .collect::<Result<_>>()?;
            let clf = match &classifier {
                Some(p) => Some((load_classifier(p)?, Vocabulary::load(vocab_path(p))?)),
                None => None,
            };
            let a = attribute.unwrap_or(config.attribute);
            let report = evaluate_texts(&cands, &refs, clf.as_ref().map(|(c, v)| (c, v, a)))?;
            write_json(&report, &out)?;
            let mut m = Manifest::new(config.hash(), config.seed);
            m.input(&candidates)?;
            m.input(&references)?;
            if let Some(c) = &classifier {
                m.input(c)?;
            }
            m.output(&parent(&out), &out)?;
            m.save(manifest_path(&out))?;
            Ok(report.to_table())
        }
        Command::Ablate { common, variants, out } => {
            let config = common.load()?;
            let mut names: Vec<String> = vec!["baseline".into()];
            let requested: Vec<String> = variants
                .unwrap_or_else(|| ABLATION_VARIANTS.iter().skip(1).map(|s| s.to_string()).collect());
            for v in requested {
                if !ABLATION_VARIANTS.contains(&v.as_str()) {
                    return Err(AcmError::Config(format!(
                        "unknown variant {v:?}; expected one of {}",
                        ABLATION_VARIANTS.join(", ")
                    )));
                }
                if !names.contains(&v) {
                    names.push(v);
                }
            }
            let dir = out.unwrap_or_else(|| config.output_dir.clone());
            let _lock = RunLock::acquire(&dir)?;
            let data = load_corpus(&config)?;
            let (clf, _) = fit_classifier(&config, &data)?;
            let refs: Vec<&str> = names.iter().map(String::as_str).collect();
            let report = run_ablation(&config, &data, &clf, &refs)?;
            let json = dir.join("ablation.json");
            let table = dir.join("ablation.txt");
            write_json(&report, &json)?;
            write_text(&report.to_table(), &table)?;
            let mut m = Manifest::new(config.hash(), config.seed);
            record_inputs(&mut m, &common, &config)?;
            m.output(&dir, &json)?;
            m.output(&dir, &table)?;
            m.save(dir.join("manifest.json"))?;
            Ok(report.to_table())
        }
        Command::Run { common, out } => {
            let mut config = common.load()?;
            if let Some(o) = out {
                config.output_dir = o;
            }
            let outcome = run_pipeline(&config)?;
            Ok(format!("{}\nrun directory {}", outcome.report.to_table(), outcome.dir.display()))
        }
    }
}

fn check_vocab(classifier: &ClassifierModel, vocab: &Vocabulary) -> Result<()> {
    if classifier.config.vocab_size != vocab.len() {
        return Err(AcmError::Config(format!(
            "classifier vocabulary has {} tokens but the corpus vocabulary has {}; pass the classifier's .vocab file",
            classifier.config.vocab_size,
            vocab.len()
        )));
    }
    Ok(())
}

fn record_inputs(m: &mut Manifest, common: &Common, config: &ExperimentConfig) -> Result<()> {
    if let Some(p) = &common.config {
        m.input(p)?;
    }
    if let Some(p) = &config.corpus.path {
        m.input(p)?;
    }
    if let Some(p) = &config.corpus.vocab {
        m.input(p)?;
    }
    Ok(())
}
