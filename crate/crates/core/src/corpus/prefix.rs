use super::cluster::DocumentCluster;
use super::tokenize::is_sentence_end;
use super::vocab::{TokenId, Vocabulary};

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct LabeledPrefix {
    pub tokens: Vec<TokenId>,
    pub label: usize,
}

/// Every prefix `sentence[..k]`, `k = 1..=n`, carrying the sentence label.
pub fn expand_prefixes(sentence: &[TokenId], label: usize) -> Vec<LabeledPrefix> {
    (1..=sentence.len())
        .map(|k| LabeledPrefix {
            tokens: sentence[..k].to_vec(),
            label,
        })
        .collect()
}

/// Labeled sentences from every paragraph of clusters carrying ground-truth
/// paragraph labels.
pub fn labeled_sentences(clusters: &[DocumentCluster], vocab: &Vocabulary) -> Vec<LabeledPrefix> {
    let mut out = Vec::new();
    for c in clusters {
        let Some(labels) = &c.paragraph_labels else {
            continue;
        };
        for (i, &label) in labels.iter().enumerate() {
            let tokens = c.paragraph_tokens(i).expect("label per paragraph");
            let mut cur = Vec::new();
            for &t in tokens {
                cur.push(t);
                if is_sentence_end(vocab.token(t)) {
                    out.push(LabeledPrefix {
                        tokens: std::mem::take(&mut cur),
                        label,
                    });
                }
            }
            if !cur.is_empty() {
                out.push(LabeledPrefix { tokens: cur, label });
            }
        }
    }
    out
}

/// Prefix-expanded classifier training set.
pub fn expand_all(sentences: &[LabeledPrefix]) -> Vec<LabeledPrefix> {
    sentences
        .iter()
        .flat_map(|s| expand_prefixes(&s.tokens, s.label))
        .collect()
}
