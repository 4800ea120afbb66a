use serde::{Deserialize, Serialize};

use super::tokenize::tokenize;
use super::vocab::{TokenId, Vocabulary, DOCSEP};
use crate::error::{AcmError, Result};

/// Separator MultiNews uses between source documents in one string.
pub const MULTINEWS_SEPARATOR: &str = "|||||";

/// A cluster as stored in JSONL: raw text, paragraphs separated by blank
/// lines inside each document.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RawCluster {
    pub documents: Vec<String>,
    #[serde(default)]
    pub summary: Option<String>,
    /// Per document, one attribute class per paragraph.
    #[serde(default)]
    pub labels: Option<Vec<Vec<usize>>>,
    /// Attribute class the reference summary was written from, when known.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub summary_label: Option<usize>,
}

/// Splits a document into paragraphs on blank lines.
pub fn split_paragraphs(doc: &str) -> Vec<&str> {
    let mut out = Vec::new();
    let mut start: Option<usize> = None;
    let mut last_end = 0;
    let mut offset = 0;
    for line in doc.split_inclusive('\n') {
        let blank = line.trim().is_empty();
        if blank {
            if let Some(s) = start.take() {
                out.push(doc[s..last_end].trim());
            }
        } else {
            if start.is_none() {
                start = Some(offset);
            }
            last_end = offset + line.len();
        }
        offset += line.len();
    }
    if let Some(s) = start {
        out.push(doc[s..last_end].trim());
    }
    out
}

/// Splits a MultiNews source string into its documents.
pub fn split_multinews(source: &str) -> Vec<String> {
    source
        .split(MULTINEWS_SEPARATOR)
        .map(str::trim)
        .filter(|d| !d.is_empty())
        .map(str::to_string)
        .collect()
}

/// Location of one paragraph: `tokens[start..end]` of document `doc`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ParagraphSpan {
    pub doc: usize,
    pub start: usize,
    pub end: usize,
}

/// The tokenized multi-document summarization unit.
#[derive(Clone, Debug, PartialEq)]
pub struct DocumentCluster {
    pub documents: Vec<Vec<TokenId>>,
    pub paragraphs: Vec<ParagraphSpan>,
    pub reference_summary: Option<Vec<TokenId>>,
    /// Ground-truth class per paragraph, aligned with `paragraphs`.
    pub paragraph_labels: Option<Vec<usize>>,
    pub summary_label: Option<usize>,
}

impl DocumentCluster {
    pub fn from_raw(raw: &RawCluster, vocab: &Vocabulary) -> Result<Self> {
        let mut documents = Vec::with_capacity(raw.documents.len());
        let mut paragraphs = Vec::new();
        let mut per_doc = Vec::with_capacity(raw.documents.len());
        for (d, text) in raw.documents.iter().enumerate() {
            let mut tokens = Vec::new();
            let paras = split_paragraphs(text);
            per_doc.push(paras.len());
            for p in paras {
                let start = tokens.len();
                tokens.extend(tokenize(p, vocab));
                paragraphs.push(ParagraphSpan {
                    doc: d,
                    start,
                    end: tokens.len(),
                });
            }
            documents.push(tokens);
        }
        let paragraph_labels = match &raw.labels {
            None => None,
            Some(labels) => {
                if labels.len() != per_doc.len()
                    || labels.iter().zip(&per_doc).any(|(l, &n)| l.len() != n)
                {
                    return Err(AcmError::Data(format!(
                        "labels shape {:?} does not match paragraphs per document {per_doc:?}",
                        labels.iter().map(Vec::len).collect::<Vec<_>>()
                    )));
                }
                Some(labels.iter().flatten().copied().collect())
            }
        };
        Ok(Self {
            documents,
            paragraphs,
            reference_summary: raw.summary.as_deref().map(|s| tokenize(s, vocab)),
            paragraph_labels,
            summary_label: raw.summary_label,
        })
    }

    /// Paragraph count `L`.
    pub fn num_paragraphs(&self) -> usize {
        self.paragraphs.len()
    }

    pub fn paragraph_tokens(&self, i: usize) -> Result<&[TokenId]> {
        let span = self.paragraphs.get(i).ok_or_else(|| {
            AcmError::Index(format!(
                "paragraph {i} of a cluster with {} paragraphs",
                self.paragraphs.len()
            ))
        })?;
        Ok(&self.documents[span.doc][span.start..span.end])
    }

    /// Offset of each document inside the concatenated input.
    fn doc_offsets(&self) -> Vec<usize> {
        let mut offsets = Vec::with_capacity(self.documents.len());
        let mut pos = 0;
        for d in &self.documents {
            offsets.push(pos);
            pos += d.len() + 1;
        }
        offsets
    }

    /// Documents joined by `DOCSEP`, truncated to `max_tokens`.
    pub fn model_input(&self, max_tokens: usize) -> Vec<TokenId> {
        let mut out = Vec::new();
        for (i, d) in self.documents.iter().enumerate() {
            if i > 0 {
                out.push(DOCSEP);
            }
            out.extend_from_slice(d);
        }
        out.truncate(max_tokens);
        out
    }

    /// Paragraph spans in concatenated-input coordinates that survive
    /// truncation to `max_tokens`, clipped at the boundary. Returns
    /// `(paragraph index, start, end)`.
    pub fn input_spans(&self, max_tokens: usize) -> Vec<(usize, usize, usize)> {
        let offsets = self.doc_offsets();
        self.paragraphs
            .iter()
            .enumerate()
            .filter_map(|(i, p)| {
                let start = offsets[p.doc] + p.start;
                let end = (offsets[p.doc] + p.end).min(max_tokens);
                (start < max_tokens && (start < end || p.start == p.end)).then_some((i, start, end.max(start)))
            })
            .collect()
    }

    /// Token lists of the paragraphs visible within `max_tokens` of input.
    pub fn visible_paragraphs(&self, max_tokens: usize) -> Vec<Vec<TokenId>> {
        let input = self.model_input(max_tokens);
        self.input_spans(max_tokens)
            .into_iter()
            .map(|(_, s, e)| input[s..e].to_vec())
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn vocab() -> Vocabulary {
        Vocabulary::from_tokens(["a", "b", "c", "d", "."]).unwrap()
    }

    #[test]
    fn paragraphs_split_on_blank_lines() {
        assert_eq!(split_paragraphs("a b.\nc.\n\n  \nd.\n"), vec!["a b.\nc.", "d."]);
        assert!(split_paragraphs("\n\n").is_empty());
    }

    #[test]
    fn spans_and_input() {
        let raw = RawCluster {
            documents: vec!["a b.\n\nc.".into(), "d.".into()],
            summary: Some("a.".into()),
            labels: Some(vec![vec![0, 1], vec![1]]),
            summary_label: None,
        };
        let c = DocumentCluster::from_raw(&raw, &vocab()).unwrap();
        assert_eq!(c.num_paragraphs(), 3);
        assert_eq!(c.paragraph_tokens(1).unwrap(), &[7, 9]);
        assert_eq!(c.model_input(100), vec![5, 6, 9, 7, 9, DOCSEP, 8, 9]);
        assert_eq!(c.paragraph_labels, Some(vec![0, 1, 1]));
        // Truncation clips the second paragraph and drops the third.
        assert_eq!(c.input_spans(4), vec![(0, 0, 3), (1, 3, 4)]);
        assert_eq!(c.visible_paragraphs(4), vec![vec![5, 6, 9], vec![7]]);
        assert!(c.paragraph_tokens(3).is_err());
    }

    #[test]
    fn label_shape_is_checked() {
        let raw = RawCluster {
            documents: vec!["a.\n\nb.".into()],
            summary: None,
            labels: Some(vec![vec![0]]),
            summary_label: None,
        };
        assert!(matches!(
            DocumentCluster::from_raw(&raw, &vocab()),
            Err(AcmError::Data(_))
        ));
    }

    #[test]
    fn multinews_split() {
        let docs = split_multinews("first doc ||||| second doc |||||  ");
        assert_eq!(docs, vec!["first doc", "second doc"]);
    }
}
