//! Perplexity and phrase-prediction measurements on masked validation data.

use std::io::Write;

use serde::{Deserialize, Serialize};

use super::model::Generator;
use crate::error::{Error, Result};
use crate::linalg::{logsumexp, Matrix};
use crate::masking::{MaskedExample, SpanKind};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PerplexityReport {
    /// `exp` of the mean negative log-likelihood over all masked tokens.
    pub token_level: f64,
    /// Mean over sentences of each sentence's own perplexity.
    pub sentence_average: f64,
    pub mean_nll: f64,
    pub masked_tokens: usize,
    pub sentences: usize,
}

/// One masked position of a logit dump.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DumpRecord {
    pub example: usize,
    pub position: usize,
    pub label: usize,
    pub log_probs: Vec<f64>,
}

fn masked_labels(ex: &MaskedExample) -> (Vec<usize>, Vec<usize>) {
    let positions = ex.masked_positions();
    let labels = positions.iter().map(|&p| ex.labels[p] as usize).collect();
    (positions, labels)
}

fn logits_for(generator: &Generator, ex: &MaskedExample) -> Result<(Vec<usize>, Vec<usize>, Matrix)> {
    let (positions, labels) = masked_labels(ex);
    if positions.is_empty() {
        return Ok((positions, labels, Matrix::zeros(0, generator.vocab_size())));
    }
    let (h, _) = generator.forward(&ex.input_ids)?;
    Ok((positions.clone(), labels, generator.logits(&h, &positions)))
}

/// Perplexity of the generator on masked examples, optionally writing every
/// masked position's log-probabilities as JSON-lines.
pub fn perplexity(generator: &Generator, examples: &[MaskedExample], mut dump: Option<&mut dyn Write>) -> Result<PerplexityReport> {
    let mut total_nll = 0.0;
    let mut tokens = 0usize;
    let mut sentence_sum = 0.0;
    let mut sentences = 0usize;
    for (i, ex) in examples.iter().enumerate() {
        let (positions, labels, logits) = logits_for(generator, ex)?;
        if positions.is_empty() {
            continue;
        }
        let mut nll = 0.0;
        for (r, (&pos, &label)) in positions.iter().zip(&labels).enumerate() {
            let row = logits.row(r);
            let lse = logsumexp(row);
            nll += lse - row[label];
            if let Some(w) = dump.as_deref_mut() {
                let rec = DumpRecord {
                    example: i,
                    position: pos,
                    label,
                    log_probs: row.iter().map(|z| z - lse).collect(),
                };
                let line = serde_json::to_string(&rec)?;
                writeln!(w, "{line}").map_err(|e| Error::io("logit dump", e))?;
            }
        }
        total_nll += nll;
        tokens += positions.len();
        sentence_sum += (nll / positions.len() as f64).exp();
        sentences += 1;
    }
    if tokens == 0 {
        return Err(Error::contract("no masked tokens: perplexity is undefined"));
    }
    let mean_nll = total_nll / tokens as f64;
    Ok(PerplexityReport {
        token_level: mean_nll.exp(),
        sentence_average: sentence_sum / sentences as f64,
        mean_nll,
        masked_tokens: tokens,
        sentences,
    })
}

/// Mean generator probability of the phrase id at collapsed positions;
/// `None` when there are none.
pub fn phrase_probability(generator: &Generator, examples: &[MaskedExample]) -> Result<Option<f64>> {
    let mut sum = 0.0;
    let mut count = 0usize;
    for ex in examples {
        let positions: Vec<usize> = ex
            .spans
            .iter()
            .filter(|s| s.kind == SpanKind::FinancialPhrase)
            .map(|s| s.start)
            .collect();
        if positions.is_empty() {
            continue;
        }
        let (h, _) = generator.forward(&ex.input_ids)?;
        let logits = generator.logits(&h, &positions);
        for (r, &p) in positions.iter().enumerate() {
            let row = logits.row(r);
            sum += (row[ex.labels[p] as usize] - logsumexp(row)).exp();
            count += 1;
        }
    }
    Ok((count > 0).then(|| sum / count as f64))
}
