//! Corpus readers and the synthetic planted-phrase corpus.

use std::collections::BTreeSet;
use std::path::Path;

use rand::seq::IndexedRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::lexicon::Lexicon;
use crate::rng::stream_rng;
use crate::tokenizer::{TokenId, Tokenizer};

/// One corpus line: raw text, or pre-tokenized ids.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Document {
    Text(String),
    Ids(Vec<TokenId>),
}

impl Document {
    /// Token ids wrapped in `[CLS] … [SEP]` for text; ids pass through.
    pub fn to_ids(&self, tokenizer: &Tokenizer, max_len: usize) -> Vec<TokenId> {
        match self {
            Document::Text(t) => tokenizer.encode(t, max_len),
            Document::Ids(ids) => ids.clone(),
        }
    }
}

#[derive(Deserialize)]
struct JsonDoc {
    text: Option<String>,
    ids: Option<Vec<TokenId>>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabeledExample {
    /// Echoed into predictions; the line index is used when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub id: Option<serde_json::Value>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub text: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ids: Option<Vec<TokenId>>,
    pub label: usize,
}

impl LabeledExample {
    pub fn to_ids(&self, tokenizer: &Tokenizer, max_len: usize) -> Vec<TokenId> {
        match (&self.ids, &self.text) {
            (Some(ids), _) => ids.clone(),
            (None, Some(t)) => tokenizer.encode(t, max_len),
            (None, None) => tokenizer.encode("", max_len),
        }
    }
}

fn read_text(path: &Path) -> Result<String> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    String::from_utf8(bytes).map_err(|e| Error::format("corpus", path, e.to_string()))
}

/// JSON-lines with a `text` or `ids` field, or plain text with one document
/// per line. The format is decided by the first non-empty line.
pub fn parse_corpus(text: &str, path: &Path) -> Result<Vec<Document>> {
    let mut lines = text.lines().map(str::trim).filter(|l| !l.is_empty()).peekable();
    let json = lines.peek().is_some_and(|l| l.starts_with('{'));
    let mut docs = Vec::new();
    for (i, line) in lines.enumerate() {
        if !json {
            docs.push(Document::Text(line.to_string()));
            continue;
        }
        let bad = |detail: String| Error::format("corpus", path, format!("record {}: {detail}", i + 1));
        let doc: JsonDoc = serde_json::from_str(line).map_err(|e| bad(e.to_string()))?;
        docs.push(match (doc.ids, doc.text) {
            (Some(ids), _) => Document::Ids(ids),
            (None, Some(t)) => Document::Text(t),
            (None, None) => return Err(bad("needs a \"text\" or \"ids\" field".into())),
        });
    }
    Ok(docs)
}

pub fn read_corpus(path: impl AsRef<Path>) -> Result<Vec<Document>> {
    let path = path.as_ref();
    parse_corpus(&read_text(path)?, path)
}

pub fn read_labeled(path: impl AsRef<Path>) -> Result<Vec<LabeledExample>> {
    let path = path.as_ref();
    let text = read_text(path)?;
    let mut out = Vec::new();
    for (i, line) in text.lines().filter(|l| !l.trim().is_empty()).enumerate() {
        let ex: LabeledExample = serde_json::from_str(line)
            .map_err(|e| Error::format("labeled dataset", path, format!("record {}: {e}", i + 1)))?;
        out.push(ex);
    }
    Ok(out)
}

pub fn write_lines(path: impl AsRef<Path>, lines: &[String]) -> Result<()> {
    let path = path.as_ref();
    let mut body = lines.join("\n");
    if !body.is_empty() {
        body.push('\n');
    }
    std::fs::write(path, body).map_err(|e| Error::io(path, e))
}

/// Parameters of the synthetic corpus.
///
/// Each document has one topic. Topics own a disjoint slice of the filler
/// words, joined by a sparse first-order Markov chain (`successors` likely
/// followers per word), and one planted phrase, which always follows its
/// marker word. Financial words are shared and sprinkled in at
/// `financial_rate`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthConfig {
    pub train_docs: usize,
    pub valid_docs: usize,
    pub min_len: usize,
    pub max_len: usize,
    pub filler_words: usize,
    pub successors: usize,
    pub financial_words: usize,
    /// Number of topics, each with its own planted phrase.
    pub phrases: usize,
    pub financial_rate: f64,
    pub phrase_rate: f64,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            train_docs: 200,
            valid_docs: 40,
            min_len: 30,
            max_len: 60,
            filler_words: 60,
            successors: 3,
            financial_words: 12,
            phrases: 4,
            financial_rate: 0.12,
            phrase_rate: 0.16,
            seed: 7,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SynthCorpus {
    pub train: Vec<String>,
    pub valid: Vec<String>,
    /// Topic of each training document, usable as a class label.
    pub train_topics: Vec<usize>,
    pub valid_topics: Vec<usize>,
    /// Lexicon lines: single financial words, then the planted phrases.
    pub dictionary: Vec<String>,
    pub phrases: Vec<String>,
    pub markers: Vec<String>,
    pub tokenizer: Tokenizer,
}

const FINANCIAL: &[&str] = &[
    "revenue", "earnings", "dividend", "equity", "liquidity", "bond", "yield", "hedge", "leverage",
    "inflation", "asset", "liability", "audit", "margin", "capital", "credit", "debt", "futures",
    "option", "portfolio", "security", "stock", "tax", "volatility",
];

const PHRASES: &[&str] = &[
    "interest rate", "cash flow", "balance sheet", "call option", "net income", "market cap",
    "book value", "credit spread",
];

/// Generate the corpus. Words are drawn from fixed name lists so the
/// vocabulary is stable across seeds; only the text varies.
pub fn synth_corpus(config: &SynthConfig) -> Result<SynthCorpus> {
    if config.financial_words > FINANCIAL.len() || config.phrases > PHRASES.len() || config.phrases == 0 {
        return Err(Error::Config(format!(
            "need 1 to {} phrases and at most {} financial words",
            PHRASES.len(),
            FINANCIAL.len()
        )));
    }
    let per_topic = config.filler_words / config.phrases;
    if config.min_len < 3 || config.min_len > config.max_len || config.successors == 0 || per_topic < config.successors {
        return Err(Error::Config("invalid synthetic corpus sizes".into()));
    }
    let mut rng = stream_rng(config.seed, "synth");
    let filler: Vec<String> = (0..config.filler_words).map(|i| format!("w{i}")).collect();
    let financial: Vec<&str> = FINANCIAL[..config.financial_words].to_vec();
    let phrases: Vec<String> = PHRASES[..config.phrases].iter().map(|s| s.to_string()).collect();
    let markers: Vec<String> = (0..config.phrases).map(|i| format!("m{i}")).collect();
    // topic k owns filler words [k * per_topic, (k + 1) * per_topic)
    let next: Vec<Vec<usize>> = (0..per_topic * config.phrases)
        .map(|w| {
            let base = w / per_topic * per_topic;
            (0..config.successors).map(|_| base + rng.random_range(0..per_topic)).collect()
        })
        .collect();

    let doc = |rng: &mut crate::rng::ChaCha8Rng| {
        let topic = rng.random_range(0..config.phrases);
        let len = rng.random_range(config.min_len..=config.max_len);
        let mut words: Vec<String> = Vec::with_capacity(len + 2);
        let mut state = topic * per_topic + rng.random_range(0..per_topic);
        while words.len() < len {
            let u: f64 = rng.random();
            if u < config.phrase_rate {
                words.push(markers[topic].clone());
                words.extend(phrases[topic].split(' ').map(str::to_string));
            } else if !financial.is_empty() && u < config.phrase_rate + config.financial_rate {
                words.push(financial.choose(rng).unwrap().to_string());
            } else {
                state = *next[state].choose(rng).unwrap();
                words.push(filler[state].clone());
            }
        }
        (words.join(" "), topic)
    };
    let (train, train_topics): (Vec<String>, Vec<usize>) = (0..config.train_docs).map(|_| doc(&mut rng)).unzip();
    let (valid, valid_topics): (Vec<String>, Vec<usize>) = (0..config.valid_docs).map(|_| doc(&mut rng)).unzip();

    let mut words: BTreeSet<String> = filler.iter().cloned().collect();
    words.extend(financial.iter().map(|s| s.to_string()));
    words.extend(markers.iter().cloned());
    for p in &phrases {
        words.extend(p.split(' ').map(str::to_string));
    }
    let tokenizer = Tokenizer::whole_word_vocab(words.iter().map(String::as_str));
    let mut dictionary: Vec<String> = financial.iter().map(|s| s.to_string()).collect();
    dictionary.extend(phrases.iter().cloned());
    Ok(SynthCorpus {
        train,
        valid,
        train_topics,
        valid_topics,
        dictionary,
        phrases,
        markers,
        tokenizer,
    })
}

impl SynthCorpus {
    /// The dictionary as a lexicon over the corpus tokenizer.
    pub fn lexicon(&self) -> Result<Lexicon> {
        let digest = hex::encode(Sha256::digest(self.dictionary.join("\n").as_bytes()));
        Lexicon::from_surfaces(self.dictionary.iter(), &self.tokenizer, digest)
    }

    pub fn encode(&self, docs: &[String], max_len: usize) -> Vec<Vec<TokenId>> {
        docs.iter().map(|d| self.tokenizer.encode(d, max_len)).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_phrase_follows_its_marker() {
        let c = synth_corpus(&SynthConfig::default()).unwrap();
        for doc in c.train.iter().chain(&c.valid) {
            let w: Vec<&str> = doc.split(' ').collect();
            for (i, word) in w.iter().enumerate() {
                if let Some(k) = c.markers.iter().position(|m| m == word) {
                    let phrase = w[i + 1..i + 3].join(" ");
                    assert_eq!(phrase, c.phrases[k]);
                }
            }
        }
    }

    #[test]
    fn tokenizer_covers_all_words() {
        let c = synth_corpus(&SynthConfig::default()).unwrap();
        let unk = c.tokenizer.special().unk;
        for doc in &c.train {
            assert!(!c.tokenizer.encode_words(doc).contains(&unk));
        }
    }

    #[test]
    fn parse_both_formats() {
        let p = Path::new("x");
        let docs = parse_corpus("{\"text\": \"a b\"}\n\n{\"ids\": [2, 7, 3]}\n", p).unwrap();
        assert_eq!(docs, vec![Document::Text("a b".into()), Document::Ids(vec![2, 7, 3])]);
        let docs = parse_corpus("one doc\nsecond doc\n", p).unwrap();
        assert_eq!(docs.len(), 2);
        assert!(parse_corpus("{\"other\": 1}", p).is_err());
    }
}
