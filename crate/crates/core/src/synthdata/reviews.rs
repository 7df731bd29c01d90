use std::fmt;
use std::path::Path;

use crate::error::{Error, Result};
use crate::rng::SplitMix64;

pub const POSITIVE_WORDS: [&str; 8] = [
    "great", "excellent", "wonderful", "perfect", "amazing", "superb", "lovely", "fantastic",
];
pub const NEGATIVE_WORDS: [&str; 8] = [
    "terrible", "awful", "horrible", "useless", "broken", "dreadful", "poor", "flimsy",
];

const PRODUCTS: [&str; 12] = [
    "blender", "kettle", "toaster", "lamp", "chair", "headset", "backpack", "charger", "mixer",
    "camera", "keyboard", "jacket",
];
const INTENSIFIERS: [&str; 6] = ["really", "very", "truly", "quite", "so", "extremely"];

/// Short sentence frames shared by both polarities: `{p}` product, `{i}`
/// intensifier, `{a}` polarity word.
const FRAMES: [&str; 5] = ["{a} {p}.", "the {p} is {a}.", "{i} {a}.", "it is {a}.", "{a} value."];

/// Polarity-specific frames with no lexicon words. Together with the short
/// frames they make every sentence depend on the review's polarity, so a
/// language model gains from remembering it.
const POSITIVE_FRAMES: [&str; 4] = ["love it.", "five stars.", "buy it.", "works well."];
const NEGATIVE_FRAMES: [&str; 4] = ["hate it.", "one star.", "avoid it.", "fell apart."];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Sentiment {
    Positive,
    Negative,
}

impl Sentiment {
    pub fn sign(self) -> i64 {
        match self {
            Sentiment::Positive => 1,
            Sentiment::Negative => -1,
        }
    }

    pub fn is_positive(self) -> bool {
        self == Sentiment::Positive
    }
}

impl fmt::Display for Sentiment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(if self.is_positive() { "+" } else { "-" })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Review {
    pub text: String,
    pub sentiment: Sentiment,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Lexicon {
    pub positive: Vec<String>,
    pub negative: Vec<String>,
}

impl Default for Lexicon {
    fn default() -> Self {
        Self {
            positive: POSITIVE_WORDS.iter().map(|s| s.to_string()).collect(),
            negative: NEGATIVE_WORDS.iter().map(|s| s.to_string()).collect(),
        }
    }
}

impl Lexicon {
    /// `(positive hits, negative hits)` over alphabetic word tokens.
    pub fn counts(&self, text: &str) -> (usize, usize) {
        let mut pos = 0;
        let mut neg = 0;
        for word in text.split(|c: char| !c.is_ascii_alphabetic()) {
            if word.is_empty() {
                continue;
            }
            if self.positive.iter().any(|w| w == word) {
                pos += 1;
            } else if self.negative.iter().any(|w| w == word) {
                neg += 1;
            }
        }
        (pos, neg)
    }

    /// Positive-word count minus negative-word count.
    pub fn polarity(&self, text: &str) -> i64 {
        let (p, n) = self.counts(text);
        p as i64 - n as i64
    }

    /// Label implied by the lexicon, if the text has any polarity words.
    pub fn label(&self, text: &str) -> Option<Sentiment> {
        match self.polarity(text) {
            0 => None,
            s if s > 0 => Some(Sentiment::Positive),
            _ => Some(Sentiment::Negative),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ReviewCorpus {
    pub docs: Vec<Review>,
    pub lexicon: Lexicon,
    pub seed: u64,
}

pub const MIN_REVIEW_CHARS: usize = 40;
pub const MAX_REVIEW_CHARS: usize = 200;

fn sentence(rng: &mut SplitMix64, sentiment: Sentiment, words: &[&str], shared: bool) -> String {
    let frame = if shared || rng.bernoulli(0.5) {
        FRAMES[rng.below(FRAMES.len())]
    } else if sentiment.is_positive() {
        POSITIVE_FRAMES[rng.below(POSITIVE_FRAMES.len())]
    } else {
        NEGATIVE_FRAMES[rng.below(NEGATIVE_FRAMES.len())]
    };
    let product = PRODUCTS[rng.below(PRODUCTS.len())];
    let intensifier = INTENSIFIERS[rng.below(INTENSIFIERS.len())];
    let adjective = words[rng.below(words.len())];
    frame
        .replace("{p}", product)
        .replace("{i}", intensifier)
        .replace("{a}", adjective)
}

fn review_text(rng: &mut SplitMix64, sentiment: Sentiment) -> String {
    let words: &[&str] = if sentiment.is_positive() {
        &POSITIVE_WORDS
    } else {
        &NEGATIVE_WORDS
    };
    loop {
        // The opening sentence always carries a lexicon word.
        let mut text = sentence(rng, sentiment, words, true);
        let target = rng.below(5) + 4;
        for _ in 1..target {
            let next = sentence(rng, sentiment, words, false);
            if text.len() + 1 + next.len() > MAX_REVIEW_CHARS {
                break;
            }
            text.push(' ');
            text.push_str(&next);
        }
        if (MIN_REVIEW_CHARS..=MAX_REVIEW_CHARS).contains(&text.len()) {
            return text;
        }
    }
}

/// Balanced templated reviews; even indices positive, odd negative.
pub fn gen_reviews(n_docs: usize, seed: u64) -> Result<ReviewCorpus> {
    if n_docs < 2 {
        return Err(Error::invalid("need at least two reviews"));
    }
    let mut rng = SplitMix64::new(seed);
    let docs = (0..n_docs)
        .map(|i| {
            let sentiment = if i % 2 == 0 {
                Sentiment::Positive
            } else {
                Sentiment::Negative
            };
            Review {
                text: review_text(&mut rng, sentiment),
                sentiment,
            }
        })
        .collect();
    Ok(ReviewCorpus {
        docs,
        lexicon: Lexicon::default(),
        seed,
    })
}

impl ReviewCorpus {
    /// One document per line, prefixed `+\t` or `-\t`.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for d in &self.docs {
            out.push_str(&format!("{}\t{}\n", d.sentiment, d.text));
        }
        out
    }

    /// Parse the line format written by [`ReviewCorpus::to_text`]. The
    /// lexicon is the built-in one.
    pub fn from_text(text: &str, seed: u64) -> Result<Self> {
        let mut docs = Vec::new();
        let mut offset = 0;
        for line in text.lines() {
            let sentiment = match line.get(..2) {
                Some("+\t") => Sentiment::Positive,
                Some("-\t") => Sentiment::Negative,
                _ => {
                    return Err(Error::Format {
                        format: "review corpus",
                        offset,
                        detail: "line must start with `+\\t` or `-\\t`".into(),
                    })
                }
            };
            docs.push(Review {
                text: line[2..].to_string(),
                sentiment,
            });
            offset += line.len() + 1;
        }
        Ok(Self {
            docs,
            lexicon: Lexicon::default(),
            seed,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_text(&text, 0)
    }
}
