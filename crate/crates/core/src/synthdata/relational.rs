use std::collections::BTreeSet;
use std::path::Path;

use crate::error::{Error, Result};
use crate::rng::SplitMix64;

/// Modifiers for base words and their parallel counterparts for related
/// words (`adult` ↔ `baby`, ...). Template `k` of both families uses the
/// same frame with the modifier at index `k`.
const BASE_MODIFIERS: [&str; 5] = ["adult", "grown", "big", "mature", "elder"];
const RELATED_MODIFIERS: [&str; 5] = ["baby", "young", "little", "tiny", "newborn"];

/// `{m}` modifier, `{w}` pair word, `{a}` pair attribute.
const FRAMES: [&str; 8] = [
    "the {m} {w} {a} near the barn",
    "a {m} {w} {a} in the field",
    "that {m} {w} {a} every morning",
    "one {m} {w} {a} by the river",
    "our {m} {w} {a} at night",
    "this {m} {w} {a} after lunch",
    "every {m} {w} {a} in spring",
    "my {m} {w} {a} all day",
];

/// Attribute words; pair `k` owns entries `2k` and `2k + 1`.
const ATTRIBUTES: [&str; 20] = [
    "barks", "fetches", "meows", "purrs", "moos", "grazes", "neighs", "gallops", "bleats",
    "shears", "quacks", "paddles", "oinks", "wallows", "clucks", "pecks", "hoots", "perches",
    "hisses", "slithers",
];

pub const MAX_TEMPLATES: usize = BASE_MODIFIERS.len() * FRAMES.len();
pub const MAX_PAIRS: usize = ATTRIBUTES.len() / 2;

pub const DEFAULT_PAIRS: [(&str, &str); 4] = [
    ("dog", "puppy"),
    ("cat", "kitten"),
    ("cow", "calf"),
    ("horse", "foal"),
];

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RelationalCorpus {
    pub sentences: Vec<String>,
    pub pairs: Vec<(String, String)>,
    pub seed: u64,
}

/// Every word the templates themselves can contribute.
pub fn template_words() -> BTreeSet<&'static str> {
    FRAMES
        .iter()
        .flat_map(|f| f.split_whitespace())
        .filter(|w| !w.starts_with('{'))
        .chain(BASE_MODIFIERS)
        .chain(RELATED_MODIFIERS)
        .chain(ATTRIBUTES)
        .collect()
}

/// Sentences where base words share one template family, related words the
/// parallel family, and both words of a pair share attribute words.
pub fn gen_relational(
    pairs: &[(&str, &str)],
    templates_per_slot: usize,
    seed: u64,
) -> Result<RelationalCorpus> {
    if pairs.len() < 2 {
        return Err(Error::invalid("need at least two relational pairs"));
    }
    if pairs.len() > MAX_PAIRS {
        return Err(Error::invalid(format!("at most {MAX_PAIRS} pairs supported")));
    }
    if !(5..=MAX_TEMPLATES).contains(&templates_per_slot) {
        return Err(Error::invalid(format!(
            "templates_per_slot must be in 5..={MAX_TEMPLATES}, got {templates_per_slot}"
        )));
    }
    let reserved = template_words();
    let mut seen = BTreeSet::new();
    for &(a, b) in pairs {
        for w in [a, b] {
            if w.is_empty() || w.contains(char::is_whitespace) {
                return Err(Error::invalid(format!("pair word `{w}` must be a single token")));
            }
            if reserved.contains(w) || !seen.insert(w) {
                return Err(Error::invalid(format!("duplicate word `{w}`")));
            }
        }
    }

    let mut rng = SplitMix64::new(seed);
    let mut templates: Vec<(usize, usize)> = (0..BASE_MODIFIERS.len())
        .flat_map(|m| (0..FRAMES.len()).map(move |f| (m, f)))
        .collect();
    rng.shuffle(&mut templates);
    templates.truncate(templates_per_slot);

    let mut sentences = Vec::with_capacity(pairs.len() * 2 * templates_per_slot);
    for (k, &(base, related)) in pairs.iter().enumerate() {
        let attrs = [ATTRIBUTES[2 * k], ATTRIBUTES[2 * k + 1]];
        for (word, modifiers) in [(base, &BASE_MODIFIERS), (related, &RELATED_MODIFIERS)] {
            for &(m, f) in &templates {
                let attr = attrs[rng.below(2)];
                sentences.push(
                    FRAMES[f]
                        .replace("{m}", modifiers[m])
                        .replace("{w}", word)
                        .replace("{a}", attr),
                );
            }
        }
    }
    rng.shuffle(&mut sentences);
    Ok(RelationalCorpus {
        sentences,
        pairs: pairs
            .iter()
            .map(|&(a, b)| (a.to_string(), b.to_string()))
            .collect(),
        seed,
    })
}

impl RelationalCorpus {
    /// Add, for every sentence containing `word`, a copy with `synonym`
    /// substituted, so both words see identical context multisets.
    pub fn with_synonym(&self, word: &str, synonym: &str) -> Result<Self> {
        if self.vocabulary().contains(synonym) {
            return Err(Error::invalid(format!("`{synonym}` already occurs in the corpus")));
        }
        let mut sentences = self.sentences.clone();
        for s in &self.sentences {
            if s.split_whitespace().any(|w| w == word) {
                sentences.push(
                    s.split_whitespace()
                        .map(|w| if w == word { synonym } else { w })
                        .collect::<Vec<_>>()
                        .join(" "),
                );
            }
        }
        Ok(Self {
            sentences,
            pairs: self.pairs.clone(),
            seed: self.seed,
        })
    }

    pub fn vocabulary(&self) -> BTreeSet<&str> {
        self.sentences
            .iter()
            .flat_map(|s| s.split_whitespace())
            .collect()
    }

    pub fn to_text(&self) -> String {
        self.sentences.iter().map(|s| format!("{s}\n")).collect()
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }

    /// Load sentences written by [`RelationalCorpus::save`]; pairs are not
    /// stored in the file and come back empty.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(Self {
            sentences: text.lines().filter(|l| !l.trim().is_empty()).map(str::to_string).collect(),
            pairs: Vec::new(),
            seed: 0,
        })
    }
}
