//! Procedural training data and file formats: glyph images, sentiment
//! reviews, relational sentences and binary PGM.

mod glyphs;
mod pgm;
mod relational;
mod reviews;

pub use glyphs::{gen_glyphs, parse_classes, render_glyph, GlyphClass, LabeledImageSet};
pub use pgm::{decode_pgm, encode_pgm, read_pgm, write_pgm};
pub use relational::{gen_relational, template_words, RelationalCorpus, DEFAULT_PAIRS, MAX_PAIRS, MAX_TEMPLATES};
pub use reviews::{
    gen_reviews, Lexicon, Review, ReviewCorpus, Sentiment, MAX_REVIEW_CHARS, MIN_REVIEW_CHARS,
    NEGATIVE_WORDS, POSITIVE_WORDS,
};
