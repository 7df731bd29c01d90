//! Character-level LSTM language model over reviews, a linear probe on its
//! final hidden state, single sentiment-unit discovery, and generation with
//! that unit clamped.

mod lm;
mod probe;

pub use lm::{train_char_lm, CharLM, LmConfig, LmReport};
pub use probe::{find_sentiment_unit, fit_probe, Histogram, Probe, SentimentUnit, HISTOGRAM_BINS};

use crate::error::{Error, Result};

/// `'\n'` plus printable ASCII `' '..='~'`.
pub const VOCAB_SIZE: usize = 96;
/// Index of the document terminator `'\n'`.
pub const NEWLINE: usize = 0;

/// Index of `ch` in the fixed character vocabulary.
pub fn char_index(ch: char) -> Result<usize> {
    match ch {
        '\n' => Ok(NEWLINE),
        ' '..='~' => Ok(ch as usize - ' ' as usize + 1),
        _ => Err(Error::UnknownChar(ch)),
    }
}

pub fn index_char(index: usize) -> Result<char> {
    match index {
        NEWLINE => Ok('\n'),
        1..=95 => Ok(char::from(b' ' + (index - 1) as u8)),
        _ => Err(Error::OutOfRange { index, size: VOCAB_SIZE }),
    }
}

pub fn encode_text(text: &str) -> Result<Vec<usize>> {
    text.chars().map(char_index).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn vocabulary_round_trips() {
        for i in 0..VOCAB_SIZE {
            assert_eq!(char_index(index_char(i).unwrap()).unwrap(), i);
        }
        assert_eq!(char_index('a').unwrap(), 66);
        assert!(matches!(char_index('é'), Err(Error::UnknownChar('é'))));
        assert!(char_index('\t').is_err());
        assert!(index_char(96).is_err());
    }
}
