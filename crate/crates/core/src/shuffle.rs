//! Randomized text shuffling.
//!
//! A document that is a single sentence has its words permuted with the
//! terminal punctuation kept last. Otherwise every paragraph has its
//! sentences permuted independently (word order inside a sentence is kept)
//! and paragraph order is preserved. Permutations are uniform Fisher–Yates
//! draws from a ChaCha8 stream seeded by [`ShuffleSeed`]; the identity
//! permutation is a legal outcome and is not resampled.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::segment::{render, segment, Document, SegmentError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ShuffleSeed(pub u64);

impl ShuffleSeed {
    pub(crate) fn rng(self) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(self.0)
    }
}

impl From<u64> for ShuffleSeed {
    fn from(seed: u64) -> Self {
        ShuffleSeed(seed)
    }
}

/// In-place Fisher–Yates. Indices are drawn as `u64` so the stream is the
/// same on 32- and 64-bit targets.
pub(crate) fn fisher_yates<T, R: Rng>(items: &mut [T], rng: &mut R) {
    for i in (1..items.len()).rev() {
        let j = rng.random_range(0..=i as u64) as usize;
        items.swap(i, j);
    }
}

pub fn shuffle(doc: &Document, seed: ShuffleSeed) -> Document {
    let mut rng = seed.rng();
    let mut out = doc.clone();
    let single_sentence = out.paragraphs().len() == 1 && out.paragraphs()[0].sentences().len() == 1;
    if single_sentence {
        let sentence = &mut out.paragraphs_mut()[0].sentences_mut()[0];
        fisher_yates(sentence.words_mut(), &mut rng);
    } else {
        for paragraph in out.paragraphs_mut() {
            fisher_yates(paragraph.sentences_mut(), &mut rng);
        }
    }
    out.rehash();
    out
}

/// `render(shuffle(segment(text), seed))`.
pub fn shuffle_text(text: &str, seed: ShuffleSeed) -> Result<String, SegmentError> {
    Ok(render(&shuffle(&segment(text)?, seed)))
}
