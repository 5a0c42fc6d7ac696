//! Hashed character/word n-gram features.

use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::text::{fnv1a, normalize_text, Lexicon};

/// Sparse vector with strictly increasing indices.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SparseVector {
    entries: Vec<(u32, f64)>,
}

impl SparseVector {
    /// Builds a vector from unsorted `(index, value)` pairs, summing repeats.
    pub fn from_pairs(mut pairs: Vec<(u32, f64)>) -> Self {
        pairs.sort_by_key(|&(i, _)| i);
        let mut entries: Vec<(u32, f64)> = Vec::with_capacity(pairs.len());
        for (i, v) in pairs {
            match entries.last_mut() {
                Some((j, acc)) if *j == i => *acc += v,
                _ => entries.push((i, v)),
            }
        }
        entries.retain(|&(_, v)| v != 0.0);
        Self { entries }
    }

    pub fn entries(&self) -> &[(u32, f64)] {
        &self.entries
    }

    pub fn is_zero(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn nnz(&self) -> usize {
        self.entries.len()
    }

    pub fn get(&self, index: u32) -> f64 {
        self.entries
            .binary_search_by_key(&index, |&(i, _)| i)
            .map(|pos| self.entries[pos].1)
            .unwrap_or(0.0)
    }

    pub fn norm(&self) -> f64 {
        libm::sqrt(self.entries.iter().map(|&(_, v)| v * v).sum())
    }

    /// Scales to unit L2 norm; the zero vector stays zero.
    pub fn normalized(mut self) -> Self {
        let n = self.norm();
        if n > 0.0 {
            for (_, v) in &mut self.entries {
                *v /= n;
            }
        }
        self
    }

    pub fn dot_dense(&self, dense: &[f64]) -> f64 {
        self.entries.iter().map(|&(i, v)| v * dense[i as usize]).sum()
    }

    pub fn dot(&self, other: &SparseVector) -> f64 {
        let (mut a, mut b) = (self.entries.iter().peekable(), other.entries.iter().peekable());
        let mut acc = 0.0;
        while let (Some(&&(i, x)), Some(&&(j, y))) = (a.peek(), b.peek()) {
            match i.cmp(&j) {
                core::cmp::Ordering::Less => {
                    a.next();
                }
                core::cmp::Ordering::Greater => {
                    b.next();
                }
                core::cmp::Ordering::Equal => {
                    acc += x * y;
                    a.next();
                    b.next();
                }
            }
        }
        acc
    }

    pub fn to_dense(&self, dimension: usize) -> Vec<f64> {
        let mut out = alloc::vec![0.0; dimension];
        for &(i, v) in &self.entries {
            out[i as usize] = v;
        }
        out
    }
}

/// Shape of the hashed feature space used by the reference classifier.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureSpec {
    /// Number of hash buckets; must be a power of two.
    pub dimension: u32,
    pub char_orders: Vec<usize>,
    pub word_orders: Vec<usize>,
    /// Features beyond this many (in text order) are dropped.
    pub max_features: usize,
    #[serde(default)]
    pub lexicon: Lexicon,
}

impl Default for FeatureSpec {
    fn default() -> Self {
        Self {
            dimension: 1 << 14,
            char_orders: alloc::vec![2, 3, 4],
            word_orders: alloc::vec![1],
            max_features: 512,
            lexicon: Lexicon::new(),
        }
    }
}

impl FeatureSpec {
    pub fn is_valid(&self) -> bool {
        self.dimension.is_power_of_two()
            && self.char_orders.iter().chain(&self.word_orders).all(|&n| n >= 1)
            && self.max_features >= 1
    }

    fn bucket(&self, hash: u64) -> u32 {
        (hash & u64::from(self.dimension - 1)) as u32
    }
}

const WORD_TAG: u8 = 0x80;

/// Counts hashed character n-grams and word n-grams of the normalized text,
/// walking the text left to right and stopping after `max_features` grams.
pub fn featurize(text: &str, spec: &FeatureSpec) -> SparseVector {
    debug_assert!(spec.dimension.is_power_of_two());
    let normalized = normalize_text(text, &spec.lexicon);
    let bounds: Vec<usize> = normalized
        .char_indices()
        .map(|(i, _)| i)
        .chain(core::iter::once(normalized.len()))
        .collect();
    let n_chars = bounds.len() - 1;
    let words: Vec<&str> = normalized.split(' ').filter(|w| !w.is_empty()).collect();

    let mut pairs = Vec::new();
    let mut word_idx = 0;
    'outer: for pos in 0..n_chars {
        let at_word_start = pos == 0 || normalized[..bounds[pos]].ends_with(' ');
        if at_word_start && !normalized[bounds[pos]..].starts_with(' ') && word_idx < words.len() {
            for &n in &spec.word_orders {
                if word_idx + n <= words.len() {
                    if pairs.len() == spec.max_features {
                        break 'outer;
                    }
                    let h = fnv1a(WORD_TAG | (n as u8 & 0x7f), &words[word_idx..word_idx + n]);
                    pairs.push((spec.bucket(h), 1.0));
                }
            }
            word_idx += 1;
        }
        for &n in &spec.char_orders {
            if pos + n <= n_chars {
                if pairs.len() == spec.max_features {
                    break 'outer;
                }
                let gram = &normalized[bounds[pos]..bounds[pos + n]];
                pairs.push((spec.bucket(fnv1a(n as u8 & 0x7f, &[gram])), 1.0));
            }
        }
    }
    SparseVector::from_pairs(pairs)
}
