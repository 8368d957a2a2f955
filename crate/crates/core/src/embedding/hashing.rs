use crate::rng::stable_hash64;

/// Signed feature hashing of whitespace unigrams and adjacent-token bigrams
/// (joined by one space), L2-normalised.
///
/// A feature's bucket is `hash mod dim` and its sign is the top bit of the
/// same hash. The feature count `2n - 1` is odd, so the vector is never zero.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct HashBackbone {
    dim: usize,
}

impl HashBackbone {
    /// `dim` must be a power of two, at least 8.
    pub fn new(dim: usize) -> Option<Self> {
        (dim >= 8 && dim.is_power_of_two()).then_some(HashBackbone { dim })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn embed(&self, text: &str) -> Vec<f64> {
        let mut v = vec![0.0; self.dim];
        let tokens: Vec<&str> = text.split_whitespace().collect();
        let mut add = |feature: &[u8]| {
            let h = stable_hash64(feature);
            let idx = (h & (self.dim as u64 - 1)) as usize;
            v[idx] += if h >> 63 == 1 { -1.0 } else { 1.0 };
        };
        for t in &tokens {
            add(t.as_bytes());
        }
        let mut bigram = Vec::new();
        for pair in tokens.windows(2) {
            bigram.clear();
            bigram.extend_from_slice(pair[0].as_bytes());
            bigram.push(b' ');
            bigram.extend_from_slice(pair[1].as_bytes());
            add(&bigram);
        }
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 0.0 {
            v.iter_mut().for_each(|x| *x /= norm);
        }
        v
    }
}
