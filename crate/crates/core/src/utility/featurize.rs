//! Signed feature hashing of word n-grams.

use serde::{Deserialize, Serialize};

pub const SEPARATOR: &str = "[SEP]";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeaturizerSpec {
    pub hash_seed: u64,
    pub dim: usize,
    pub ngram_orders: Vec<usize>,
}

impl Default for FeaturizerSpec {
    fn default() -> Self {
        FeaturizerSpec { hash_seed: 0x5eed_1e7, dim: 2048, ngram_orders: vec![1, 2] }
    }
}

/// L2-normalized sparse feature vector; indices ascending and unique.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct FeatureVector {
    pub dim: usize,
    pub indices: Vec<u32>,
    pub values: Vec<f64>,
}

impl FeatureVector {
    pub fn to_dense(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.dim];
        for (&i, &v) in self.indices.iter().zip(&self.values) {
            out[i as usize] = v;
        }
        out
    }

    pub fn norm(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn from_dense(dense: &[f64]) -> Self {
        let (indices, values) = dense
            .iter()
            .enumerate()
            .filter(|(_, v)| **v != 0.0)
            .map(|(i, v)| (i as u32, *v))
            .unzip();
        FeatureVector { dim: dense.len(), indices, values }
    }
}

/// FNV-1a over the seed bytes then the token bytes.
fn hash_token(seed: u64, token: &str) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in seed.to_le_bytes().iter().chain(token.as_bytes()) {
        h ^= *b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    // Final avalanche so bucket and sign bits are well mixed.
    h ^= h >> 33;
    h = h.wrapping_mul(0xff51_afd7_ed55_8ccd);
    h ^= h >> 33;
    h
}

/// Lowercased whitespace tokens with trailing sentence punctuation removed.
pub fn tokenize(text: &str) -> impl Iterator<Item = String> + '_ {
    text.split_whitespace()
        .map(|t| t.trim_end_matches(['.', ',', ';', ':']).to_lowercase())
        .filter(|t| !t.is_empty())
}

/// Hashed n-grams of an observation that do not touch the separator, plus the
/// trailing tokens needed to form n-grams across it. Lets one observation be
/// paired with many candidate actions cheaply.
#[derive(Debug, Clone)]
pub struct PreparedObs {
    entries: Vec<(u32, f64)>,
    tail: Vec<String>,
}

impl FeaturizerSpec {
    fn max_order(&self) -> usize {
        self.ngram_orders.iter().copied().max().unwrap_or(1)
    }

    fn hash_windows(&self, tokens: &[String], skip_before: usize, out: &mut Vec<(u32, f64)>) {
        let mut gram = String::new();
        for &n in &self.ngram_orders {
            if n == 0 || n > tokens.len() {
                continue;
            }
            for (start, window) in tokens.windows(n).enumerate() {
                // Windows ending before `skip_before` were hashed already.
                if start + n <= skip_before {
                    continue;
                }
                gram.clear();
                for (k, t) in window.iter().enumerate() {
                    if k > 0 {
                        gram.push('\u{1f}');
                    }
                    gram.push_str(t);
                }
                let h = hash_token(self.hash_seed ^ n as u64, &gram);
                let bucket = (h % self.dim as u64) as u32;
                let sign = if (h >> 63) == 1 { -1.0 } else { 1.0 };
                out.push((bucket, sign));
            }
        }
    }

    pub fn prepare(&self, obs_text: &str) -> PreparedObs {
        let tokens: Vec<String> = tokenize(obs_text).collect();
        let mut entries = Vec::new();
        self.hash_windows(&tokens, 0, &mut entries);
        let keep = self.max_order().saturating_sub(1).min(tokens.len());
        PreparedObs { entries, tail: tokens[tokens.len() - keep..].to_vec() }
    }

    pub fn featurize_prepared(&self, obs: &PreparedObs, action_text: &str) -> FeatureVector {
        let tokens: Vec<String> = obs
            .tail
            .iter()
            .cloned()
            .chain(std::iter::once(SEPARATOR.to_string()))
            .chain(tokenize(action_text))
            .collect();
        let mut entries = obs.entries.clone();
        self.hash_windows(&tokens, obs.tail.len(), &mut entries);
        self.finish(entries)
    }

    /// Hash the n-grams of `obs [SEP] action` into `dim` signed buckets.
    pub fn featurize(&self, obs_text: &str, action_text: &str) -> FeatureVector {
        self.featurize_prepared(&self.prepare(obs_text), action_text)
    }

    fn finish(&self, mut entries: Vec<(u32, f64)>) -> FeatureVector {
        entries.sort_unstable_by_key(|e| e.0);
        let mut fv = FeatureVector { dim: self.dim, ..Default::default() };
        for (bucket, v) in entries {
            if fv.indices.last() == Some(&bucket) {
                *fv.values.last_mut().expect("paired") += v;
            } else {
                fv.indices.push(bucket);
                fv.values.push(v);
            }
        }
        let mut i = 0;
        while i < fv.indices.len() {
            if fv.values[i] == 0.0 {
                fv.indices.remove(i);
                fv.values.remove(i);
            } else {
                i += 1;
            }
        }
        let norm = fv.norm();
        if norm == 0.0 {
            // Every bucket cancelled out; fall back to the separator bucket.
            let bucket = (hash_token(self.hash_seed, SEPARATOR) % self.dim as u64) as u32;
            fv.indices = vec![bucket];
            fv.values = vec![1.0];
            return fv;
        }
        for v in &mut fv.values {
            *v /= norm;
        }
        fv
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn deterministic() {
        let f = FeaturizerSpec::default();
        assert_eq!(f.featurize("I'm in <kitchen>", "grasp <apple> (31)"), f.featurize("I'm in <kitchen>", "grasp <apple> (31)"));
    }

    #[test]
    fn unit_norm() {
        let f = FeaturizerSpec::default();
        for (o, a) in [("a", "b"), ("I'm in <kitchen> (1000) at 2,3.", "wait"), ("x x x x", "x")] {
            assert!((f.featurize(o, a).norm() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn different_actions_differ() {
        let f = FeaturizerSpec::default();
        let obs = "I'm in <kitchen> (1000) at 2,3. Holding: nothing, nothing.";
        assert_ne!(f.featurize(obs, "grasp <apple> (31)"), f.featurize(obs, "grasp <plate> (12)"));
    }

    #[test]
    fn prepared_matches_direct() {
        for orders in [vec![1], vec![1, 2], vec![1, 2, 3]] {
            let f = FeaturizerSpec { ngram_orders: orders, ..Default::default() };
            let obs = "I'm in <kitchen> (1000) at 2,3. Holding: nothing, nothing.";
            let prep = f.prepare(obs);
            for act in ["walk towards <bedroom> (3000)", "wait", ""] {
                let direct = {
                    let tokens: Vec<String> = tokenize(obs)
                        .chain(std::iter::once(SEPARATOR.to_string()))
                        .chain(tokenize(act))
                        .collect();
                    let mut e = Vec::new();
                    f.hash_windows(&tokens, 0, &mut e);
                    f.finish(e)
                };
                assert_eq!(f.featurize_prepared(&prep, act), direct);
            }
        }
    }

    #[test]
    fn dense_roundtrip() {
        let f = FeaturizerSpec { dim: 16, ..Default::default() };
        let v = f.featurize("one two three", "four");
        assert_eq!(FeatureVector::from_dense(&v.to_dense()), v);
    }
}
