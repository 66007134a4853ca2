use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::vocab::PAD_ID;
use crate::error::{Error, Result};

/// Fixed-length pooled vector.
#[derive(Debug, Clone, PartialEq)]
pub struct Embedding(pub Vec<f64>);

impl Embedding {
    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn norm(&self) -> f64 {
        self.0.iter().map(|x| x * x).sum::<f64>().sqrt()
    }

    /// Unit-length copy, or an error for the zero vector.
    pub fn normalized(&self) -> Result<Embedding> {
        let n = self.norm();
        if n <= 0.0 || !n.is_finite() {
            return Err(Error::Numerical("cannot normalize a zero embedding".into()));
        }
        Ok(Embedding(self.0.iter().map(|x| x / n).collect()))
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Cosine similarity. Errors on a zero (or non-finite) vector.
pub fn cosine(a: &Embedding, b: &Embedding) -> Result<f64> {
    if a.dim() != b.dim() {
        return Err(Error::invalid(format!(
            "embedding dims differ: {} vs {}",
            a.dim(),
            b.dim()
        )));
    }
    let (na, nb) = (a.norm(), b.norm());
    if !(na > 0.0 && nb > 0.0) || !(na.is_finite() && nb.is_finite()) {
        return Err(Error::Numerical("cosine of a zero embedding".into()));
    }
    Ok((dot(&a.0, &b.0) / (na * nb)).clamp(-1.0, 1.0))
}

/// Gradients of `cosine(a, b)` with respect to `a` and `b`.
pub fn cosine_grad(a: &Embedding, b: &Embedding) -> Result<(Vec<f64>, Vec<f64>)> {
    let c = cosine(a, b)?;
    let (na, nb) = (a.norm(), b.norm());
    let inv = 1.0 / (na * nb);
    let ca = c / (na * na);
    let cb = c / (nb * nb);
    let da =
        a.0.iter()
            .zip(&b.0)
            .map(|(x, y)| y * inv - ca * x)
            .collect();
    let db =
        a.0.iter()
            .zip(&b.0)
            .map(|(x, y)| x * inv - cb * y)
            .collect();
    Ok((da, db))
}

/// Sparse per-row gradient accumulator for the embedding table.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct GradBuffer {
    rows: BTreeMap<usize, Vec<f64>>,
}

impl GradBuffer {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, row: usize, values: &[f64], scale: f64) {
        let entry = self
            .rows
            .entry(row)
            .or_insert_with(|| vec![0.0; values.len()]);
        for (g, v) in entry.iter_mut().zip(values) {
            *g += scale * v;
        }
    }

    pub fn row(&self, row: usize) -> Option<&[f64]> {
        self.rows.get(&row).map(Vec::as_slice)
    }

    pub fn rows(&self) -> impl Iterator<Item = (usize, &[f64])> {
        self.rows.iter().map(|(r, v)| (*r, v.as_slice()))
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }
}

/// Anything that maps a token sequence to an embedding and can push an
/// embedding-space gradient back onto its parameters.
pub trait Encoder {
    fn dim(&self) -> usize;

    fn embed(&self, ids: &[u32]) -> Result<Embedding>;

    /// Accumulates `d_embedding`, the gradient of some scalar with respect to
    /// `embed(ids)`, into `grads`.
    fn backward(&self, ids: &[u32], d_embedding: &[f64], grads: &mut GradBuffer);
}

/// Trainable token-embedding table with mean pooling.
///
/// Rows `0..vocab_size` are per-token embeddings. When `bigram_buckets > 0`
/// the table has that many extra rows, one per hashed bucket of adjacent
/// token pairs, and pooling averages those rows together with the token rows.
/// With no buckets the encoder is a pure bag of tokens.
#[derive(Debug, Clone, PartialEq)]
pub struct EncoderParams {
    dim: usize,
    vocab_size: usize,
    bigram_buckets: usize,
    table: Vec<f64>,
}

// FNV-1a over the two ids. Must stay stable: checkpoints depend on it.
fn bigram_hash(a: u32, b: u32) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for byte in a.to_le_bytes().into_iter().chain(b.to_le_bytes()) {
        h ^= byte as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

impl EncoderParams {
    /// Uniform initialization in `[-0.5/dim, 0.5/dim]`.
    pub fn init(vocab_size: usize, dim: usize, bigram_buckets: usize, seed: u64) -> Result<Self> {
        if dim < 2 {
            return Err(Error::invalid("embedding dim must be at least 2"));
        }
        if vocab_size == 0 {
            return Err(Error::invalid("vocab is empty"));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let bound = 0.5 / dim as f64;
        let n = (vocab_size + bigram_buckets) * dim;
        let table = (0..n).map(|_| rng.gen_range(-bound..=bound)).collect();
        Ok(EncoderParams {
            dim,
            vocab_size,
            bigram_buckets,
            table,
        })
    }

    /// Builds params from an existing table, checking shape and finiteness.
    pub fn from_table(
        vocab_size: usize,
        dim: usize,
        bigram_buckets: usize,
        table: Vec<f64>,
    ) -> Result<Self> {
        if dim < 2 {
            return Err(Error::invalid("embedding dim must be at least 2"));
        }
        if table.len() != (vocab_size + bigram_buckets) * dim {
            return Err(Error::invalid(format!(
                "table has {} entries, expected ({} + {}) x {}",
                table.len(),
                vocab_size,
                bigram_buckets,
                dim
            )));
        }
        if table.iter().any(|x| !x.is_finite()) {
            return Err(Error::Numerical("non-finite parameter".into()));
        }
        Ok(EncoderParams {
            dim,
            vocab_size,
            bigram_buckets,
            table,
        })
    }

    pub fn vocab_size(&self) -> usize {
        self.vocab_size
    }

    pub fn bigram_buckets(&self) -> usize {
        self.bigram_buckets
    }

    pub fn rows(&self) -> usize {
        self.vocab_size + self.bigram_buckets
    }

    pub fn table(&self) -> &[f64] {
        &self.table
    }

    pub fn table_mut(&mut self) -> &mut [f64] {
        &mut self.table
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.table[r * self.dim..(r + 1) * self.dim]
    }

    pub fn row_mut(&mut self, r: usize) -> &mut [f64] {
        &mut self.table[r * self.dim..(r + 1) * self.dim]
    }

    /// Table rows pooled for `ids`, sorted so that summation order does not
    /// depend on token order. PAD is skipped; out-of-range ids map to UNK.
    pub fn feature_rows(&self, ids: &[u32]) -> Vec<usize> {
        let unk = super::vocab::UNK_ID as usize;
        let toks: Vec<usize> = ids
            .iter()
            .filter(|&&id| id != PAD_ID)
            .map(|&id| {
                let id = id as usize;
                if id < self.vocab_size {
                    id
                } else {
                    unk
                }
            })
            .collect();
        let mut rows = toks.clone();
        if self.bigram_buckets > 0 {
            for w in toks.windows(2) {
                let bucket = bigram_hash(w[0] as u32, w[1] as u32) % self.bigram_buckets as u64;
                rows.push(self.vocab_size + bucket as usize);
            }
        }
        rows.sort_unstable();
        rows
    }

    /// Applies `row -= lr * grad` for every row in `grads`.
    pub fn sgd_step(&mut self, grads: &GradBuffer, learning_rate: f64) {
        for (r, g) in grads.rows() {
            for (p, d) in self.row_mut(r).iter_mut().zip(g) {
                *p -= learning_rate * d;
            }
        }
    }
}

impl Encoder for EncoderParams {
    fn dim(&self) -> usize {
        self.dim
    }

    fn embed(&self, ids: &[u32]) -> Result<Embedding> {
        let rows = self.feature_rows(ids);
        if rows.is_empty() {
            return Err(Error::invalid("cannot embed an empty token sequence"));
        }
        let mut acc = vec![0.0; self.dim];
        for &r in &rows {
            for (a, x) in acc.iter_mut().zip(self.row(r)) {
                *a += x;
            }
        }
        let n = rows.len() as f64;
        acc.iter_mut().for_each(|a| *a /= n);
        Ok(Embedding(acc))
    }

    fn backward(&self, ids: &[u32], d_embedding: &[f64], grads: &mut GradBuffer) {
        let rows = self.feature_rows(ids);
        if rows.is_empty() {
            return;
        }
        let scale = 1.0 / rows.len() as f64;
        for r in rows {
            grads.add(r, d_embedding, scale);
        }
    }
}

/// Free-function form of [`Encoder::embed`].
pub fn embed(p: &EncoderParams, ids: &[u32]) -> Result<Embedding> {
    p.embed(ids)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params() -> EncoderParams {
        EncoderParams::init(10, 4, 0, 7).unwrap()
    }

    #[test]
    fn init_range_and_determinism() {
        let p = EncoderParams::init(10, 8, 3, 1).unwrap();
        assert_eq!(p.table().len(), 13 * 8);
        assert!(p.table().iter().all(|x| x.abs() <= 0.5 / 8.0));
        assert_eq!(p, EncoderParams::init(10, 8, 3, 1).unwrap());
        assert!(EncoderParams::init(10, 1, 0, 1).is_err());
    }

    #[test]
    fn single_token_is_its_row() {
        let p = params();
        assert_eq!(p.embed(&[7]).unwrap().0, p.row(7));
    }

    #[test]
    fn two_tokens_average() {
        let p = params();
        let e = p.embed(&[6, 8]).unwrap();
        for k in 0..4 {
            assert!((e.0[k] - (p.row(6)[k] + p.row(8)[k]) / 2.0).abs() < 1e-15);
        }
    }

    #[test]
    fn permutation_invariant_and_pad_skipped() {
        let p = params();
        let a = p.embed(&[6, 7, 8, 9]).unwrap();
        let b = p.embed(&[9, 0, 8, 6, 7, 0]).unwrap();
        assert_eq!(a, b);
        assert!(p.embed(&[]).is_err());
        assert!(p.embed(&[0, 0]).is_err());
    }

    #[test]
    fn bigrams_break_order_symmetry() {
        let p = EncoderParams::init(10, 4, 64, 3).unwrap();
        let a = p.embed(&[2, 6, 3, 7, 4, 8]).unwrap();
        let b = p.embed(&[2, 8, 3, 7, 4, 6]).unwrap();
        assert_ne!(a, b);
    }

    #[test]
    fn cosine_cases() {
        let v = Embedding(vec![0.3, -1.2, 2.0]);
        let neg = Embedding(v.0.iter().map(|x| -x).collect());
        assert!((cosine(&v, &v).unwrap() - 1.0).abs() < 1e-15);
        assert!((cosine(&v, &neg).unwrap() + 1.0).abs() < 1e-15);
        let e1 = Embedding(vec![1.0, 0.0]);
        let e2 = Embedding(vec![0.0, 1.0]);
        assert_eq!(cosine(&e1, &e2).unwrap(), 0.0);
        assert!(cosine(&e1, &Embedding(vec![0.0, 0.0])).is_err());
    }

    #[test]
    fn cosine_grad_matches_finite_difference() {
        let a = Embedding(vec![0.3, -0.2, 0.9]);
        let b = Embedding(vec![-0.4, 0.5, 0.1]);
        let (da, _) = cosine_grad(&a, &b).unwrap();
        let eps = 1e-6;
        for (k, &analytic) in da.iter().enumerate() {
            let mut hi = a.clone();
            hi.0[k] += eps;
            let mut lo = a.clone();
            lo.0[k] -= eps;
            let fd = (cosine(&hi, &b).unwrap() - cosine(&lo, &b).unwrap()) / (2.0 * eps);
            assert!((fd - analytic).abs() < 1e-8);
        }
    }
}
