//! Bag-of-tokens caption encoder: token embeddings, mean pooling, an MLP
//! head and L2 normalization. Fine-tuned so that captions land on the
//! feature of their class label.

mod finetune;

use std::collections::BTreeMap;

use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::binio::{ByteReader, ByteWriter};
use crate::error::{Error, Result};
use crate::motion::{CaptionCorpus, SkillClass};
use crate::numerics::{normalize_in_place, Activation, Matrix, MlpSpec, ParamVector};

pub use finetune::{finetune, FinetuneConfig, FinetuneLog};

/// Hash buckets reserved for tokens outside the vocabulary.
pub const UNKNOWN_BUCKETS: usize = 64;

/// Lowercased whitespace tokens.
pub fn tokenize(caption: &str) -> Vec<String> {
    caption.split_whitespace().map(|t| t.to_lowercase()).collect()
}

/// 64-bit FNV-1a; stable across platforms and releases.
fn fnv1a(s: &str) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in s.bytes() {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocabulary {
    index: BTreeMap<String, usize>,
}

impl Vocabulary {
    /// Tokens of every corpus caption and every class label, in sorted order.
    pub fn build(corpus: &CaptionCorpus) -> Self {
        let mut tokens: Vec<String> = corpus.entries.iter().flat_map(|e| tokenize(&e.caption)).collect();
        tokens.extend(SkillClass::ALL.iter().flat_map(|s| tokenize(s.label())));
        Self::from_tokens(tokens)
    }

    pub fn from_tokens<I: IntoIterator<Item = String>>(tokens: I) -> Self {
        let mut sorted: Vec<String> = tokens.into_iter().collect();
        sorted.sort();
        sorted.dedup();
        let index = sorted.into_iter().enumerate().map(|(i, t)| (t, i)).collect();
        Self { index }
    }

    pub fn len(&self) -> usize {
        self.index.len()
    }

    pub fn is_empty(&self) -> bool {
        self.index.is_empty()
    }

    /// Rows in the embedding table: known tokens followed by the hash buckets.
    pub fn table_rows(&self) -> usize {
        self.len() + UNKNOWN_BUCKETS
    }

    pub fn contains(&self, token: &str) -> bool {
        self.index.contains_key(token)
    }

    pub fn token_index(&self, token: &str) -> usize {
        match self.index.get(token) {
            Some(&i) => i,
            None => self.len() + (fnv1a(token) % UNKNOWN_BUCKETS as u64) as usize,
        }
    }

    pub fn write(&self, w: &mut ByteWriter) {
        let mut by_index: Vec<(&String, &usize)> = self.index.iter().collect();
        by_index.sort_by_key(|(_, &i)| i);
        w.u32(by_index.len() as u32);
        for (t, _) in by_index {
            w.str(t);
        }
    }

    pub fn read(r: &mut ByteReader<'_>) -> Result<Self> {
        let n = r.u32("vocabulary size")? as usize;
        let mut index = BTreeMap::new();
        for i in 0..n {
            let at = r.offset();
            let t = r.str("token")?;
            if index.insert(t, i).is_some() {
                return Err(Error::parse(at, "duplicate vocabulary token"));
            }
        }
        Ok(Self { index })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TextFeature {
    pub values: Vec<f64>,
    pub normalized: bool,
}

impl TextFeature {
    pub fn dim(&self) -> usize {
        self.values.len()
    }

    pub fn distance(&self, other: &TextFeature) -> f64 {
        self.values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EncoderShape {
    pub embed_dim: usize,
    pub hidden: usize,
    pub feature_dim: usize,
}

impl Default for EncoderShape {
    fn default() -> Self {
        Self {
            embed_dim: 32,
            hidden: 64,
            feature_dim: 64,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EncoderParams {
    pub vocab: Vocabulary,
    pub embed_dim: usize,
    /// `table_rows × embed_dim`, row-major.
    pub embedding: Vec<f64>,
    pub head_spec: MlpSpec,
    pub head: ParamVector,
}

impl EncoderParams {
    pub fn init<R: Rng + ?Sized>(vocab: Vocabulary, shape: EncoderShape, rng: &mut R) -> Result<Self> {
        let head_spec = MlpSpec::new(vec![shape.embed_dim, shape.hidden, shape.feature_dim], Activation::Tanh)?;
        let normal = Normal::new(0.0, 1.0).expect("valid");
        let embedding = (0..vocab.table_rows() * shape.embed_dim).map(|_| normal.sample(rng)).collect();
        let head = head_spec.init_params(rng);
        Ok(Self {
            vocab,
            embed_dim: shape.embed_dim,
            embedding,
            head_spec,
            head,
        })
    }

    pub fn feature_dim(&self) -> usize {
        self.head_spec.output_width()
    }

    /// Embedding rows of a caption's tokens; empty captions are rejected.
    pub(crate) fn token_rows(&self, caption: &str) -> Result<Vec<usize>> {
        let toks = tokenize(caption);
        if toks.is_empty() {
            return Err(Error::contract("caption is empty after normalization"));
        }
        // Sorted so pooling sums in the same order for any token permutation.
        let mut rows: Vec<usize> = toks.iter().map(|t| self.vocab.token_index(t)).collect();
        rows.sort_unstable();
        Ok(rows)
    }

    pub(crate) fn pool(&self, rows: &[usize], out: &mut [f64]) {
        out.iter_mut().for_each(|v| *v = 0.0);
        let inv = 1.0 / rows.len() as f64;
        for &r in rows {
            let e = &self.embedding[r * self.embed_dim..(r + 1) * self.embed_dim];
            for (o, v) in out.iter_mut().zip(e) {
                *o += v * inv;
            }
        }
    }

    pub(crate) fn pooled_batch(&self, token_rows: &[Vec<usize>]) -> Matrix {
        let mut m = Matrix::zeros(token_rows.len(), self.embed_dim);
        for (i, rows) in token_rows.iter().enumerate() {
            self.pool(rows, m.row_mut(i));
        }
        m
    }

    pub fn write(&self, w: &mut ByteWriter) {
        self.vocab.write(w);
        self.write_weights(w);
    }

    /// Everything except the vocabulary.
    pub fn write_weights(&self, w: &mut ByteWriter) {
        w.u32(self.embed_dim as u32);
        w.f64s(&self.embedding);
        self.head_spec.write_fragment(&self.head, w);
    }

    pub fn read(r: &mut ByteReader<'_>) -> Result<Self> {
        let vocab = Vocabulary::read(r)?;
        Self::read_weights(vocab, r)
    }

    pub fn read_weights(vocab: Vocabulary, r: &mut ByteReader<'_>) -> Result<Self> {
        let embed_dim = r.u32("embedding width")? as usize;
        let at = r.offset();
        let embedding = r.f64s("embedding table")?;
        if embedding.len() != vocab.table_rows() * embed_dim {
            return Err(Error::parse(at, "embedding table size does not match vocabulary"));
        }
        let (head_spec, head) = MlpSpec::read_fragment(r)?;
        if head_spec.input_width() != embed_dim {
            return Err(Error::parse(at, "encoder head width does not match embedding width"));
        }
        Ok(Self {
            vocab,
            embed_dim,
            embedding,
            head_spec,
            head,
        })
    }
}

/// Unit-norm feature of one caption.
pub fn encode_text(params: &EncoderParams, caption: &str) -> Result<TextFeature> {
    let rows = params.token_rows(caption)?;
    let mut pooled = vec![0.0; params.embed_dim];
    params.pool(&rows, &mut pooled);
    let mut values = params.head_spec.forward(&params.head, &pooled)?;
    normalize_in_place(&mut values);
    Ok(TextFeature {
        values,
        normalized: true,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::motion::generate_caption_corpus;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn params() -> EncoderParams {
        let vocab = Vocabulary::build(&generate_caption_corpus(0));
        EncoderParams::init(vocab, EncoderShape::default(), &mut ChaCha8Rng::seed_from_u64(1)).unwrap()
    }

    #[test]
    fn unknown_tokens_hash_into_buckets() {
        let p = params();
        let v = &p.vocab;
        for t in ["zzz", "quux", "", "RUN"] {
            if !v.contains(t) {
                let i = v.token_index(t);
                assert!(i >= v.len() && i < v.table_rows());
            }
        }
        assert!(v.token_index("run") < v.len());
    }

    #[test]
    fn encoding_contracts() {
        let p = params();
        let a = encode_text(&p, "rush ahead rapidly").unwrap();
        assert_eq!(a, encode_text(&p, "rush ahead rapidly").unwrap());
        assert_eq!(a.values, encode_text(&p, "rapidly RUSH   ahead").unwrap().values);
        assert_eq!(a.dim(), 64);
        let n: f64 = a.values.iter().map(|v| v * v).sum::<f64>().sqrt();
        assert!((n - 1.0).abs() < 1e-9);
        assert!(encode_text(&p, "   ").is_err());
        let oov = encode_text(&p, "flibber jabber").unwrap();
        assert!(oov.normalized);
    }

    #[test]
    fn params_round_trip() {
        let p = params();
        let mut w = ByteWriter::new();
        p.write(&mut w);
        let bytes = w.into_inner();
        let mut r = ByteReader::new(&bytes);
        assert_eq!(EncoderParams::read(&mut r).unwrap(), p);
        assert!(r.is_at_end());
    }
}
