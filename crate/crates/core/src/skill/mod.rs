//! Codebook of label features, nearest-code quantization, and the skill
//! encoder that maps codes onto the unit sphere.

mod encoder;

use std::collections::BTreeMap;

use crate::binio::{ByteReader, ByteWriter};
use crate::error::{Error, Result};
use crate::motion::{BaseClass, CaptionCorpus, SkillClass, Split};
use crate::text::{encode_text, EncoderParams, TextFeature};

pub use encoder::{
    skill_encode, skill_encoder_loss, train_skill_encoder, SkillEncoderParams, SkillLatent, SkillLoss,
    SkillTrainConfig,
};

#[derive(Debug, Clone, PartialEq)]
pub struct Codebook {
    pub entries: Vec<TextFeature>,
    pub labels: Vec<String>,
}

impl Codebook {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.entries.first().map_or(0, |e| e.dim())
    }

    pub fn index_of(&self, label: &str) -> Option<usize> {
        self.labels.iter().position(|l| l == label)
    }

    pub fn index_of_skill(&self, skill: SkillClass) -> Option<usize> {
        self.index_of(skill.label())
    }

    /// Skill class of entry `k`, when its label is a canonical class label.
    pub fn skill(&self, k: usize) -> Option<SkillClass> {
        SkillClass::ALL.iter().copied().find(|s| s.label() == self.labels[k])
    }

    pub fn min_entry_distance(&self) -> f64 {
        let mut m = f64::INFINITY;
        for i in 0..self.len() {
            for j in i + 1..self.len() {
                m = m.min(self.entries[i].distance(&self.entries[j]));
            }
        }
        m
    }

    pub fn write(&self, w: &mut ByteWriter) {
        w.u32(self.len() as u32);
        for (l, e) in self.labels.iter().zip(&self.entries) {
            w.str(l);
            w.f64s(&e.values);
        }
    }

    pub fn read(r: &mut ByteReader<'_>) -> Result<Self> {
        let k = r.u32("codebook size")? as usize;
        let (mut labels, mut entries) = (Vec::new(), Vec::new());
        for _ in 0..k {
            labels.push(r.str("codebook label")?);
            let at = r.offset();
            let values = r.f64s("codebook entry")?;
            if entries.first().is_some_and(|e: &TextFeature| e.dim() != values.len()) {
                return Err(Error::parse(at, "codebook entries differ in width"));
            }
            entries.push(TextFeature {
                values,
                normalized: true,
            });
        }
        Ok(Self { entries, labels })
    }
}

/// Entry `k` is the encoder's feature of `labels[k]`.
pub fn build_codebook<S: AsRef<str>>(encoder: &EncoderParams, labels: &[S]) -> Result<Codebook> {
    if labels.is_empty() {
        return Err(Error::contract("codebook needs at least one label"));
    }
    let mut seen = BTreeMap::new();
    for (i, l) in labels.iter().enumerate() {
        if let Some(j) = seen.insert(l.as_ref(), i) {
            return Err(Error::contract(format!("duplicate codebook label '{}' at {j} and {i}", l.as_ref())));
        }
    }
    let entries = labels.iter().map(|l| encode_text(encoder, l.as_ref())).collect::<Result<_>>()?;
    Ok(Codebook {
        entries,
        labels: labels.iter().map(|l| l.as_ref().to_string()).collect(),
    })
}

/// Codebook over every skill class, in class order.
pub fn build_skill_codebook(encoder: &EncoderParams) -> Result<Codebook> {
    let labels: Vec<&str> = SkillClass::ALL.iter().map(|s| s.label()).collect();
    build_codebook(encoder, &labels)
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Nearest entry by Euclidean distance; ties go to the lowest index.
pub fn quantize<'c>(f: &TextFeature, codebook: &'c Codebook) -> Result<(usize, &'c TextFeature)> {
    if codebook.is_empty() {
        return Err(Error::contract("empty codebook"));
    }
    if f.dim() != codebook.dim() {
        return Err(Error::contract(format!(
            "feature width {} does not match codebook width {}",
            f.dim(),
            codebook.dim()
        )));
    }
    let mut best = (0, sq_dist(&f.values, &codebook.entries[0].values));
    for (k, e) in codebook.entries.iter().enumerate().skip(1) {
        let d = sq_dist(&f.values, &e.values);
        if d < best.1 {
            best = (k, d);
        }
    }
    Ok((best.0, &codebook.entries[best.0]))
}

/// Like [`quantize`], but rejects features farther than `tau` from every entry.
pub fn quantize_within<'c>(f: &TextFeature, codebook: &'c Codebook, tau: Option<f64>) -> Result<Option<(usize, &'c TextFeature)>> {
    let (k, e) = quantize(f, codebook)?;
    match tau {
        Some(t) if f.distance(e) > t => Ok(None),
        _ => Ok(Some((k, e))),
    }
}

/// Held-out caption accuracy per base class (exact skill match).
#[derive(Debug, Clone, PartialEq)]
pub struct AccuracyReport {
    pub per_class: Vec<(BaseClass, usize, usize)>,
}

impl AccuracyReport {
    pub fn accuracy(&self, class: BaseClass) -> Option<f64> {
        self.per_class
            .iter()
            .find(|(c, _, _)| *c == class)
            .filter(|(_, _, n)| *n > 0)
            .map(|(_, k, n)| *k as f64 / *n as f64)
    }

    pub fn aggregate(&self) -> f64 {
        let (k, n) = self.per_class.iter().fold((0, 0), |(a, b), (_, k, n)| (a + k, b + n));
        if n == 0 {
            0.0
        } else {
            k as f64 / n as f64
        }
    }
}

pub fn caption_accuracy(encoder: &EncoderParams, codebook: &Codebook, corpus: &CaptionCorpus, split: Split) -> Result<AccuracyReport> {
    let mut tally: BTreeMap<BaseClass, (usize, usize)> = BTreeMap::new();
    for e in corpus.split(split) {
        let f = encode_text(encoder, &e.caption)?;
        let (k, _) = quantize(&f, codebook)?;
        let t = tally.entry(e.label.base()).or_default();
        t.1 += 1;
        if codebook.skill(k) == Some(e.label) {
            t.0 += 1;
        }
    }
    Ok(AccuracyReport {
        per_class: tally.into_iter().map(|(c, (k, n))| (c, k, n)).collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cb(rows: &[&[f64]]) -> Codebook {
        Codebook {
            entries: rows
                .iter()
                .map(|r| TextFeature {
                    values: r.to_vec(),
                    normalized: false,
                })
                .collect(),
            labels: (0..rows.len()).map(|i| format!("l{i}")).collect(),
        }
    }

    fn feat(v: &[f64]) -> TextFeature {
        TextFeature {
            values: v.to_vec(),
            normalized: false,
        }
    }

    #[test]
    fn exact_entry_and_ties() {
        let c = cb(&[&[1.0, 0.0], &[0.0, 1.0], &[-1.0, 0.0], &[0.0, -1.0]]);
        assert_eq!(quantize(&feat(&[-1.0, 0.0]), &c).unwrap().0, 2);
        assert_eq!(quantize(&feat(&[0.0, 0.0]), &c).unwrap().0, 0);
        assert_eq!(quantize(&feat(&[-0.5, -0.5]), &c).unwrap().0, 2);
        assert!(quantize(&feat(&[1.0]), &c).is_err());
    }

    #[test]
    fn threshold_rejects_far_queries() {
        let c = cb(&[&[1.0, 0.0], &[0.0, 1.0]]);
        assert!(quantize_within(&feat(&[5.0, 5.0]), &c, Some(1.0)).unwrap().is_none());
        assert_eq!(quantize_within(&feat(&[5.0, 5.0]), &c, None).unwrap().unwrap().0, 0);
    }

    #[test]
    fn duplicate_labels_rejected() {
        use crate::motion::generate_caption_corpus;
        use crate::text::{EncoderShape, Vocabulary};
        use rand::SeedableRng;
        let vocab = Vocabulary::build(&generate_caption_corpus(0));
        let enc = EncoderParams::init(vocab, EncoderShape::default(), &mut rand_chacha::ChaCha8Rng::seed_from_u64(0)).unwrap();
        assert!(build_codebook(&enc, &["run", "walk", "run"]).is_err());
        assert!(build_codebook::<&str>(&enc, &[]).is_err());
        let a = build_skill_codebook(&enc).unwrap();
        assert_eq!(a, build_skill_codebook(&enc).unwrap());
        assert_eq!(a.entries[1], encode_text(&enc, "run").unwrap());
        for (k, e) in a.entries.iter().enumerate() {
            assert_eq!(quantize(e, &a).unwrap().0, k);
        }
    }
}
