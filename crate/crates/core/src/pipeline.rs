//! Stage 0: caption-encoder fine-tune, codebook, and skill-encoder fit.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::Result;
use crate::motion::{CaptionCorpus, Split};
use crate::skill::{build_skill_codebook, train_skill_encoder, Codebook, SkillEncoderParams, SkillLoss, SkillTrainConfig};
use crate::text::{encode_text, finetune, EncoderParams, EncoderShape, FinetuneConfig, FinetuneLog, Vocabulary};
use crate::trainer::stream_seed;

#[derive(Debug, Clone, PartialEq)]
pub struct SkillSpaceConfig {
    pub encoder: EncoderShape,
    pub finetune: FinetuneConfig,
    pub skill_hidden: usize,
    pub latent_dim: usize,
    pub skill_train: SkillTrainConfig,
}

impl Default for SkillSpaceConfig {
    fn default() -> Self {
        Self {
            encoder: EncoderShape::default(),
            finetune: FinetuneConfig::default(),
            skill_hidden: 32,
            latent_dim: 16,
            skill_train: SkillTrainConfig::default(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct SkillSpace {
    pub raw_encoder: EncoderParams,
    pub encoder: EncoderParams,
    pub codebook: Codebook,
    pub skill_encoder: SkillEncoderParams,
    pub finetune_log: FinetuneLog,
    pub skill_log: Vec<SkillLoss>,
}

/// The untrained encoder `build_skill_space` starts from for the same
/// corpus, shape and seed.
pub fn raw_encoder(corpus: &CaptionCorpus, shape: EncoderShape, seed: u64) -> Result<EncoderParams> {
    let mut rng = ChaCha8Rng::seed_from_u64(stream_seed(seed, 0, 1));
    EncoderParams::init(Vocabulary::build(corpus), shape, &mut rng)
}

pub fn build_skill_space(corpus: &CaptionCorpus, cfg: &SkillSpaceConfig, seed: u64) -> Result<SkillSpace> {
    let vocab = Vocabulary::build(corpus);
    let mut rng = ChaCha8Rng::seed_from_u64(stream_seed(seed, 0, 1));
    let raw_encoder = EncoderParams::init(vocab, cfg.encoder, &mut rng)?;
    let (encoder, finetune_log) = finetune(&raw_encoder, corpus, &cfg.finetune, stream_seed(seed, 0, 2))?;
    let codebook = build_skill_codebook(&encoder)?;
    let data = corpus
        .split(Split::Train)
        .map(|e| {
            let k = codebook.index_of_skill(e.label).expect("every class has a code");
            Ok((encode_text(&encoder, &e.caption)?, k))
        })
        .collect::<Result<Vec<_>>>()?;
    let init = SkillEncoderParams::init(codebook.dim(), cfg.skill_hidden, cfg.latent_dim, &mut rng)?;
    let (skill_encoder, skill_log) = train_skill_encoder(&init, &data, &codebook, &cfg.skill_train, &mut rng)?;
    Ok(SkillSpace {
        raw_encoder,
        encoder,
        codebook,
        skill_encoder,
        finetune_log,
        skill_log,
    })
}
