//! Checkpoint container: magic, version, then tagged length-prefixed
//! sections. Network sections are present only after policy training.

use std::path::Path;

use super::nets::{Agent, Discriminator, PolicyNet, ValueNet};
use crate::binio::{ByteReader, ByteWriter};
use crate::error::{Error, Result};
use crate::motion::SkillClass;
use crate::numerics::OptimizerState;
use crate::skill::{Codebook, SkillEncoderParams};
use crate::text::{EncoderParams, Vocabulary};

const MAGIC: &[u8; 8] = b"LSKCKPT\0";
const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    /// Text of the configuration that produced the checkpoint.
    pub config_echo: String,
    pub encoder: EncoderParams,
    pub codebook: Codebook,
    pub skill_encoder: SkillEncoderParams,
    /// Skills the policy was trained on, in conditioning order.
    pub skills: Vec<SkillClass>,
    pub agent: Option<Agent>,
    /// Completed training iterations.
    pub iteration: u64,
}

fn section(w: &mut ByteWriter, tag: &[u8; 4], body: impl FnOnce(&mut ByteWriter)) {
    let mut inner = ByteWriter::new();
    body(&mut inner);
    let bytes = inner.into_inner();
    w.bytes(tag);
    w.u64(bytes.len() as u64);
    w.bytes(&bytes);
}

impl Checkpoint {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = ByteWriter::new();
        w.bytes(MAGIC);
        w.u32(VERSION);
        section(&mut w, b"CONF", |s| s.str(&self.config_echo));
        section(&mut w, b"VOCB", |s| self.encoder.vocab.write(s));
        section(&mut w, b"ENCP", |s| self.encoder.write_weights(s));
        section(&mut w, b"CODE", |s| self.codebook.write(s));
        section(&mut w, b"SKIL", |s| self.skill_encoder.write(s));
        if let Some(a) = &self.agent {
            section(&mut w, b"POLI", |s| a.policy.write(s));
            section(&mut w, b"VALU", |s| a.value.write(s));
            section(&mut w, b"DISC", |s| a.disc.write(s));
            section(&mut w, b"OPTS", |s| a.write_optimizers(s));
        }
        section(&mut w, b"ITER", |s| {
            s.u64(self.iteration);
            s.u32(self.skills.len() as u32);
            for sk in &self.skills {
                s.u8(sk.index() as u8);
            }
        });
        w.into_inner()
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = ByteReader::new(bytes);
        if r.take(MAGIC.len(), "magic")? != MAGIC {
            return Err(Error::parse(0, "not a checkpoint file"));
        }
        let version = r.u32("version")?;
        if version != VERSION {
            return Err(Error::UnsupportedVersion {
                found: version,
                expected: VERSION,
            });
        }
        let mut config_echo = None;
        let mut vocab = None;
        let mut encoder = None;
        let mut codebook = None;
        let mut skill_encoder = None;
        let (mut policy, mut value, mut disc, mut opts) = (None, None, None, None);
        let mut iter = None;
        while !r.is_at_end() {
            let at = r.offset();
            let tag: [u8; 4] = r.take(4, "section tag")?.try_into().expect("4 bytes");
            let len = r.u64("section length")? as usize;
            let base = r.offset();
            let body = r.take(len, "section body")?;
            let mut s = ByteReader::nested(body, base);
            match &tag {
                b"CONF" => config_echo = Some(s.str("config")?),
                b"VOCB" => vocab = Some(Vocabulary::read(&mut s)?),
                b"ENCP" => {
                    let v = vocab.clone().ok_or_else(|| Error::parse(at, "encoder section before vocabulary"))?;
                    encoder = Some(EncoderParams::read_weights(v, &mut s)?);
                }
                b"CODE" => codebook = Some(Codebook::read(&mut s)?),
                b"SKIL" => skill_encoder = Some(SkillEncoderParams::read(&mut s)?),
                b"POLI" => policy = Some(PolicyNet::read(&mut s)?),
                b"VALU" => value = Some(ValueNet::read(&mut s)?),
                b"DISC" => disc = Some(Discriminator::read(&mut s)?),
                b"OPTS" => {
                    opts = Some((
                        OptimizerState::read(&mut s)?,
                        OptimizerState::read(&mut s)?,
                        OptimizerState::read(&mut s)?,
                    ))
                }
                b"ITER" => {
                    let it = s.u64("iteration")?;
                    let n = s.u32("skill count")? as usize;
                    let mut skills = Vec::with_capacity(n);
                    for _ in 0..n {
                        let o = s.offset();
                        let k = s.u8("skill")? as usize;
                        skills.push(SkillClass::from_index(k).ok_or_else(|| Error::parse(o, "unknown skill tag"))?);
                    }
                    iter = Some((it, skills));
                }
                _ => return Err(Error::parse(at, format!("unknown section tag {:?}", String::from_utf8_lossy(&tag)))),
            }
            if !s.is_at_end() {
                return Err(Error::parse(s.offset(), "section has trailing bytes"));
            }
        }
        let end = r.offset();
        let missing = |name: &str| Error::parse(end, format!("checkpoint lacks the {name} section"));
        let agent = match (policy, value, disc, opts) {
            (None, None, None, None) => None,
            (Some(policy), Some(value), Some(disc), Some((op, ov, od))) => Some(Agent {
                policy,
                value,
                disc,
                opt_policy: op,
                opt_value: ov,
                opt_disc: od,
            }),
            _ => return Err(Error::parse(end, "incomplete network sections")),
        };
        let (iteration, skills) = iter.ok_or_else(|| missing("ITER"))?;
        Ok(Self {
            config_echo: config_echo.ok_or_else(|| missing("CONF"))?,
            encoder: encoder.ok_or_else(|| missing("ENCP"))?,
            codebook: codebook.ok_or_else(|| missing("CODE"))?,
            skill_encoder: skill_encoder.ok_or_else(|| missing("SKIL"))?,
            skills,
            agent,
            iteration,
        })
    }
}

pub fn save_checkpoint(ckpt: &Checkpoint, path: impl AsRef<Path>) -> Result<()> {
    std::fs::write(path, ckpt.to_bytes())?;
    Ok(())
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<Checkpoint> {
    Checkpoint::from_bytes(&std::fs::read(path)?)
}
