//! Binary dataset file: magic, version, then length-prefixed clips.
//! All integers and floats are little-endian.

use std::path::Path;

use super::{Dataset, Frame, MotionClip, SkillClass, NUM_JOINTS};
use crate::binio::{ByteReader, ByteWriter};
use crate::error::{Error, Result};

const MAGIC: &[u8; 8] = b"LSKMOTN\0";
const VERSION: u32 = 1;

pub(crate) fn encode_dataset(ds: &Dataset) -> Vec<u8> {
    let mut w = ByteWriter::new();
    w.bytes(MAGIC);
    w.u32(VERSION);
    w.u64(ds.clips.len() as u64);
    for clip in &ds.clips {
        w.u8(clip.skill.index() as u8);
        w.u32(clip.captions.len() as u32);
        for c in &clip.captions {
            w.str(c);
        }
        w.u64(clip.frames.len() as u64);
        for f in &clip.frames {
            w.f64(f.root_pos[0]);
            w.f64(f.root_pos[1]);
            w.f64(f.root_yaw);
            for v in f.joints.iter().chain(&f.joint_vel) {
                w.f64(*v);
            }
            w.f64(f.root_vel[0]);
            w.f64(f.root_vel[1]);
        }
    }
    w.into_inner()
}

pub(crate) fn decode_dataset(bytes: &[u8]) -> Result<Dataset> {
    let mut r = ByteReader::new(bytes);
    let magic = r.take(MAGIC.len(), "magic")?;
    if magic != MAGIC {
        return Err(Error::parse(0, "not a motion dataset file"));
    }
    let version = r.u32("version")?;
    if version != VERSION {
        return Err(Error::UnsupportedVersion {
            found: version,
            expected: VERSION,
        });
    }
    let n_clips = r.u64("clip count")? as usize;
    let mut clips = Vec::with_capacity(n_clips.min(1 << 16));
    for _ in 0..n_clips {
        let at = r.offset();
        let skill = SkillClass::from_index(r.u8("skill tag")? as usize)
            .ok_or_else(|| Error::parse(at, "unknown skill tag"))?;
        let n_caps = r.u32("caption count")? as usize;
        let mut captions = Vec::with_capacity(n_caps.min(1024));
        for _ in 0..n_caps {
            captions.push(r.str("caption")?);
        }
        let n_frames = r.u64("frame count")? as usize;
        if r.remaining() / (Frame::SCALARS * 8) < n_frames {
            return Err(Error::parse(r.offset(), "truncated frame data"));
        }
        let mut frames = Vec::with_capacity(n_frames);
        for _ in 0..n_frames {
            let mut f = Frame::rest();
            f.root_pos = [r.f64("frame")?, r.f64("frame")?];
            f.root_yaw = r.f64("frame")?;
            for j in 0..NUM_JOINTS {
                f.joints[j] = r.f64("frame")?;
            }
            for j in 0..NUM_JOINTS {
                f.joint_vel[j] = r.f64("frame")?;
            }
            f.root_vel = [r.f64("frame")?, r.f64("frame")?];
            frames.push(f);
        }
        let clip = MotionClip { skill, frames, captions };
        clip.validate().map_err(|e| Error::parse(at, e.to_string()))?;
        clips.push(clip);
    }
    if !r.is_at_end() {
        return Err(Error::parse(r.offset(), "trailing bytes after dataset"));
    }
    Ok(Dataset { clips })
}

pub fn save_dataset(ds: &Dataset, path: impl AsRef<Path>) -> Result<()> {
    std::fs::write(path, encode_dataset(ds))?;
    Ok(())
}

pub fn load_dataset(path: impl AsRef<Path>) -> Result<Dataset> {
    decode_dataset(&std::fs::read(path)?)
}
