//! Little-endian binary formats.
//!
//! Every file starts with a 24-byte header:
//!
//! | bytes | content                         |
//! |-------|---------------------------------|
//! | 0..6  | magic, e.g. `EVSLAT`            |
//! | 6..8  | zero padding                    |
//! | 8..12 | format version (`u32`)          |
//! | 12..16| frames `F` (`u32`)              |
//! | 16..20| dim `D` (`u32`)                 |
//! | 20..24| record count (`u32`)            |
//!
//! followed by `f64` payload values (plus `u32` keys for caches).

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::latent::VideoLatent;
use crate::models::{AttentionShape, SpatialWorld, TemporalWorld, ToyAttentionDenoiser};
use crate::sfi::{FeatureCache, FeatureKey, FeatureKind};
use crate::Scalar;

pub const FORMAT_VERSION: u32 = 1;
pub const HEADER_LEN: usize = 24;

pub const MAGIC_LATENT: &[u8; 6] = b"EVSLAT";
pub const MAGIC_TRAJECTORY: &[u8; 6] = b"EVSTRJ";
pub const MAGIC_WORLD: &[u8; 6] = b"EVSWLD";
pub const MAGIC_NET: &[u8; 6] = b"EVSNET";
pub const MAGIC_CACHE: &[u8; 6] = b"EVSCAC";

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Header {
    pub magic: [u8; 6],
    pub version: u32,
    pub frames: u32,
    pub dim: u32,
    pub count: u32,
}

fn to_u32(x: usize, what: &'static str) -> Result<u32> {
    u32::try_from(x).map_err(|_| Error::Format {
        what,
        reason: format!("{x} does not fit in 32 bits"),
    })
}

impl Header {
    fn new(magic: &[u8; 6], frames: usize, dim: usize, count: usize) -> Result<Self> {
        Ok(Self {
            magic: *magic,
            version: FORMAT_VERSION,
            frames: to_u32(frames, "header")?,
            dim: to_u32(dim, "header")?,
            count: to_u32(count, "header")?,
        })
    }

    pub fn write_to(&self, w: &mut impl Write) -> Result<()> {
        let mut buf = [0u8; HEADER_LEN];
        buf[..6].copy_from_slice(&self.magic);
        buf[8..12].copy_from_slice(&self.version.to_le_bytes());
        buf[12..16].copy_from_slice(&self.frames.to_le_bytes());
        buf[16..20].copy_from_slice(&self.dim.to_le_bytes());
        buf[20..24].copy_from_slice(&self.count.to_le_bytes());
        w.write_all(&buf)?;
        Ok(())
    }

    pub fn read_from(r: &mut impl Read, expected: &[u8; 6], what: &'static str) -> Result<Self> {
        let mut buf = [0u8; HEADER_LEN];
        r.read_exact(&mut buf).map_err(|e| Error::Format {
            what,
            reason: format!("truncated header: {e}"),
        })?;
        let field = |i: usize| u32::from_le_bytes(buf[i..i + 4].try_into().unwrap());
        let mut magic = [0u8; 6];
        magic.copy_from_slice(&buf[..6]);
        if &magic != expected {
            return Err(Error::Format {
                what,
                reason: format!(
                    "bad magic {:?}, expected {:?}",
                    String::from_utf8_lossy(&magic),
                    String::from_utf8_lossy(expected)
                ),
            });
        }
        if buf[6..8] != [0, 0] {
            return Err(Error::Format {
                what,
                reason: "non-zero header padding".into(),
            });
        }
        let h = Self {
            magic,
            version: field(8),
            frames: field(12),
            dim: field(16),
            count: field(20),
        };
        if h.version != FORMAT_VERSION {
            return Err(Error::Format {
                what,
                reason: format!("version {} (supported: {FORMAT_VERSION})", h.version),
            });
        }
        Ok(h)
    }
}

fn write_f64s<T: Scalar>(w: &mut impl Write, xs: &[T]) -> Result<()> {
    for x in xs {
        w.write_all(&x.as_f64().to_le_bytes())?;
    }
    Ok(())
}

fn read_f64s<T: Scalar>(r: &mut impl Read, n: usize, what: &'static str) -> Result<Vec<T>> {
    let mut buf = vec![0u8; n * 8];
    r.read_exact(&mut buf).map_err(|e| Error::Format {
        what,
        reason: format!("truncated payload: {e}"),
    })?;
    Ok(buf
        .chunks_exact(8)
        .map(|c| T::lit(f64::from_le_bytes(c.try_into().unwrap())))
        .collect())
}

fn read_u32(r: &mut impl Read, what: &'static str) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b).map_err(|e| Error::Format {
        what,
        reason: format!("truncated record: {e}"),
    })?;
    Ok(u32::from_le_bytes(b))
}

fn expect_eof(r: &mut impl Read, what: &'static str) -> Result<()> {
    let mut b = [0u8; 1];
    match r.read(&mut b)? {
        0 => Ok(()),
        _ => Err(Error::Format {
            what,
            reason: "trailing bytes".into(),
        }),
    }
}

fn write_latent_seq<T: Scalar>(w: &mut impl Write, magic: &[u8; 6], latents: &[VideoLatent<T>]) -> Result<()> {
    let (f, d) = latents.first().map(|l| l.shape()).unwrap_or((0, 0));
    if let Some(bad) = latents.iter().find(|l| l.shape() != (f, d)) {
        return Err(Error::shape(format!("{f}x{d}"), format!("{}x{}", bad.frames(), bad.dim())));
    }
    Header::new(magic, f, d, latents.len())?.write_to(w)?;
    for l in latents {
        write_f64s(w, l.as_slice())?;
    }
    Ok(())
}

fn read_latent_seq<T: Scalar>(r: &mut impl Read, magic: &[u8; 6], what: &'static str) -> Result<Vec<VideoLatent<T>>> {
    let h = Header::read_from(r, magic, what)?;
    let (f, d) = (h.frames as usize, h.dim as usize);
    let out = (0..h.count)
        .map(|_| {
            let data = read_f64s(r, f * d, what)?;
            VideoLatent::from_vec(f, d, data).map_err(|e| Error::Format {
                what,
                reason: e.to_string(),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    expect_eof(r, what)?;
    Ok(out)
}

/// Writes one or more same-shaped latents.
pub fn write_latents<T: Scalar>(w: &mut impl Write, latents: &[VideoLatent<T>]) -> Result<()> {
    write_latent_seq(w, MAGIC_LATENT, latents)
}

pub fn read_latents<T: Scalar>(r: &mut impl Read) -> Result<Vec<VideoLatent<T>>> {
    read_latent_seq(r, MAGIC_LATENT, "latent file")
}

/// Writes a sequence of intermediate latents from a sampling run.
pub fn write_trajectory<T: Scalar>(w: &mut impl Write, steps: &[VideoLatent<T>]) -> Result<()> {
    write_latent_seq(w, MAGIC_TRAJECTORY, steps)
}

pub fn read_trajectory<T: Scalar>(r: &mut impl Read) -> Result<Vec<VideoLatent<T>>> {
    read_latent_seq(r, MAGIC_TRAJECTORY, "trajectory file")
}

/// Payload: `sigma_s, sigma_t, rho, weights[K], sharp means[K*D], blurred means[K*D]`.
pub fn write_worlds<T: Scalar>(w: &mut impl Write, sw: &SpatialWorld<T>, tw: &TemporalWorld<T>) -> Result<()> {
    let k = sw.means().len();
    let d = sw.means()[0].len();
    if tw.means().len() != k || tw.means()[0].len() != d {
        return Err(Error::shape(format!("{k} modes of dim {d}"), format!("{} modes", tw.means().len())));
    }
    Header::new(MAGIC_WORLD, tw.frames(), d, k)?.write_to(w)?;
    write_f64s(w, &[sw.sigma(), tw.sigma(), tw.rho()])?;
    write_f64s(w, sw.weights())?;
    for m in sw.means().iter().chain(tw.means()) {
        write_f64s(w, m)?;
    }
    Ok(())
}

pub fn read_worlds<T: Scalar>(r: &mut impl Read) -> Result<(SpatialWorld<T>, TemporalWorld<T>)> {
    const WHAT: &str = "world file";
    let h = Header::read_from(r, MAGIC_WORLD, WHAT)?;
    let (f, d, k) = (h.frames as usize, h.dim as usize, h.count as usize);
    let scalars: Vec<T> = read_f64s(r, 3, WHAT)?;
    let weights: Vec<T> = read_f64s(r, k, WHAT)?;
    let mut means = Vec::with_capacity(2 * k);
    for _ in 0..2 * k {
        means.push(read_f64s::<T>(r, d, WHAT)?);
    }
    expect_eof(r, WHAT)?;
    let blurred = means.split_off(k);
    let bad = |e: Error| Error::Format {
        what: WHAT,
        reason: e.to_string(),
    };
    let sw = SpatialWorld::new(means, weights.clone(), scalars[0]).map_err(bad)?;
    let tw = TemporalWorld::new(blurred, weights, scalars[1], scalars[2], f).map_err(bad)?;
    Ok((sw, tw))
}

/// Payload: `blocks, total_steps, modes` (as `f64`) then the flat parameters.
pub fn write_net<T: Scalar>(w: &mut impl Write, net: &ToyAttentionDenoiser<T>) -> Result<()> {
    let s = net.shape();
    Header::new(MAGIC_NET, s.frames, s.dim, net.param_count())?.write_to(w)?;
    write_f64s(w, &[T::lit(s.blocks as f64), T::lit(s.total_steps as f64), T::lit(s.modes as f64)])?;
    write_f64s(w, net.params())
}

pub fn read_net<T: Scalar>(r: &mut impl Read) -> Result<ToyAttentionDenoiser<T>> {
    const WHAT: &str = "network file";
    let h = Header::read_from(r, MAGIC_NET, WHAT)?;
    let dims: Vec<f64> = read_f64s(r, 3, WHAT)?;
    if dims.iter().any(|x| x.fract() != 0.0 || *x < 1.0) {
        return Err(Error::Format {
            what: WHAT,
            reason: format!("bad shape fields {dims:?}"),
        });
    }
    let shape = AttentionShape {
        frames: h.frames as usize,
        dim: h.dim as usize,
        blocks: dims[0] as usize,
        total_steps: dims[1] as usize,
        modes: dims[2] as usize,
    };
    let params = read_f64s(r, h.count as usize, WHAT)?;
    expect_eof(r, WHAT)?;
    ToyAttentionDenoiser::from_params(shape, params).map_err(|e| Error::Format {
        what: WHAT,
        reason: e.to_string(),
    })
}

/// One record per entry: `u32` timestep, layer, kind code, then `F*D` values.
pub fn write_cache<T: Scalar>(w: &mut impl Write, cache: &FeatureCache<T>, frames: usize, dim: usize) -> Result<()> {
    Header::new(MAGIC_CACHE, frames, dim, cache.len())?.write_to(w)?;
    for (key, values) in cache.iter() {
        if values.len() != frames * dim {
            return Err(Error::shape(frames * dim, values.len()));
        }
        for x in [to_u32(key.timestep, "cache")?, to_u32(key.layer, "cache")?, key.kind.code()] {
            w.write_all(&x.to_le_bytes())?;
        }
        write_f64s(w, values)?;
    }
    Ok(())
}

pub fn read_cache<T: Scalar>(r: &mut impl Read) -> Result<FeatureCache<T>> {
    const WHAT: &str = "cache file";
    let h = Header::read_from(r, MAGIC_CACHE, WHAT)?;
    let n = h.frames as usize * h.dim as usize;
    let mut cache = FeatureCache::new();
    for _ in 0..h.count {
        let t = read_u32(r, WHAT)? as usize;
        let l = read_u32(r, WHAT)? as usize;
        let code = read_u32(r, WHAT)?;
        let kind = FeatureKind::from_code(code).ok_or_else(|| Error::Format {
            what: WHAT,
            reason: format!("unknown feature kind {code}"),
        })?;
        let values = read_f64s(r, n, WHAT)?;
        cache.insert(FeatureKey::new(t, l, kind), values).map_err(|e| Error::Format {
            what: WHAT,
            reason: e.to_string(),
        })?;
    }
    expect_eof(r, WHAT)?;
    Ok(cache)
}

/// Creates `path` and hands a buffered writer to `f`.
pub fn save<P: AsRef<Path>>(path: P, f: impl FnOnce(&mut BufWriter<File>) -> Result<()>) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    f(&mut w)?;
    w.flush()?;
    Ok(())
}

/// Opens `path` and hands a buffered reader to `f`.
pub fn load<P: AsRef<Path>, R>(path: P, f: impl FnOnce(&mut BufReader<File>) -> Result<R>) -> Result<R> {
    let mut r = BufReader::new(File::open(path)?);
    f(&mut r)
}
