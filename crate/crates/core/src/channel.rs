//! Channel realizations, orthogonal pilots and MMSE estimation.

use std::io::{Read, Write};

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::system::{EstimationStats, SystemConfig};
use crate::{CMatrix, C64};

/// One channel realization: true channel `G`, its estimate `hat G` and the
/// estimation error `Xi`, related by `G = hat G - Xi`. All are `N x 2K`.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelSample {
    pub channel: CMatrix,
    pub estimate: CMatrix,
    pub error: CMatrix,
}

/// Deterministic generator for trial `stream` of a run seeded with `seed`.
///
/// Every trial gets its own ChaCha stream, so results do not depend on how
/// trials are spread over worker threads.
pub fn trial_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// One `CN(0, var)` draw.
#[inline]
pub fn cn<R: Rng + ?Sized>(rng: &mut R, var: f64) -> C64 {
    let s = (0.5 * var).sqrt();
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    C64::new(s * re, s * im)
}

/// `rows x col_var.len()` matrix with independent `CN(0, col_var[j])` entries
/// in column `j`.
pub fn cn_matrix<R: Rng + ?Sized>(rng: &mut R, rows: usize, col_var: &[f64]) -> CMatrix {
    let mut m = CMatrix::zeros(rows, col_var.len());
    for (j, &v) in col_var.iter().enumerate() {
        for i in 0..rows {
            m[(i, j)] = cn(rng, v);
        }
    }
    m
}

/// True channel `G = H D^{1/2}` with i.i.d. `CN(0,1)` small-scale fading.
pub fn draw_channel<R: Rng + ?Sized>(cfg: &SystemConfig, rng: &mut R) -> CMatrix {
    cn_matrix(rng, cfg.n_antennas, &cfg.large_scale)
}

/// Draws `hat G` and `Xi` directly from their MMSE distributions.
pub fn draw_channel_sample<R: Rng + ?Sized>(cfg: &SystemConfig, stats: &EstimationStats, rng: &mut R) -> ChannelSample {
    let estimate = cn_matrix(rng, cfg.n_antennas, &stats.est_var);
    let error = cn_matrix(rng, cfg.n_antennas, &stats.err_var);
    let channel = &estimate - &error;
    ChannelSample {
        channel,
        estimate,
        error,
    }
}

/// `2K x tau` pilot matrix with orthonormal rows taken from the normalized
/// DFT matrix, so that `Phi Phi^H = I`.
pub fn pilot_matrix(n_users: usize, tau: usize) -> Result<CMatrix> {
    if tau < n_users {
        return Err(Error::InvalidConfig(format!(
            "{tau} pilot symbols cannot be orthogonal across {n_users} users"
        )));
    }
    let scale = 1.0 / (tau as f64).sqrt();
    Ok(CMatrix::from_fn(n_users, tau, |k, t| {
        let phase = -2.0 * std::f64::consts::PI * ((k * t) % tau) as f64 / tau as f64;
        C64::from_polar(scale, phase)
    }))
}

/// Simulates the training phase for a given channel: the relay receives
/// `Y = sqrt(tau p_P) G Phi + N` and forms the MMSE estimate
/// `hat G = Y Phi^H tilde D / sqrt(tau p_P)`.
pub fn estimate_from_training<R: Rng + ?Sized>(
    cfg: &SystemConfig,
    channel: &CMatrix,
    pilots: &CMatrix,
    rng: &mut R,
) -> ChannelSample {
    let tau = pilots.ncols();
    let tp = tau as f64 * cfg.pilot_power;
    let noise = cn_matrix(rng, cfg.n_antennas, &vec![cfg.noise_var; tau]);
    let received = channel * pilots * C64::from(tp.sqrt()) + noise;
    let mut estimate = received * pilots.adjoint() * C64::from(1.0 / tp.sqrt());
    for (j, &s) in cfg.large_scale.iter().enumerate() {
        let shrink = tp * s / (tp * s + cfg.noise_var);
        estimate.column_mut(j).scale_mut(shrink);
    }
    let error = &estimate - channel;
    ChannelSample {
        channel: channel.clone(),
        estimate,
        error,
    }
}

const MAGIC: &[u8; 4] = b"TWRC";
const VERSION: u32 = 1;

/// Writes samples as: magic `TWRC`, then little-endian `u32` version, sample
/// count, rows and columns, then for every sample the channel, estimate and
/// error matrices in column-major order as `complex64` (two `f32`).
pub fn write_samples<W: Write>(w: &mut W, samples: &[ChannelSample]) -> std::io::Result<()> {
    let (rows, cols) = samples.first().map_or((0, 0), |s| s.channel.shape());
    w.write_all(MAGIC)?;
    for x in [VERSION, samples.len() as u32, rows as u32, cols as u32] {
        w.write_u32::<LittleEndian>(x)?;
    }
    for s in samples {
        for m in [&s.channel, &s.estimate, &s.error] {
            for z in m.iter() {
                w.write_f32::<LittleEndian>(z.re as f32)?;
                w.write_f32::<LittleEndian>(z.im as f32)?;
            }
        }
    }
    Ok(())
}

/// Reads the format produced by [`write_samples`].
pub fn read_samples<R: Read>(r: &mut R) -> Result<Vec<ChannelSample>> {
    let io = |e: std::io::Error| Error::Format(e.to_string());
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic).map_err(io)?;
    if &magic != MAGIC {
        return Err(Error::Format("bad magic".into()));
    }
    let mut header = [0u32; 4];
    for h in header.iter_mut() {
        *h = r.read_u32::<LittleEndian>().map_err(io)?;
    }
    let [version, count, rows, cols] = header.map(|x| x as usize);
    if version != VERSION as usize {
        return Err(Error::Format(format!("unsupported version {version}")));
    }
    let read_matrix = |r: &mut R| -> Result<CMatrix> {
        let mut m = CMatrix::zeros(rows, cols);
        for z in m.iter_mut() {
            let re = r.read_f32::<LittleEndian>().map_err(io)?;
            let im = r.read_f32::<LittleEndian>().map_err(io)?;
            *z = C64::new(re as f64, im as f64);
        }
        Ok(m)
    };
    (0..count)
        .map(|_| {
            Ok(ChannelSample {
                channel: read_matrix(r)?,
                estimate: read_matrix(r)?,
                error: read_matrix(r)?,
            })
        })
        .collect()
}
