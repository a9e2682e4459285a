//! Reproducible Wiener increments.
//!
//! Every path owns an independent stream: the pair `(master_seed, path_index)`
//! is folded by [`path_seed`] into a 64-bit seed, expanded with SplitMix64
//! into a 256-bit ChaCha8 key, and the ChaCha8 block stream is turned into
//! standard normals with the Box-Muller transform (both outputs of each pair
//! are used, cosine first). Paths are never split off one sequential stream,
//! so results do not depend on the order in which paths are generated.
//!
//! Coarse grids are built by [`WienerGrid::coarsen`]. A coarse increment is
//! always the left-to-right sum of the originally generated increments it
//! covers, whichever chain of coarsenings produced it, so nested coarsening is
//! bit-identical to a single coarsening by the product factor. All step sizes
//! of a convergence study therefore see the same Brownian path.

use std::io::{Read, Write};
use std::sync::Arc;

use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};
use serde::Serialize;

use crate::error::{Result, SisError};

const GOLDEN_GAMMA: u64 = 0x9E37_79B9_7F4A_7C15;
const MIX_MUL_1: u64 = 0xBF58_476D_1CE4_E5B9;
const MIX_MUL_2: u64 = 0x94D0_49BB_1331_11EB;

/// SplitMix64 finalizer.
#[inline]
pub fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(MIX_MUL_1);
    z = (z ^ (z >> 27)).wrapping_mul(MIX_MUL_2);
    z ^ (z >> 31)
}

/// Seed of path `path_index`:
/// `mix64(master_seed ^ mix64(path_index + GOLDEN_GAMMA))`.
pub fn path_seed(master_seed: u64, path_index: u64) -> u64 {
    mix64(master_seed ^ mix64(path_index.wrapping_add(GOLDEN_GAMMA)))
}

/// Standard normal source for one path.
pub struct NormalStream {
    rng: ChaCha8Rng,
    spare: Option<f64>,
}

impl NormalStream {
    pub fn new(master_seed: u64, path_index: u64) -> Self {
        let mut state = path_seed(master_seed, path_index);
        let mut key = [0u8; 32];
        for chunk in key.chunks_exact_mut(8) {
            state = state.wrapping_add(GOLDEN_GAMMA);
            chunk.copy_from_slice(&mix64(state).to_le_bytes());
        }
        NormalStream {
            rng: ChaCha8Rng::from_seed(key),
            spare: None,
        }
    }

    /// Uniform on `[0, 1)` with 53 random bits.
    #[inline]
    fn uniform(&mut self) -> f64 {
        (self.rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    #[inline]
    pub fn next_normal(&mut self) -> f64 {
        if let Some(z) = self.spare.take() {
            return z;
        }
        // 1 - u lies in (0, 1], so the log is finite
        let radius = (-2.0 * (1.0 - self.uniform()).ln()).sqrt();
        let angle = std::f64::consts::TAU * self.uniform();
        let (s, c) = angle.sin_cos();
        self.spare = Some(radius * s);
        radius * c
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct SeedInfo {
    pub master_seed: u64,
    pub path_index: u64,
}

/// Uniform time grid with Gaussian increments `dW_i ~ N(0, dt)`.
#[derive(Debug, Clone)]
pub struct WienerGrid {
    dt: f64,
    increments: Arc<[f64]>,
    /// Increments as generated, shared by every coarsening of this grid.
    base: Arc<[f64]>,
    base_dt: f64,
    /// Number of base increments per increment of this grid.
    factor: usize,
    seed: SeedInfo,
}

impl PartialEq for WienerGrid {
    fn eq(&self, other: &Self) -> bool {
        self.dt == other.dt && self.increments == other.increments && self.seed == other.seed
    }
}

impl WienerGrid {
    pub fn generate(master_seed: u64, path_index: u64, n_steps: usize, dt: f64) -> Result<Self> {
        if n_steps == 0 {
            return Err(SisError::Argument("n_steps must be >= 1".into()));
        }
        if !(dt.is_finite() && dt > 0.0) {
            return Err(SisError::Argument(format!("dt = {dt} must be finite and > 0")));
        }
        let mut stream = NormalStream::new(master_seed, path_index);
        let scale = dt.sqrt();
        let increments: Vec<f64> = (0..n_steps).map(|_| scale * stream.next_normal()).collect();
        Self::from_increments(
            dt,
            increments,
            SeedInfo {
                master_seed,
                path_index,
            },
        )
    }

    /// Builds a grid from explicit increments (test rigs, restored dumps).
    pub fn from_increments(dt: f64, increments: Vec<f64>, seed: SeedInfo) -> Result<Self> {
        if increments.is_empty() {
            return Err(SisError::Argument("grid needs at least one increment".into()));
        }
        if !(dt.is_finite() && dt > 0.0) {
            return Err(SisError::Argument(format!("dt = {dt} must be finite and > 0")));
        }
        let increments: Arc<[f64]> = increments.into();
        Ok(WienerGrid {
            dt,
            base: Arc::clone(&increments),
            increments,
            base_dt: dt,
            factor: 1,
            seed,
        })
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn n_steps(&self) -> usize {
        self.increments.len()
    }

    pub fn increments(&self) -> &[f64] {
        &self.increments
    }

    pub fn seed(&self) -> SeedInfo {
        self.seed
    }

    /// Grid with step `factor * dt`. Each coarse increment is the left-to-right
    /// sum of the generated increments it spans.
    pub fn coarsen(&self, factor: usize) -> Result<Self> {
        if factor == 0 || !self.n_steps().is_multiple_of(factor) {
            return Err(SisError::Argument(format!(
                "coarsening factor {factor} does not divide {} steps",
                self.n_steps()
            )));
        }
        if factor == 1 {
            return Ok(self.clone());
        }
        let total = self.factor * factor;
        let increments: Arc<[f64]> = self
            .base
            .chunks_exact(total)
            .map(|c| c.iter().fold(0.0, |acc, &x| acc + x))
            .collect();
        Ok(WienerGrid {
            dt: self.base_dt * total as f64,
            increments,
            base: Arc::clone(&self.base),
            base_dt: self.base_dt,
            factor: total,
            seed: self.seed,
        })
    }

    /// Writes the 32-byte header followed by the increments, all little-endian.
    ///
    /// | offset | size | field |
    /// |--------|------|-------|
    /// | 0 | 4 | magic `SISW` |
    /// | 4 | 2 | version (1) |
    /// | 6 | 2 | reserved (0) |
    /// | 8 | 4 | n_steps (u32) |
    /// | 12 | 4 | path_index (u32) |
    /// | 16 | 8 | dt (f64) |
    /// | 24 | 8 | master_seed (u64) |
    pub fn write_to<W: Write>(&self, mut out: W) -> Result<()> {
        let n = u32::try_from(self.n_steps()).map_err(|_| SisError::Dump("too many steps for a u32 header".into()))?;
        let idx = u32::try_from(self.seed.path_index)
            .map_err(|_| SisError::Dump("path index does not fit the u32 header field".into()))?;
        let mut buf = Vec::with_capacity(HEADER_LEN + 8 * self.n_steps());
        buf.extend_from_slice(DUMP_MAGIC);
        buf.extend_from_slice(&DUMP_VERSION.to_le_bytes());
        buf.extend_from_slice(&0u16.to_le_bytes());
        buf.extend_from_slice(&n.to_le_bytes());
        buf.extend_from_slice(&idx.to_le_bytes());
        buf.extend_from_slice(&self.dt.to_le_bytes());
        buf.extend_from_slice(&self.seed.master_seed.to_le_bytes());
        for x in self.increments.iter() {
            buf.extend_from_slice(&x.to_le_bytes());
        }
        out.write_all(&buf).map_err(|e| SisError::Dump(e.to_string()))
    }

    pub fn read_from<R: Read>(mut input: R) -> Result<Self> {
        let io = |e: std::io::Error| SisError::Dump(e.to_string());
        let mut header = [0u8; HEADER_LEN];
        input.read_exact(&mut header).map_err(io)?;
        if &header[0..4] != DUMP_MAGIC {
            return Err(SisError::Dump("bad magic".into()));
        }
        let version = u16::from_le_bytes([header[4], header[5]]);
        if version != DUMP_VERSION {
            return Err(SisError::Dump(format!("unsupported version {version}")));
        }
        let word = |at: usize| u32::from_le_bytes(header[at..at + 4].try_into().unwrap());
        let quad = |at: usize| u64::from_le_bytes(header[at..at + 8].try_into().unwrap());
        let n = word(8) as usize;
        let path_index = word(12) as u64;
        let dt = f64::from_bits(quad(16));
        let master_seed = quad(24);
        let mut body = vec![0u8; 8 * n];
        input.read_exact(&mut body).map_err(io)?;
        let increments = body
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        WienerGrid::from_increments(
            dt,
            increments,
            SeedInfo {
                master_seed,
                path_index,
            },
        )
    }
}

const DUMP_MAGIC: &[u8; 4] = b"SISW";
const DUMP_VERSION: u16 = 1;
const HEADER_LEN: usize = 32;
