//! Counter-based Gaussian noise.
//!
//! Every random number is a pure function of its logical coordinates
//! `(seed, replication, tag, particle, step, component)`: the Philox4x32-10
//! block cipher is keyed by a hash of `(seed, replication)` and the 128-bit
//! counter holds `(particle, step, tag << 16 | component, draw)`. Tableaux are
//! materialized on the finest grid and summed upward to coarser grids.

use std::io::{Read, Write};

use rand::RngCore;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{domain, Result};
use crate::grid::TimeGrid;

const PHILOX_M0: u32 = 0xD251_1F53;
const PHILOX_M1: u32 = 0xCD9E_8D57;
const PHILOX_W0: u32 = 0x9E37_79B9;
const PHILOX_W1: u32 = 0xBB67_AE85;

#[inline(always)]
fn mulhilo(a: u32, b: u32) -> (u32, u32) {
    let p = u64::from(a) * u64::from(b);
    ((p >> 32) as u32, p as u32)
}

/// Philox4x32 with 10 rounds.
#[inline]
pub fn philox4x32(counter: [u32; 4], key: [u32; 2]) -> [u32; 4] {
    let [mut c0, mut c1, mut c2, mut c3] = counter;
    let [mut k0, mut k1] = key;
    for round in 0..10 {
        if round > 0 {
            k0 = k0.wrapping_add(PHILOX_W0);
            k1 = k1.wrapping_add(PHILOX_W1);
        }
        let (hi0, lo0) = mulhilo(PHILOX_M0, c0);
        let (hi1, lo1) = mulhilo(PHILOX_M1, c2);
        (c0, c1, c2, c3) = (hi1 ^ c1 ^ k0, lo1, hi0 ^ c3 ^ k1, lo0);
    }
    [c0, c1, c2, c3]
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Logical purpose of a stream; part of the counter so purposes never overlap.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u16)]
pub enum StreamTag {
    Increment = 0,
    Init = 1,
    Aux = 2,
    Projection = 3,
    PairSample = 4,
}

/// A short random stream addressed by logical coordinates.
///
/// Successive draws advance only the last counter word, so streams with
/// different coordinates use disjoint counter ranges.
#[derive(Debug, Clone)]
pub struct CounterStream {
    key: [u32; 2],
    counter: [u32; 4],
    block: [u32; 4],
    used: usize,
}

fn stream_key(seed: u64, replication: u64) -> [u32; 2] {
    let key = splitmix64(seed ^ splitmix64(replication));
    [key as u32, (key >> 32) as u32]
}

fn stream_counter(tag: StreamTag, major: u32, minor: u32, lane: u16) -> [u32; 4] {
    [major, minor, ((tag as u32) << 16) | u32::from(lane), 0]
}

impl CounterStream {
    pub fn new(seed: u64, replication: u64, tag: StreamTag, major: u32, minor: u32, lane: u16) -> Self {
        let key = stream_key(seed, replication);
        let counter = stream_counter(tag, major, minor, lane);
        Self::with_first_block(key, counter, philox4x32(counter, key))
    }

    fn with_first_block(key: [u32; 2], counter: [u32; 4], block: [u32; 4]) -> Self {
        Self {
            key,
            counter,
            block,
            used: 0,
        }
    }

    fn refill(&mut self) {
        self.counter[3] = self.counter[3].wrapping_add(1);
        self.block = philox4x32(self.counter, self.key);
        self.used = 0;
    }

    pub fn standard_normal(&mut self) -> f64 {
        StandardNormal.sample(self)
    }

    /// Uniform on the open interval `(0, 1)`.
    pub fn uniform_open(&mut self) -> f64 {
        ((self.next_u64() >> 11) as f64 + 0.5) * (1.0 / 9_007_199_254_740_992.0)
    }
}

impl RngCore for CounterStream {
    fn next_u32(&mut self) -> u32 {
        if self.used == 4 {
            self.refill();
        }
        let v = self.block[self.used];
        self.used += 1;
        v
    }

    fn next_u64(&mut self) -> u64 {
        if self.used > 2 {
            self.refill();
        }
        let lo = u64::from(self.block[self.used]);
        let hi = u64::from(self.block[self.used + 1]);
        self.used += 2;
        (hi << 32) | lo
    }

    fn fill_bytes(&mut self, dst: &mut [u8]) {
        for chunk in dst.chunks_mut(4) {
            let bytes = self.next_u32().to_le_bytes();
            chunk.copy_from_slice(&bytes[..chunk.len()]);
        }
    }
}

/// One standard normal at fixed logical coordinates.
pub fn keyed_normal(seed: u64, replication: u64, tag: StreamTag, major: usize, minor: usize, lane: usize) -> f64 {
    CounterStream::new(seed, replication, tag, major as u32, minor as u32, lane as u16).standard_normal()
}

/// Standard normals of one step row: entry `i * q + c` is the normal at
/// `(particle i, step, component c)`.
///
/// Same values as [`keyed_normal`]; the first cipher blocks of the row are
/// computed back to back so they pipeline.
fn normal_row(key: [u32; 2], tag: StreamTag, step: u32, q: usize, out: &mut [f64], blocks: &mut Vec<[u32; 4]>) {
    let particles = out.len() / q;
    let counters = || {
        (0..particles).flat_map(move |i| (0..q).map(move |c| stream_counter(tag, i as u32, step, c as u16)))
    };
    blocks.clear();
    blocks.extend(counters().map(|ctr| philox4x32(ctr, key)));
    for ((slot, block), ctr) in out.iter_mut().zip(blocks.iter()).zip(counters()) {
        *slot = CounterStream::with_first_block(key, ctr, *block).standard_normal();
    }
}

/// Brownian increments for `N` particles on a fine grid.
///
/// Stored step-major (`(j * N + i) * q + c`) so a time step reads one
/// contiguous row; the binary dump uses particle-major order.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseTableau {
    seed: u64,
    replication: u64,
    particles: usize,
    noise_dim: usize,
    grid: TimeGrid,
    increments: Vec<f64>,
}

impl NoiseTableau {
    pub fn generate(
        seed: u64,
        replication: u64,
        particles: usize,
        noise_dim: usize,
        fine_grid: TimeGrid,
    ) -> Result<Self> {
        if particles == 0 {
            return Err(domain("tableau needs at least one particle"));
        }
        if noise_dim == 0 || noise_dim > usize::from(u16::MAX) {
            return Err(domain(format!("noise dimension {noise_dim} out of range")));
        }
        if particles > u32::MAX as usize || fine_grid.steps() > u32::MAX as usize {
            return Err(domain("particle or step count exceeds the 32-bit counter range"));
        }
        let scale = fine_grid.mesh().sqrt();
        let key = stream_key(seed, replication);
        let row = particles * noise_dim;
        let mut increments = vec![0.0; fine_grid.steps() * row];
        increments.par_chunks_mut(row).enumerate().for_each_init(Vec::new, |blocks, (j, out)| {
            normal_row(key, StreamTag::Increment, j as u32, noise_dim, out, blocks);
            for x in out.iter_mut() {
                *x *= scale;
            }
        });
        Ok(Self {
            seed,
            replication,
            particles,
            noise_dim,
            grid: fine_grid,
            increments,
        })
    }

    /// Wraps explicit increments given particle-major, step-minor, component
    /// innermost (the dump order).
    pub fn from_increments(
        seed: u64,
        replication: u64,
        particles: usize,
        noise_dim: usize,
        grid: TimeGrid,
        increments: Vec<f64>,
    ) -> Result<Self> {
        if particles == 0 || noise_dim == 0 {
            return Err(domain("tableau needs at least one particle and one noise component"));
        }
        let steps = grid.steps();
        if increments.len() != particles * steps * noise_dim {
            return Err(domain(format!(
                "expected {} increments, got {}",
                particles * steps * noise_dim,
                increments.len()
            )));
        }
        let q = noise_dim;
        let mut stored = vec![0.0; increments.len()];
        for i in 0..particles {
            for j in 0..steps {
                let from = (i * steps + j) * q;
                let to = (j * particles + i) * q;
                stored[to..to + q].copy_from_slice(&increments[from..from + q]);
            }
        }
        Ok(Self {
            seed,
            replication,
            particles,
            noise_dim,
            grid,
            increments: stored,
        })
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn replication(&self) -> u64 {
        self.replication
    }

    pub fn particles(&self) -> usize {
        self.particles
    }

    pub fn noise_dim(&self) -> usize {
        self.noise_dim
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    /// Fine increment of particle `i` over step `j`.
    pub fn increment(&self, i: usize, j: usize) -> &[f64] {
        let q = self.noise_dim;
        let at = (j * self.particles + i) * q;
        &self.increments[at..at + q]
    }

    /// All particles' increments over fine step `j` (`N x q`).
    pub fn row(&self, j: usize) -> &[f64] {
        let row = self.particles * self.noise_dim;
        &self.increments[j * row..(j + 1) * row]
    }

    /// Increments over coarse step `j` of a grid `ratio` times coarser:
    /// the sum of fine rows `j * ratio .. (j + 1) * ratio`.
    pub(crate) fn coarse_row_into(&self, j: usize, ratio: usize, out: &mut [f64]) {
        out.copy_from_slice(self.row(j * ratio));
        for k in 1..ratio {
            for (o, x) in out.iter_mut().zip(self.row(j * ratio + k)) {
                *o += x;
            }
        }
    }

    /// Increments in dump order: particle-major, step-minor, component innermost.
    pub fn to_particle_major(&self) -> Vec<f64> {
        let (n, q, steps) = (self.particles, self.noise_dim, self.grid.steps());
        let mut out = Vec::with_capacity(self.increments.len());
        for i in 0..n {
            for j in 0..steps {
                out.extend_from_slice(self.increment(i, j));
            }
        }
        debug_assert_eq!(out.len(), n * q * steps);
        out
    }

    /// Aggregates to a coarser grid whose step count divides the fine one.
    pub fn coarsen(&self, coarse: &TimeGrid) -> Result<CoarseIncrements> {
        let ratio = self.grid.ratio_to(coarse)?;
        let row = self.particles * self.noise_dim;
        let mut data = vec![0.0; coarse.steps() * row];
        for (j, out) in data.chunks_mut(row).enumerate() {
            self.coarse_row_into(j, ratio, out);
        }
        Ok(CoarseIncrements {
            grid: *coarse,
            particles: self.particles,
            noise_dim: self.noise_dim,
            data,
        })
    }

    /// Restricts to the first `particles` particles (common random numbers across N).
    pub fn truncate(&self, particles: usize) -> Result<Self> {
        if particles == 0 || particles > self.particles {
            return Err(domain(format!(
                "cannot restrict a {}-particle tableau to {particles} particles",
                self.particles
            )));
        }
        let keep = particles * self.noise_dim;
        let mut increments = Vec::with_capacity(keep * self.grid.steps());
        for j in 0..self.grid.steps() {
            increments.extend_from_slice(&self.row(j)[..keep]);
        }
        Ok(Self {
            particles,
            increments,
            ..*self
        })
    }

    /// Writes the little-endian dump: header `(seed, replication, N, q, n_fine, T)`
    /// as 64-bit fields, then the increments as `f64`, particle-major,
    /// step-minor, component innermost.
    pub fn write_binary<W: Write>(&self, mut w: W) -> Result<()> {
        w.write_all(&self.seed.to_le_bytes())?;
        w.write_all(&self.replication.to_le_bytes())?;
        w.write_all(&(self.particles as u64).to_le_bytes())?;
        w.write_all(&(self.noise_dim as u64).to_le_bytes())?;
        w.write_all(&(self.grid.steps() as u64).to_le_bytes())?;
        w.write_all(&self.grid.horizon().to_le_bytes())?;
        let mut buf = Vec::with_capacity(8 * self.increments.len());
        for x in self.to_particle_major() {
            buf.extend_from_slice(&x.to_le_bytes());
        }
        w.write_all(&buf)?;
        Ok(())
    }

    pub fn read_binary<R: Read>(mut r: R) -> Result<Self> {
        let mut word = [0u8; 8];
        let mut next = |r: &mut R| -> Result<[u8; 8]> {
            r.read_exact(&mut word)?;
            Ok(word)
        };
        let seed = u64::from_le_bytes(next(&mut r)?);
        let replication = u64::from_le_bytes(next(&mut r)?);
        let particles = u64::from_le_bytes(next(&mut r)?) as usize;
        let noise_dim = u64::from_le_bytes(next(&mut r)?) as usize;
        let steps = u64::from_le_bytes(next(&mut r)?) as usize;
        let horizon = f64::from_le_bytes(next(&mut r)?);
        let grid = TimeGrid::new(horizon, steps)?;
        let len = particles
            .checked_mul(steps)
            .and_then(|v| v.checked_mul(noise_dim))
            .ok_or_else(|| domain("tableau header overflows"))?;
        let mut increments = Vec::with_capacity(len);
        for _ in 0..len {
            increments.push(f64::from_le_bytes(next(&mut r)?));
        }
        Self::from_increments(seed, replication, particles, noise_dim, grid, increments)
    }
}

/// Increments aggregated onto a coarse grid, step-major like the tableau.
#[derive(Debug, Clone, PartialEq)]
pub struct CoarseIncrements {
    pub grid: TimeGrid,
    pub particles: usize,
    pub noise_dim: usize,
    pub data: Vec<f64>,
}

impl CoarseIncrements {
    pub fn increment(&self, i: usize, j: usize) -> &[f64] {
        let q = self.noise_dim;
        let at = (j * self.particles + i) * q;
        &self.data[at..at + q]
    }
}

/// Product Gaussian initial law `N(mean, variance)` in every coordinate;
/// `variance = 0` is a point mass.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InitialLaw {
    pub mean: f64,
    pub variance: f64,
}

impl InitialLaw {
    pub fn point(mean: f64) -> Self {
        Self { mean, variance: 0.0 }
    }

    /// Initial positions `xi^i`, drawn from the init stream so they do not
    /// depend on any grid.
    pub fn sample(&self, seed: u64, replication: u64, particles: usize, dim: usize) -> Result<Vec<f64>> {
        if !(self.variance >= 0.0) {
            return Err(domain(format!("initial variance {} is negative", self.variance)));
        }
        let sd = self.variance.sqrt();
        let mut out = vec![self.mean; particles * dim];
        if sd > 0.0 {
            for i in 0..particles {
                for k in 0..dim {
                    out[i * dim + k] += sd * keyed_normal(seed, replication, StreamTag::Init, i, 0, k);
                }
            }
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn philox_known_answers() {
        assert_eq!(
            philox4x32([0, 0, 0, 0], [0, 0]),
            [0x6627_e8d5, 0xe169_c58d, 0xbc57_ac4c, 0x9b00_dbd8]
        );
        assert_eq!(
            philox4x32([u32::MAX; 4], [u32::MAX; 2]),
            [0x408f_276d, 0x41c8_3b0e, 0xa20b_c7c6, 0x6d54_51fd]
        );
        assert_eq!(
            philox4x32(
                [0x243f_6a88, 0x85a3_08d3, 0x1319_8a2e, 0x0370_7344],
                [0xa409_3822, 0x299f_31d0]
            ),
            [0xd16c_fe09, 0x94fd_cceb, 0x5001_e420, 0x2412_6ea1]
        );
    }

    fn grid(n: usize) -> TimeGrid {
        TimeGrid::new(1.0, n).unwrap()
    }

    #[test]
    fn regeneration_is_bit_identical() {
        let a = NoiseTableau::generate(7, 3, 5, 2, grid(16)).unwrap();
        let b = NoiseTableau::generate(7, 3, 5, 2, grid(16)).unwrap();
        assert_eq!(a, b);
        let c = NoiseTableau::generate(7, 4, 5, 2, grid(16)).unwrap();
        assert_ne!(a.increments, c.increments);
    }

    #[test]
    fn increments_are_addressable_individually() {
        let t = NoiseTableau::generate(11, 2, 4, 3, grid(8)).unwrap();
        let h = grid(8).mesh().sqrt();
        for i in 0..4 {
            for j in 0..8 {
                for c in 0..3 {
                    let v = h * keyed_normal(11, 2, StreamTag::Increment, i, j, c);
                    assert_eq!(t.increment(i, j)[c], v);
                }
            }
        }
    }

    #[test]
    fn rejects_empty_shapes() {
        assert!(NoiseTableau::generate(1, 0, 0, 1, grid(4)).is_err());
        assert!(NoiseTableau::generate(1, 0, 2, 0, grid(4)).is_err());
    }

    #[test]
    fn coarsen_identity_and_summation() {
        let t = NoiseTableau::generate(5, 0, 3, 1, grid(8)).unwrap();
        assert_eq!(t.coarsen(&grid(8)).unwrap().data, t.increments);

        let t = NoiseTableau::from_increments(0, 0, 1, 1, grid(4), vec![0.1, -0.2, 0.3, 0.05]).unwrap();
        let c = t.coarsen(&grid(2)).unwrap();
        assert!((c.data[0] + 0.1).abs() < 1e-15);
        assert!((c.data[1] - 0.35).abs() < 1e-15);
        assert!(t.coarsen(&grid(3)).is_err());
    }

    #[test]
    fn coarsening_telescopes() {
        let t = NoiseTableau::generate(9, 1, 6, 2, grid(64)).unwrap();
        for n in [1, 2, 4, 8, 16, 32] {
            let c = t.coarsen(&grid(n)).unwrap();
            for i in 0..6 {
                for comp in 0..2 {
                    let fine: f64 = (0..64).map(|j| t.increment(i, j)[comp]).sum();
                    let coarse: f64 = (0..n).map(|j| c.increment(i, j)[comp]).sum();
                    assert!((fine - coarse).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn binary_dump_round_trips() {
        let t = NoiseTableau::generate(42, 9, 3, 2, TimeGrid::new(2.5, 5).unwrap()).unwrap();
        let mut buf = Vec::new();
        t.write_binary(&mut buf).unwrap();
        assert_eq!(buf.len(), 48 + 3 * 5 * 2 * 8);
        assert_eq!(&buf[0..8], &42u64.to_le_bytes());
        assert_eq!(&buf[40..48], &2.5f64.to_le_bytes());
        let back = NoiseTableau::read_binary(&buf[..]).unwrap();
        assert_eq!(back, t);
        assert!(NoiseTableau::read_binary(&buf[..buf.len() - 1]).is_err());
    }

    #[test]
    fn dump_payload_is_particle_major() {
        let given = vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0];
        let t = NoiseTableau::from_increments(0, 0, 2, 1, grid(3), given.clone()).unwrap();
        assert_eq!(t.increment(1, 0), &[4.0]);
        assert_eq!(t.row(2), &[3.0, 6.0]);
        let mut buf = Vec::new();
        t.write_binary(&mut buf).unwrap();
        let payload: Vec<f64> = buf[48..]
            .chunks(8)
            .map(|b| f64::from_le_bytes(b.try_into().unwrap()))
            .collect();
        assert_eq!(payload, given);
    }

    #[test]
    fn truncation_keeps_leading_particles() {
        let t = NoiseTableau::generate(3, 0, 10, 1, grid(4)).unwrap();
        let s = t.truncate(4).unwrap();
        let direct = NoiseTableau::generate(3, 0, 4, 1, grid(4)).unwrap();
        assert_eq!(s, direct);
        assert!(t.truncate(11).is_err());
    }

    #[test]
    fn initial_law_is_grid_independent_and_seeded() {
        let law = InitialLaw { mean: 1.0, variance: 4.0 };
        let a = law.sample(1, 2, 50, 2).unwrap();
        assert_eq!(a, law.sample(1, 2, 50, 2).unwrap());
        assert_ne!(a, law.sample(1, 3, 50, 2).unwrap());
        assert_eq!(InitialLaw::point(0.5).sample(1, 2, 3, 1).unwrap(), vec![0.5; 3]);
        assert!(InitialLaw { mean: 0.0, variance: -1.0 }.sample(0, 0, 1, 1).is_err());
    }
}
