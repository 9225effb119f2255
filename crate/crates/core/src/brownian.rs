//! Fine-grid Brownian paths and the coarse drivers derived from them.
//!
//! A [`PathBundle`] holds `N x d` Gaussian increments on the unit interval,
//! drawn from a ChaCha stream keyed by `(seed, rep_index)`. Every coarse
//! grid used by a scheme is an aggregation of the same fine path, which is
//! what couples the schemes to the fine-grid reference.
//!
//! Iterated integrals `J_{ab}(k) = int (W_a(s) - W_a(t_k)) dW_b(s)` over a
//! coarse step are formed as follows: the diagonal from its closed form
//! `((dW_a)^2 - h) / 2`, the strictly upper entries as fine-grid left-point
//! sums, and the lower entries from `J_ab + J_ba = dW_a dW_b`.

use std::io::{Read, Write};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};

const DUMP_MAGIC: &[u8; 4] = b"DSDE";
const DUMP_VERSION: u32 = 1;

/// Fine-grid Brownian increments with their seed provenance.
#[derive(Debug, Clone, PartialEq)]
pub struct PathBundle {
    dim: usize,
    fine_n: usize,
    /// Row-major `fine_n x dim`.
    increments: Vec<f64>,
    seed: u64,
    rep_index: u64,
}

pub fn generate_fine_path(seed: u64, rep_index: u64, fine_n: usize, dim: usize) -> PathBundle {
    assert!(fine_n >= 1 && dim >= 1, "need at least one step and one dimension");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(rep_index);
    let scale = (1.0 / fine_n as f64).sqrt();
    let increments = (0..fine_n * dim).map(|_| scale * rng.sample::<f64, _>(StandardNormal)).collect();
    PathBundle { dim, fine_n, increments, seed, rep_index }
}

impl PathBundle {
    pub fn from_increments(dim: usize, increments: Vec<f64>, seed: u64, rep_index: u64) -> Result<Self> {
        if dim == 0 || increments.is_empty() || !increments.len().is_multiple_of(dim) {
            return Err(Error::DimensionMismatch { expected: dim, got: increments.len() });
        }
        let fine_n = increments.len() / dim;
        Ok(Self { dim, fine_n, increments, seed, rep_index })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn fine_n(&self) -> usize {
        self.fine_n
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn rep_index(&self) -> u64 {
        self.rep_index
    }

    pub fn increments(&self) -> &[f64] {
        &self.increments
    }

    pub fn increment(&self, i: usize) -> &[f64] {
        &self.increments[i * self.dim..(i + 1) * self.dim]
    }

    /// `W_1`, the sum of all increments.
    pub fn terminal(&self) -> Vec<f64> {
        let mut w = vec![0.0; self.dim];
        for row in self.increments.chunks_exact(self.dim) {
            for (a, b) in w.iter_mut().zip(row) {
                *a += b;
            }
        }
        w
    }

    /// Binary dump: header `{"DSDE", version u32, N u64, d u32, seed u64,
    /// rep u64}` then row-major increments, all little-endian.
    pub fn write_to<W: Write>(&self, mut w: W) -> Result<()> {
        w.write_all(DUMP_MAGIC)?;
        w.write_all(&DUMP_VERSION.to_le_bytes())?;
        w.write_all(&(self.fine_n as u64).to_le_bytes())?;
        w.write_all(&(self.dim as u32).to_le_bytes())?;
        w.write_all(&self.seed.to_le_bytes())?;
        w.write_all(&self.rep_index.to_le_bytes())?;
        for v in &self.increments {
            w.write_all(&v.to_le_bytes())?;
        }
        Ok(())
    }

    pub fn read_from<R: Read>(mut r: R) -> Result<Self> {
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic)?;
        if &magic != DUMP_MAGIC {
            return Err(Error::Io("bad magic in path dump".into()));
        }
        let version = u32::from_le_bytes(read_array(&mut r)?);
        if version != DUMP_VERSION {
            return Err(Error::Io(format!("unsupported dump version {version}")));
        }
        let fine_n = u64::from_le_bytes(read_array(&mut r)?) as usize;
        let dim = u32::from_le_bytes(read_array(&mut r)?) as usize;
        let seed = u64::from_le_bytes(read_array(&mut r)?);
        let rep_index = u64::from_le_bytes(read_array(&mut r)?);
        let mut increments = Vec::with_capacity(fine_n * dim);
        for _ in 0..fine_n * dim {
            increments.push(f64::from_le_bytes(read_array(&mut r)?));
        }
        Self::from_increments(dim, increments, seed, rep_index)
    }
}

fn read_array<const N: usize, R: Read>(r: &mut R) -> Result<[u8; N]> {
    let mut buf = [0u8; N];
    r.read_exact(&mut buf)?;
    Ok(buf)
}

fn check_divides(fine_n: usize, n: usize) -> Result<usize> {
    if n == 0 || !fine_n.is_multiple_of(n) {
        return Err(Error::NotDivisible { fine_n, n });
    }
    Ok(fine_n / n)
}

/// Coarse increments, row-major `n x d`: row `k` sums the fine increments
/// in `(k/n, (k+1)/n]`.
pub fn aggregate(bundle: &PathBundle, n: usize) -> Result<Vec<f64>> {
    let ratio = check_divides(bundle.fine_n, n)?;
    let d = bundle.dim;
    let mut out = vec![0.0; n * d];
    for (k, row) in out.chunks_exact_mut(d).enumerate() {
        for i in k * ratio..(k + 1) * ratio {
            for (a, b) in row.iter_mut().zip(bundle.increment(i)) {
                *a += b;
            }
        }
    }
    Ok(out)
}

/// Iterated integrals per coarse step, `n` row-major `d x d` blocks.
pub fn iterated_integrals(bundle: &PathBundle, n: usize) -> Result<Vec<f64>> {
    Ok(CoarseDrivers::from_bundle(bundle, n)?.iterated)
}

/// Everything a one-step scheme needs on a grid of `n` coarse steps.
#[derive(Debug, Clone, PartialEq)]
pub struct CoarseDrivers {
    n: usize,
    dim: usize,
    increments: Vec<f64>,
    iterated: Vec<f64>,
}

impl CoarseDrivers {
    pub fn from_bundle(bundle: &PathBundle, n: usize) -> Result<Self> {
        let ratio = check_divides(bundle.fine_n, n)?;
        let d = bundle.dim;
        let increments = aggregate(bundle, n)?;
        let mut iterated = vec![0.0; n * d * d];
        let mut partial = vec![0.0; d];
        for k in 0..n {
            let block = &mut iterated[k * d * d..(k + 1) * d * d];
            partial.fill(0.0);
            for i in k * ratio..(k + 1) * ratio {
                let dw = bundle.increment(i);
                for a in 0..d {
                    for b in (a + 1)..d {
                        block[a * d + b] += partial[a] * dw[b];
                    }
                }
                for (p, w) in partial.iter_mut().zip(dw) {
                    *p += w;
                }
            }
            close_block(block, &increments[k * d..(k + 1) * d], 1.0 / n as f64);
        }
        Ok(Self { n, dim: d, increments, iterated })
    }

    /// Build drivers from explicit increments and iterated integrals.
    pub fn from_parts(n: usize, dim: usize, increments: Vec<f64>, iterated: Vec<f64>) -> Result<Self> {
        if increments.len() != n * dim {
            return Err(Error::DimensionMismatch { expected: n * dim, got: increments.len() });
        }
        if iterated.len() != n * dim * dim {
            return Err(Error::DimensionMismatch { expected: n * dim * dim, got: iterated.len() });
        }
        Ok(Self { n, dim, increments, iterated })
    }

    /// Halve the grid by concatenating neighbouring steps (Chen's relation).
    /// Equals [`CoarseDrivers::from_bundle`] at `n / 2` up to summation order.
    pub fn coarsen(&self) -> Result<Self> {
        if !self.n.is_multiple_of(2) {
            return Err(Error::NotDivisible { fine_n: self.n, n: self.n / 2 });
        }
        let d = self.dim;
        let n = self.n / 2;
        let mut increments = vec![0.0; n * d];
        let mut iterated = vec![0.0; n * d * d];
        for k in 0..n {
            let (l, r) = (2 * k, 2 * k + 1);
            let wl = &self.increments[l * d..(l + 1) * d];
            let wr = &self.increments[r * d..(r + 1) * d];
            let jl = &self.iterated[l * d * d..(l + 1) * d * d];
            let jr = &self.iterated[r * d * d..(r + 1) * d * d];
            let row = &mut increments[k * d..(k + 1) * d];
            for a in 0..d {
                row[a] = wl[a] + wr[a];
            }
            let block = &mut iterated[k * d * d..(k + 1) * d * d];
            for a in 0..d {
                for b in (a + 1)..d {
                    block[a * d + b] = jl[a * d + b] + jr[a * d + b] + wl[a] * wr[b];
                }
            }
            close_block(block, row, 1.0 / n as f64);
        }
        Ok(Self { n, dim: d, increments, iterated })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn step(&self) -> f64 {
        1.0 / self.n as f64
    }

    pub fn increments(&self) -> &[f64] {
        &self.increments
    }

    pub fn increment(&self, k: usize) -> &[f64] {
        &self.increments[k * self.dim..(k + 1) * self.dim]
    }

    /// Row-major `d x d` block `J(k)`.
    pub fn iterated(&self, k: usize) -> &[f64] {
        let dd = self.dim * self.dim;
        &self.iterated[k * dd..(k + 1) * dd]
    }

    pub fn iterated_all(&self) -> &[f64] {
        &self.iterated
    }
}

/// Fill the diagonal from its closed form and the lower triangle from the
/// pairwise identity, given the strictly upper triangle.
pub(crate) fn close_block(block: &mut [f64], dw: &[f64], h: f64) {
    let d = dw.len();
    for a in 0..d {
        block[a * d + a] = 0.5 * (dw[a] * dw[a] - h);
        for b in (a + 1)..d {
            block[b * d + a] = dw[a] * dw[b] - block[a * d + b];
        }
    }
}
