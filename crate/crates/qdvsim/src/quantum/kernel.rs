//! Amplitude-array kernels behind the state-vector operations.
//!
//! Each kernel has a sequential form in [`seq`] and, when the `parallel`
//! feature is enabled, a rayon form in [`par`]. Reductions accumulate
//! fixed-width chunk partials and fold the partials in index order, so both
//! forms produce bit-identical sums for any thread count. The top-level
//! dispatchers pick the parallel form only above [`PAR_MIN`] amplitudes;
//! the 2-qubit states the simulator works with always take the sequential
//! path.

use num_complex::Complex64;

/// Chunk width shared by both paths; keeps seq/par sums bit-identical.
pub const CHUNK: usize = 1 << 12;

/// Minimum amplitude count before the parallel path engages.
pub const PAR_MIN: usize = 1 << 14;

#[inline]
fn chunk_norm_sqr(chunk: &[Complex64]) -> f64 {
    chunk.iter().map(|a| a.norm_sqr()).sum()
}

#[inline]
fn chunk_masked_norm_sqr(base: usize, chunk: &[Complex64], shift: u32, want: usize) -> f64 {
    chunk
        .iter()
        .enumerate()
        .filter(|(k, _)| ((base + k) >> shift) & 1 == want)
        .map(|(_, a)| a.norm_sqr())
        .sum()
}

/// Sequential kernels.
pub mod seq {
    use super::*;

    pub fn norm_sqr(amps: &[Complex64]) -> f64 {
        amps.chunks(CHUNK).map(chunk_norm_sqr).sum()
    }

    /// Sum of |amp|² over indices whose bit at `shift` equals `want`.
    pub fn masked_norm_sqr(amps: &[Complex64], shift: u32, want: usize) -> f64 {
        amps.chunks(CHUNK)
            .enumerate()
            .map(|(ci, chunk)| chunk_masked_norm_sqr(ci * CHUNK, chunk, shift, want))
            .sum()
    }

    /// Zero every amplitude whose bit at `shift` differs from `keep`.
    pub fn project(amps: &[Complex64], shift: u32, keep: usize) -> Vec<Complex64> {
        amps.iter()
            .enumerate()
            .map(|(i, &a)| {
                if (i >> shift) & 1 == keep {
                    a
                } else {
                    Complex64::new(0.0, 0.0)
                }
            })
            .collect()
    }

    /// Kronecker product of two amplitude vectors.
    pub fn tensor(a: &[Complex64], b: &[Complex64]) -> Vec<Complex64> {
        let mut out = Vec::with_capacity(a.len() * b.len());
        for &av in a {
            out.extend(b.iter().map(|&bv| av * bv));
        }
        out
    }

    pub fn scale(amps: &[Complex64], factor: f64) -> Vec<Complex64> {
        amps.iter().map(|&a| a * factor).collect()
    }
}

/// Rayon kernels; order-preserving, bit-identical to [`seq`].
#[cfg(feature = "parallel")]
pub mod par {
    use super::*;
    use rayon::prelude::*;

    pub fn norm_sqr(amps: &[Complex64]) -> f64 {
        let parts: Vec<f64> = amps.par_chunks(CHUNK).map(chunk_norm_sqr).collect();
        parts.into_iter().sum()
    }

    pub fn masked_norm_sqr(amps: &[Complex64], shift: u32, want: usize) -> f64 {
        let parts: Vec<f64> = amps
            .par_chunks(CHUNK)
            .enumerate()
            .map(|(ci, chunk)| chunk_masked_norm_sqr(ci * CHUNK, chunk, shift, want))
            .collect();
        parts.into_iter().sum()
    }

    pub fn project(amps: &[Complex64], shift: u32, keep: usize) -> Vec<Complex64> {
        amps.par_iter()
            .enumerate()
            .map(|(i, &a)| {
                if (i >> shift) & 1 == keep {
                    a
                } else {
                    Complex64::new(0.0, 0.0)
                }
            })
            .collect()
    }

    pub fn tensor(a: &[Complex64], b: &[Complex64]) -> Vec<Complex64> {
        let mut out = vec![Complex64::new(0.0, 0.0); a.len() * b.len()];
        out.par_chunks_mut(b.len())
            .zip(a.par_iter())
            .for_each(|(row, &av)| {
                for (o, &bv) in row.iter_mut().zip(b) {
                    *o = av * bv;
                }
            });
        out
    }

    pub fn scale(amps: &[Complex64], factor: f64) -> Vec<Complex64> {
        amps.par_iter().map(|&a| a * factor).collect()
    }
}

pub(crate) fn norm_sqr(amps: &[Complex64]) -> f64 {
    #[cfg(feature = "parallel")]
    if amps.len() >= PAR_MIN {
        return par::norm_sqr(amps);
    }
    seq::norm_sqr(amps)
}

pub(crate) fn masked_norm_sqr(amps: &[Complex64], shift: u32, want: usize) -> f64 {
    #[cfg(feature = "parallel")]
    if amps.len() >= PAR_MIN {
        return par::masked_norm_sqr(amps, shift, want);
    }
    seq::masked_norm_sqr(amps, shift, want)
}

pub(crate) fn project(amps: &[Complex64], shift: u32, keep: usize) -> Vec<Complex64> {
    #[cfg(feature = "parallel")]
    if amps.len() >= PAR_MIN {
        return par::project(amps, shift, keep);
    }
    seq::project(amps, shift, keep)
}

pub(crate) fn tensor(a: &[Complex64], b: &[Complex64]) -> Vec<Complex64> {
    #[cfg(feature = "parallel")]
    if a.len() * b.len() >= PAR_MIN {
        return par::tensor(a, b);
    }
    seq::tensor(a, b)
}

pub(crate) fn scale(amps: &[Complex64], factor: f64) -> Vec<Complex64> {
    #[cfg(feature = "parallel")]
    if amps.len() >= PAR_MIN {
        return par::scale(amps, factor);
    }
    seq::scale(amps, factor)
}
