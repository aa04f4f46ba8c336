//! Random matrices, Haar unitaries and sign-noise perturbations.

use faer::Mat;
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::linalg::{c64, kron, partial_trace, BipartitePartition, ComplexMatrix, HermitianOperator, Subsystem};

/// Identifier recorded in manifests so that runs can be reproduced.
pub const RNG_ALGORITHM: &str = "chacha20/rand_chacha-0.9/seed_from_u64+set_stream";

/// Deterministic random source keyed by `(seed, stream_index)`.
///
/// The 64-bit seed is expanded into a ChaCha20 key with `SeedableRng::seed_from_u64`
/// and the stream index selects the ChaCha stream, so distinct indices give
/// non-overlapping sequences under one seed.
#[derive(Clone, Debug)]
pub struct RngStream {
    seed: u64,
    stream_index: u64,
    rng: ChaCha20Rng,
}

impl RngStream {
    pub fn new(seed: u64, stream_index: u64) -> Self {
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        rng.set_stream(stream_index);
        Self { seed, stream_index, rng }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream_index(&self) -> u64 {
        self.stream_index
    }

    pub fn normal(&mut self) -> f64 {
        self.rng.sample(StandardNormal)
    }

    pub fn complex_normal(&mut self) -> c64 {
        let re = self.normal();
        let im = self.normal();
        c64::new(re, im)
    }

    pub fn sign(&mut self) -> i8 {
        if self.rng.random::<bool>() {
            1
        } else {
            -1
        }
    }

    pub fn uniform(&mut self) -> f64 {
        self.rng.random::<f64>()
    }
}

impl RngCore for RngStream {
    fn next_u32(&mut self) -> u32 {
        self.rng.next_u32()
    }

    fn next_u64(&mut self) -> u64 {
        self.rng.next_u64()
    }

    fn fill_bytes(&mut self, dst: &mut [u8]) {
        self.rng.fill_bytes(dst)
    }
}

fn require_positive(d: usize) -> Result<()> {
    if d == 0 {
        return Err(Error::InvalidArgument("dimension must be positive".into()));
    }
    Ok(())
}

/// Matrix with i.i.d. entries whose real and imaginary parts are N(0, 1); row-major draw order.
fn ginibre(d: usize, rng: &mut RngStream) -> Mat<c64> {
    let mut g = Mat::<c64>::zeros(d, d);
    for i in 0..d {
        for j in 0..d {
            g[(i, j)] = rng.complex_normal();
        }
    }
    g
}

/// GUE draw `(G + G^†)/sqrt(2)`: off-diagonal real and imaginary parts have variance 1,
/// diagonal entries are real with variance 2.
pub fn sample_gue(d: usize, rng: &mut RngStream) -> Result<HermitianOperator> {
    require_positive(d)?;
    let g = ginibre(d, rng);
    let s = std::f64::consts::FRAC_1_SQRT_2;
    let h = ComplexMatrix::from_fn(d, d, |i, j| (g[(i, j)] + g[(j, i)].conj()) * s);
    HermitianOperator::new(h)
}

/// Haar unitary from the QR factorization of a Ginibre matrix with the phases
/// of `diag(R)` moved into `Q`.
pub fn sample_haar_unitary(d: usize, rng: &mut RngStream) -> Result<ComplexMatrix> {
    require_positive(d)?;
    let g = ginibre(d, rng);
    let qr = g.qr();
    let q = qr.compute_Q();
    let r = qr.R();
    let phases: Vec<c64> = (0..d)
        .map(|k| {
            let rk = r[(k, k)];
            let n = rk.norm();
            if n > 0.0 {
                rk / n
            } else {
                c64::new(1.0, 0.0)
            }
        })
        .collect();
    Ok(ComplexMatrix::from_fn(d, d, |i, j| q[(i, j)] * phases[j]))
}

/// Exact subsystem Haar average of `(U^† ⊗ I) O (U ⊗ I)` (or the mirror image for `over = B`).
pub fn haar_average_conjugation(o: &ComplexMatrix, part: BipartitePartition, over: Subsystem) -> Result<ComplexMatrix> {
    let reduced = partial_trace(o, part, over)?;
    match over {
        Subsystem::A => Ok(kron(&ComplexMatrix::identity(part.d_a), &reduced)?.scale_real(1.0 / part.d_a as f64)),
        Subsystem::B => Ok(kron(&reduced, &ComplexMatrix::identity(part.d_b))?.scale_real(1.0 / part.d_b as f64)),
    }
}

/// GUE draw rescaled so that `Tr(A^2) = d`.
pub fn sample_random_hermitian(d: usize, rng: &mut RngStream) -> Result<HermitianOperator> {
    let h = sample_gue(d, rng)?;
    let norm = h.hs_norm();
    Ok(h.scaled((d as f64).sqrt() / norm))
}

/// GUE draw with its trace removed, rescaled so that `Tr(A^2) = d`.
pub fn sample_traceless_hermitian(d: usize, rng: &mut RngStream) -> Result<HermitianOperator> {
    if d < 2 {
        return Err(Error::InvalidArgument("a traceless operator needs d >= 2".into()));
    }
    let h = sample_gue(d, rng)?;
    let shift = h.matrix().trace()?.re / d as f64;
    let m = h.matrix().sub(&ComplexMatrix::identity(d).scale_real(shift))?;
    let norm = m.frobenius_norm();
    HermitianOperator::new(m.scale_real((d as f64).sqrt() / norm))
}

/// One draw of `V = delta * sum_k s_k V^k` with `s_k = ±1`.
#[derive(Clone, Debug)]
pub struct NoiseRealization {
    pub signs: Vec<i8>,
    pub delta: f64,
    pub operator: HermitianOperator,
}

impl NoiseRealization {
    pub fn from_signs(couplings: &[HermitianOperator], delta: f64, signs: &[i8]) -> Result<Self> {
        check_couplings(couplings)?;
        if signs.len() != couplings.len() {
            return Err(Error::DimensionMismatch(format!(
                "{} signs for {} couplings",
                signs.len(),
                couplings.len()
            )));
        }
        if signs.iter().any(|&s| s != 1 && s != -1) {
            return Err(Error::InvalidArgument("signs must be +1 or -1".into()));
        }
        let d = couplings[0].dim();
        let mut acc = ComplexMatrix::zeros(d, d);
        for (v, &s) in couplings.iter().zip(signs) {
            acc = acc.add(&v.matrix().scale_real(delta * s as f64))?;
        }
        Ok(Self { signs: signs.to_vec(), delta, operator: HermitianOperator::new(acc)? })
    }
}

fn check_couplings(couplings: &[HermitianOperator]) -> Result<()> {
    let first = couplings
        .first()
        .ok_or_else(|| Error::InvalidArgument("empty coupling list".into()))?;
    if couplings.iter().any(|v| v.dim() != first.dim()) {
        return Err(Error::DimensionMismatch("couplings have different dimensions".into()));
    }
    Ok(())
}

pub fn sample_noise_operator(couplings: &[HermitianOperator], delta: f64, rng: &mut RngStream) -> Result<NoiseRealization> {
    check_couplings(couplings)?;
    if !(delta > 0.0) {
        return Err(Error::InvalidArgument(format!("delta must be positive, got {delta}")));
    }
    let signs: Vec<i8> = (0..couplings.len()).map(|_| rng.sign()).collect();
    NoiseRealization::from_signs(couplings, delta, &signs)
}
