//! Discrete Fresnel transform (DFnT) machinery.
//!
//! OCDM multiplexes data onto N orthogonal discrete chirps. Demodulation is
//! the N-point DFnT `Phi`, modulation its inverse; with the unitary
//! normalization used here
//!
//! ```text
//! Phi[m, n] = (1/sqrt(N)) * exp(-j*pi/4) * exp(j*pi*(m - n)^2 / N)
//! ```
//!
//! for N a power of two. `Phi` factors as `Theta2 * F * Theta1` where `F` is
//! the normalized DFT and `Theta1`, `Theta2` are diagonal quadratic-phase
//! (chirp) matrices, so both directions run in O(N log N) on top of an FFT
//! plan. A direct O(N^2) evaluation is kept alongside as a reference for
//! tests and debugging.

use std::f64::consts::{FRAC_PI_4, PI};
use std::sync::Arc;

use nalgebra::DMatrix;
use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};

/// Which coordinate system a block of samples lives in.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SignalDomain {
    /// Chirp coefficients (the domain symbols are mapped into).
    Fresnel,
    /// Baseband samples on the air interface.
    Time,
}

/// A length-N block tagged with the domain its samples live in.
///
/// The tag exists to keep modulator/demodulator call sites honest; the
/// numeric kernels below operate on plain slices.
#[derive(Debug, Clone)]
pub struct FresnelVector {
    values: Vec<Complex64>,
    domain: SignalDomain,
}

impl FresnelVector {
    pub fn new(values: Vec<Complex64>, domain: SignalDomain) -> Self {
        Self { values, domain }
    }

    pub fn fresnel(values: Vec<Complex64>) -> Self {
        Self::new(values, SignalDomain::Fresnel)
    }

    pub fn time(values: Vec<Complex64>) -> Self {
        Self::new(values, SignalDomain::Time)
    }

    pub fn values(&self) -> &[Complex64] {
        &self.values
    }

    pub fn domain(&self) -> SignalDomain {
        self.domain
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn into_values(self) -> Vec<Complex64> {
        self.values
    }
}

/// `exp(j * pi * a / n)` with the integer phase index reduced mod 2n first,
/// so large quadratic indices cost no precision.
pub(crate) fn unit_phase(a: i64, n: usize) -> Complex64 {
    let two_n = 2 * n as i64;
    let r = a.rem_euclid(two_n);
    Complex64::from_polar(1.0, PI * r as f64 / n as f64)
}

/// Precomputed N-point DFnT/IDFnT pair (plus a plain DFT sharing the FFT
/// plan, used by the OFDM reference receiver).
pub struct FresnelTransform {
    n: usize,
    scale: f64,
    /// Pre-FFT chirp: theta1[m] = exp(-j*pi/4) * exp(j*pi*m^2/N).
    theta1: Vec<Complex64>,
    /// Post-FFT chirp: theta2[m] = exp(j*pi*m^2/N).
    theta2: Vec<Complex64>,
    fft: Arc<dyn Fft<f64>>,
    ifft: Arc<dyn Fft<f64>>,
}

impl FresnelTransform {
    /// Plans transforms for a block of `n` chirps. `n` must be a power of
    /// two and at least 2 (odd sizes break the quadratic-phase wraparound
    /// the factorization relies on).
    pub fn new(n: usize) -> Result<Self> {
        if n < 2 || !n.is_power_of_two() {
            return Err(Error::InvalidBlockSize(n));
        }
        let corner = Complex64::from_polar(1.0, -FRAC_PI_4);
        let theta1: Vec<Complex64> = (0..n)
            .map(|m| corner * unit_phase((m * m) as i64, n))
            .collect();
        let theta2: Vec<Complex64> = (0..n).map(|m| unit_phase((m * m) as i64, n)).collect();
        let mut planner = FftPlanner::new();
        let fft = planner.plan_fft_forward(n);
        let ifft = planner.plan_fft_inverse(n);
        Ok(Self {
            n,
            scale: 1.0 / (n as f64).sqrt(),
            theta1,
            theta2,
            fft,
            ifft,
        })
    }

    pub fn n_chirps(&self) -> usize {
        self.n
    }

    fn check_len(&self, x: &[Complex64]) -> Result<()> {
        if x.len() != self.n {
            return Err(Error::LengthMismatch {
                expected: self.n,
                got: x.len(),
            });
        }
        Ok(())
    }

    /// Entry `Phi[m, n]` of the transform matrix.
    pub fn entry(&self, m: usize, n: usize) -> Complex64 {
        let d = m as i64 - n as i64;
        self.scale * Complex64::from_polar(1.0, -FRAC_PI_4) * unit_phase(d * d, self.n)
    }

    /// Dense transform matrix; mainly for oracles and small-size debugging.
    pub fn matrix(&self) -> DMatrix<Complex64> {
        DMatrix::from_fn(self.n, self.n, |m, k| self.entry(m, k))
    }

    /// Forward DFnT via the chirp-FFT-chirp factorization, O(N log N).
    pub fn dfnt(&self, x: &[Complex64]) -> Result<Vec<Complex64>> {
        self.check_len(x)?;
        let mut buf: Vec<Complex64> = x
            .iter()
            .zip(&self.theta1)
            .map(|(v, t)| v * t)
            .collect();
        self.run_fft(&self.fft, &mut buf);
        for (v, t) in buf.iter_mut().zip(&self.theta2) {
            *v *= self.scale * t;
        }
        Ok(buf)
    }

    /// Inverse DFnT (the Hermitian transpose of [`Self::dfnt`]); this is the
    /// OCDM modulator.
    pub fn idfnt(&self, y: &[Complex64]) -> Result<Vec<Complex64>> {
        self.check_len(y)?;
        let mut buf: Vec<Complex64> = y
            .iter()
            .zip(&self.theta2)
            .map(|(v, t)| v * t.conj())
            .collect();
        self.run_fft(&self.ifft, &mut buf);
        for (v, t) in buf.iter_mut().zip(&self.theta1) {
            *v *= self.scale * t.conj();
        }
        Ok(buf)
    }

    /// Forward DFnT by direct O(N^2) evaluation of the matrix entries.
    /// Reference implementation: slow, but independent of the FFT path.
    pub fn dfnt_direct(&self, x: &[Complex64]) -> Result<Vec<Complex64>> {
        self.check_len(x)?;
        Ok((0..self.n)
            .map(|m| x.iter().enumerate().map(|(k, v)| self.entry(m, k) * v).sum())
            .collect())
    }

    /// Normalized DFT (unitary: 1/sqrt(N) both ways), sharing the FFT plan.
    pub fn dft(&self, x: &[Complex64]) -> Result<Vec<Complex64>> {
        self.check_len(x)?;
        let mut buf = x.to_vec();
        self.run_fft(&self.fft, &mut buf);
        for v in &mut buf {
            *v *= self.scale;
        }
        Ok(buf)
    }

    /// Normalized inverse DFT.
    pub fn idft(&self, x: &[Complex64]) -> Result<Vec<Complex64>> {
        self.check_len(x)?;
        let mut buf = x.to_vec();
        self.run_fft(&self.ifft, &mut buf);
        for v in &mut buf {
            *v *= self.scale;
        }
        Ok(buf)
    }

    fn run_fft(&self, plan: &Arc<dyn Fft<f64>>, buf: &mut [Complex64]) {
        let mut scratch = vec![Complex64::default(); plan.get_inplace_scratch_len()];
        plan.process_with_scratch(buf, &mut scratch);
    }

    /// Samples of the m-th discrete chirp waveform, i.e. what the modulator
    /// emits for a unit coefficient on chirp m. Equals column m of the
    /// inverse transform matrix; the chirps are orthonormal.
    pub fn discrete_chirp(&self, m: usize) -> Result<Vec<Complex64>> {
        if m >= self.n {
            return Err(Error::ChirpIndexOutOfRange { index: m, n: self.n });
        }
        let corner = Complex64::from_polar(1.0, FRAC_PI_4);
        Ok((0..self.n)
            .map(|k| {
                let d = k as i64 - m as i64;
                self.scale * corner * unit_phase(d * d, self.n).conj()
            })
            .collect())
    }

    /// Demodulate a time-domain block into chirp coefficients.
    pub fn to_fresnel(&self, v: &FresnelVector) -> Result<FresnelVector> {
        match v.domain {
            SignalDomain::Fresnel => Err(Error::InvalidConfig(
                "block is already in the Fresnel domain".into(),
            )),
            SignalDomain::Time => Ok(FresnelVector::fresnel(self.dfnt(v.values())?)),
        }
    }

    /// Modulate chirp coefficients into a time-domain block.
    pub fn to_time(&self, v: &FresnelVector) -> Result<FresnelVector> {
        match v.domain {
            SignalDomain::Time => Err(Error::InvalidConfig(
                "block is already in the time domain".into(),
            )),
            SignalDomain::Fresnel => Ok(FresnelVector::time(self.idfnt(v.values())?)),
        }
    }
}
