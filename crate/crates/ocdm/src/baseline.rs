//! Reference receivers: block MMSE equalization (for OCDM or OFDM) and the
//! OFDM modulation path.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::constellation::Constellation;
use crate::error::{Error, Result};
use crate::fresnel::FresnelTransform;
use crate::fresnel_channel::conjugate_columns;

/// Linear MMSE equalizer for `y = G x + w`:
/// `x_soft = G^H (G G^H + N0 I)^(-1) y`, evaluated with a Cholesky solve of
/// the regularized Gram system (the inverse is never formed).
pub struct MmseEqualizer {
    g: DMatrix<Complex64>,
    gram: DMatrix<Complex64>,
    noise_var: f64,
}

impl MmseEqualizer {
    pub fn new(g: DMatrix<Complex64>, noise_var: f64) -> Result<Self> {
        Self::check(&g, noise_var)?;
        let gram = &g * g.adjoint();
        Ok(Self { g, gram, noise_var })
    }

    /// Variant for callers that can produce `G G^H` cheaper than the dense
    /// product (e.g. from channel structure). `gram` must equal `G * G^H`.
    pub fn with_gram(
        g: DMatrix<Complex64>,
        gram: DMatrix<Complex64>,
        noise_var: f64,
    ) -> Result<Self> {
        Self::check(&g, noise_var)?;
        if gram.nrows() != g.nrows() || gram.ncols() != g.nrows() {
            return Err(Error::DimensionMismatch {
                expected: g.nrows(),
                rows: gram.nrows(),
                cols: gram.ncols(),
            });
        }
        Ok(Self { g, gram, noise_var })
    }

    fn check(g: &DMatrix<Complex64>, noise_var: f64) -> Result<()> {
        if g.nrows() != g.ncols() {
            return Err(Error::DimensionMismatch {
                expected: g.nrows(),
                rows: g.nrows(),
                cols: g.ncols(),
            });
        }
        if !(noise_var > 0.0) || !noise_var.is_finite() {
            return Err(Error::InvalidConfig(
                "noise variance must be positive and finite".into(),
            ));
        }
        Ok(())
    }

    pub fn channel_matrix(&self) -> &DMatrix<Complex64> {
        &self.g
    }

    pub fn noise_var(&self) -> f64 {
        self.noise_var
    }

    /// Soft symbol estimates.
    pub fn soft(&self, y: &[Complex64]) -> Result<Vec<Complex64>> {
        let n = self.g.nrows();
        if y.len() != n {
            return Err(Error::LengthMismatch {
                expected: n,
                got: y.len(),
            });
        }
        let mut a = self.gram.clone();
        for d in 0..n {
            a[(d, d)] += Complex64::new(self.noise_var, 0.0);
        }
        let rhs = DVector::from_column_slice(y);
        // G G^H + N0 I is Hermitian positive definite, so Cholesky applies;
        // it can only fail on garbage inputs (e.g. non-finite entries).
        let chol = a
            .cholesky()
            .ok_or_else(|| Error::InvalidConfig("MMSE system is not positive definite".into()))?;
        let z = chol.solve(&rhs);
        let x = self.g.adjoint() * z;
        Ok(x.iter().cloned().collect())
    }

    /// Hard decisions: nearest constellation point per soft estimate.
    pub fn detect(&self, y: &[Complex64], cons: &Constellation) -> Result<Vec<usize>> {
        Ok(self
            .soft(y)?
            .into_iter()
            .map(|z| cons.hard_decision(z))
            .collect())
    }
}

/// OFDM modulator: inverse normalized DFT of the subcarrier symbols.
pub fn ofdm_modulate(tr: &FresnelTransform, x: &[Complex64]) -> Result<Vec<Complex64>> {
    tr.idft(x)
}

/// OFDM demodulator: normalized DFT of the received block.
pub fn ofdm_demodulate(tr: &FresnelTransform, r: &[Complex64]) -> Result<Vec<Complex64>> {
    tr.dft(r)
}

/// Frequency-domain channel matrix `F * H * F^H`. Diagonal for pure-delay
/// channels; Doppler spreads energy off the diagonal, which is why the
/// OFDM reference receiver equalizes with the full matrix.
pub fn ofdm_channel_matrix(
    h_time: &DMatrix<Complex64>,
    tr: &FresnelTransform,
) -> Result<DMatrix<Complex64>> {
    conjugate_columns(h_time, tr, |t, buf| t.dft(buf))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::{build_time_channel_matrix, cyclic_shift_matrix, ChannelRealization, PathSpec};
    use crate::constellation::ConstellationKind;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    fn random_matrix(n: usize, rng: &mut ChaCha8Rng) -> DMatrix<Complex64> {
        DMatrix::from_fn(n, n, |_, _| {
            Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))
        })
    }

    #[test]
    fn identity_channel_with_tiny_noise_passes_through() {
        let n = 8;
        let eq = MmseEqualizer::new(DMatrix::identity(n, n), 1e-12).unwrap();
        let y: Vec<Complex64> = (0..n).map(|i| Complex64::new(i as f64, -1.0)).collect();
        let soft = eq.soft(&y).unwrap();
        for (s, v) in soft.iter().zip(&y) {
            assert!((s - v).norm() < 1e-9);
        }
    }

    #[test]
    fn scalar_channel_matches_the_analytic_shrinkage() {
        // G = c*I: x_soft = conj(c) / (|c|^2 + N0) * y.
        let n = 4;
        let c = Complex64::new(0.6, -0.8);
        let noise = 0.25;
        let eq = MmseEqualizer::new(DMatrix::identity(n, n) * c, noise).unwrap();
        let y: Vec<Complex64> = (0..n).map(|i| Complex64::new(1.0, i as f64)).collect();
        let soft = eq.soft(&y).unwrap();
        let gain = c.conj() / (c.norm_sqr() + noise);
        for (s, v) in soft.iter().zip(&y) {
            assert!((s - gain * v).norm() < 1e-12);
        }
    }

    #[test]
    fn precomputed_gram_agrees_with_the_dense_product() {
        let n = 16;
        let mut rng = ChaCha8Rng::seed_from_u64(60);
        let g = random_matrix(n, &mut rng);
        let gram = &g * g.adjoint();
        let y: Vec<Complex64> = (0..n)
            .map(|_| Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))
            .collect();
        let plain = MmseEqualizer::new(g.clone(), 0.1).unwrap().soft(&y).unwrap();
        let fast = MmseEqualizer::with_gram(g, gram, 0.1)
            .unwrap()
            .soft(&y)
            .unwrap();
        for (a, b) in plain.iter().zip(&fast) {
            assert!((a - b).norm() < 1e-10);
        }
    }

    #[test]
    fn mmse_beats_zero_forcing_on_an_ill_conditioned_channel() {
        // Two nearly parallel columns make ZF blow up the noise.
        let n = 4;
        let mut g = DMatrix::<Complex64>::identity(n, n);
        g[(0, 1)] = Complex64::new(0.999, 0.0);
        g[(1, 1)] = Complex64::new(1.0, 0.0);
        g[(1, 0)] = Complex64::new(0.999, 0.0);
        let noise = 0.1;
        let cons = Constellation::new(ConstellationKind::Qam4);
        let mut rng = ChaCha8Rng::seed_from_u64(61);
        let eq = MmseEqualizer::new(g.clone(), noise).unwrap();
        let zf_lu = g.clone().lu();
        let mut mmse_mse = 0.0;
        let mut zf_mse = 0.0;
        for _ in 0..200 {
            let idx: Vec<usize> = (0..n).map(|_| rng.gen_range(0..4)).collect();
            let x = DVector::from_vec(cons.indices_to_points(&idx));
            let sigma = (noise / 2.0_f64).sqrt();
            let y: Vec<Complex64> = (&g * &x)
                .iter()
                .map(|v| {
                    let re: f64 = rng.sample(rand_distr::StandardNormal);
                    let im: f64 = rng.sample(rand_distr::StandardNormal);
                    v + Complex64::new(re * sigma, im * sigma)
                })
                .collect();
            let soft = eq.soft(&y).unwrap();
            mmse_mse += soft
                .iter()
                .zip(x.iter())
                .map(|(a, b)| (a - b).norm_sqr())
                .sum::<f64>();
            let zf = zf_lu.solve(&DVector::from_column_slice(&y)).unwrap();
            zf_mse += zf
                .iter()
                .zip(x.iter())
                .map(|(a, b)| (a - b).norm_sqr())
                .sum::<f64>();
        }
        assert!(
            mmse_mse < zf_mse,
            "MMSE {mmse_mse} should beat ZF {zf_mse}"
        );
    }

    #[test]
    fn rejects_invalid_construction() {
        assert!(MmseEqualizer::new(DMatrix::zeros(3, 4), 0.1).is_err());
        assert!(MmseEqualizer::new(DMatrix::identity(3, 3), 0.0).is_err());
        let eq = MmseEqualizer::new(DMatrix::identity(3, 3), 0.1).unwrap();
        assert!(eq.soft(&[Complex64::default(); 2]).is_err());
    }

    #[test]
    fn ofdm_round_trips_through_a_clean_channel() {
        let n = 32;
        let tr = FresnelTransform::new(n).unwrap();
        let cons = Constellation::new(ConstellationKind::Qam4);
        let mut rng = ChaCha8Rng::seed_from_u64(62);
        let idx: Vec<usize> = (0..n).map(|_| rng.gen_range(0..4)).collect();
        let x = cons.indices_to_points(&idx);
        let s = ofdm_modulate(&tr, &x).unwrap();
        let back = ofdm_demodulate(&tr, &s).unwrap();
        for (a, b) in back.iter().zip(&x) {
            assert!((a - b).norm() < 1e-10);
        }
    }

    #[test]
    fn pure_delay_channel_is_a_diagonal_phase_ramp_in_frequency() {
        let n = 16;
        let tr = FresnelTransform::new(n).unwrap();
        let h = cyclic_shift_matrix(n, 3);
        let g = ofdm_channel_matrix(&h, &tr).unwrap();
        for r in 0..n {
            for c in 0..n {
                let want = if r == c {
                    Complex64::from_polar(1.0, -2.0 * PI * 3.0 * r as f64 / n as f64)
                } else {
                    Complex64::default()
                };
                assert!((g[(r, c)] - want).norm() < 1e-10, "({r},{c})");
            }
        }
    }

    #[test]
    fn frequency_conjugation_matches_a_dense_dft_product() {
        let n = 16;
        let tr = FresnelTransform::new(n).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(63);
        let h = random_matrix(n, &mut rng);
        let f = DMatrix::from_fn(n, n, |r, c| {
            Complex64::from_polar(
                1.0 / (n as f64).sqrt(),
                -2.0 * PI * (r * c) as f64 / n as f64,
            )
        });
        let want = &f * &h * f.adjoint();
        let got = ofdm_channel_matrix(&h, &tr).unwrap();
        let dev = (want - got).iter().map(|v| v.norm()).fold(0.0, f64::max);
        assert!(dev < 1e-10);
    }

    #[test]
    fn doppler_demands_the_full_matrix_equalizer() {
        // A channel with integer Doppler is off-diagonal in frequency; the
        // full-matrix MMSE must outperform a diagonal-only equalizer.
        let n = 32;
        let tr = FresnelTransform::new(n).unwrap();
        let cons = Constellation::new(ConstellationKind::Qam4);
        let ch = ChannelRealization::new(
            vec![
                PathSpec {
                    gain: Complex64::new(0.8, 0.0),
                    delay_taps: 0,
                    doppler_int: 2,
                    doppler_frac: 0.1,
                },
                PathSpec {
                    gain: Complex64::new(0.0, 0.6),
                    delay_taps: 4,
                    doppler_int: -1,
                    doppler_frac: -0.2,
                },
            ],
            n,
        )
        .unwrap();
        let h = build_time_channel_matrix(&ch);
        let g = ofdm_channel_matrix(&h, &tr).unwrap();
        let off_diag: f64 = (0..n)
            .flat_map(|r| (0..n).filter(move |&c| c != r).map(move |c| (r, c)))
            .map(|(r, c)| g[(r, c)].norm_sqr())
            .sum();
        assert!(off_diag > 0.1, "expected Doppler leakage, got {off_diag}");

        let noise = 0.05;
        let eq = MmseEqualizer::new(g.clone(), noise).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(64);
        let mut full_errors = 0usize;
        let mut diag_errors = 0usize;
        for _ in 0..50 {
            let idx: Vec<usize> = (0..n).map(|_| rng.gen_range(0..4)).collect();
            let x = DVector::from_vec(cons.indices_to_points(&idx));
            let sigma = (noise / 2.0_f64).sqrt();
            let y: Vec<Complex64> = (&g * &x)
                .iter()
                .map(|v| {
                    let re: f64 = rng.sample(rand_distr::StandardNormal);
                    let im: f64 = rng.sample(rand_distr::StandardNormal);
                    v + Complex64::new(re * sigma, im * sigma)
                })
                .collect();
            let full = eq.detect(&y, &cons).unwrap();
            full_errors += full.iter().zip(&idx).filter(|(a, b)| a != b).count();
            // Per-subcarrier MMSE using only the diagonal.
            diag_errors += y
                .iter()
                .enumerate()
                .map(|(k, &v)| {
                    let d = g[(k, k)];
                    let soft = d.conj() * v / (d.norm_sqr() + noise);
                    cons.hard_decision(soft)
                })
                .zip(&idx)
                .filter(|(a, b)| a != *b)
                .count();
        }
        assert!(
            full_errors < diag_errors,
            "full {full_errors} vs diagonal {diag_errors}"
        );
    }
}
