//! Chirp-domain (Fresnel-domain) representations of the MLMD channel.
//!
//! Conjugating the time-domain channel by the DFnT gives the matrix the
//! receiver actually fights: `H_eff = Phi * H * Phi^H`. For integer Doppler
//! shifts each path collapses to a single cyclic chirp shift with a
//! row-dependent rotation; fractional shifts spread over all chirps but are
//! dominated by a few neighboring integer shifts. Expanding each fractional
//! shift over `2*M_i + 1` neighboring integer Dopplers and regrouping terms
//! by their resulting chirp shift yields the sparse form
//!
//! ```text
//! H~_eff = sum_l diag(w_l) * Pi^(d_l)
//! ```
//!
//! i.e. entry `(r, (r - d_l) mod N)` holds `w_l[r]`: exactly L nonzeros in
//! every row and column. The message-passing detector consumes this form;
//! the exact conjugation stays available as the accuracy oracle.

use std::collections::BTreeMap;
use std::f64::consts::PI;

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::channel::ChannelRealization;
use crate::error::{Error, Result};
use crate::fresnel::{unit_phase, FresnelTransform};

/// `H_eff = Phi * H * Phi^H` by direct dense multiplication. O(N^3);
/// reference implementation.
pub fn exact_fresnel_matrix(
    h_time: &DMatrix<Complex64>,
    transform: &FresnelTransform,
) -> Result<DMatrix<Complex64>> {
    let n = transform.n_chirps();
    check_square(h_time, n)?;
    let phi = transform.matrix();
    Ok(&phi * h_time * phi.adjoint())
}

/// Same conjugation evaluated with the fast transform on columns,
/// O(N^2 log N). Agrees with [`exact_fresnel_matrix`] to floating-point
/// precision; this is the variant the simulation harness uses per block.
pub fn fresnel_matrix_fast(
    h_time: &DMatrix<Complex64>,
    transform: &FresnelTransform,
) -> Result<DMatrix<Complex64>> {
    conjugate_columns(h_time, transform, |tr, buf| tr.dfnt(buf))
}

/// Conjugate `h` by the unitary transform whose forward action on a column
/// is `forward`: returns `U * h * U^H`.
pub(crate) fn conjugate_columns(
    h: &DMatrix<Complex64>,
    transform: &FresnelTransform,
    forward: impl Fn(&FresnelTransform, &[Complex64]) -> Result<Vec<Complex64>>,
) -> Result<DMatrix<Complex64>> {
    let n = transform.n_chirps();
    check_square(h, n)?;
    let apply = |m: &DMatrix<Complex64>| -> Result<DMatrix<Complex64>> {
        let mut out = DMatrix::<Complex64>::zeros(n, n);
        let mut buf = vec![Complex64::default(); n];
        for c in 0..n {
            for r in 0..n {
                buf[r] = m[(r, c)];
            }
            let t = forward(transform, &buf)?;
            for r in 0..n {
                out[(r, c)] = t[r];
            }
        }
        Ok(out)
    };
    // U * h, then U * (U h)^H, then undo the outer transpose:
    // (U (U h)^H)^H = (U h) U^H = U h U^H.
    let uh = apply(h)?;
    let inner = apply(&uh.adjoint())?;
    Ok(inner.adjoint())
}

fn check_square(h: &DMatrix<Complex64>, n: usize) -> Result<()> {
    if h.nrows() != n || h.ncols() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            rows: h.nrows(),
            cols: h.ncols(),
        });
    }
    Ok(())
}

/// Coefficient of integer Doppler `m` in the length-N Fourier expansion of
/// a fractional Doppler tone `exp(j*2*pi*kappa*n/N)`:
///
/// ```text
/// lambda(kappa, m) = (1/N) * (exp(j*2*pi*kappa) - 1) / (exp(j*(2*pi/N)*(kappa - m)) - 1)
/// ```
///
/// with the `kappa = 0` limit `lambda = 1` at `m = 0` and `0` elsewhere.
pub fn lambda_coeff(kappa: f64, m: i64, n: usize) -> Complex64 {
    if kappa == 0.0 {
        return if m == 0 {
            Complex64::new(1.0, 0.0)
        } else {
            Complex64::default()
        };
    }
    let num = Complex64::from_polar(1.0, 2.0 * PI * kappa) - 1.0;
    let den = Complex64::from_polar(1.0, 2.0 * PI * (kappa - m as f64) / n as f64) - 1.0;
    num / (den * n as f64)
}

/// One term of the basis expansion: physical path `source_path` seen
/// through integer Doppler offset `basis_index`.
#[derive(Debug, Clone, Copy)]
pub struct VirtualPath {
    pub source_path: usize,
    pub basis_index: i64,
    /// `h~_i * lambda(kappa_i, m) * exp(-j*pi*(k_i+m)^2/N)`.
    pub weight: Complex64,
    /// Integer Doppler of this term, `k_i + basis_index`.
    pub doppler: i64,
    /// Cyclic chirp shift `(l_i + k_i + basis_index) mod N`.
    pub chirp_shift: usize,
}

/// Expand every physical path over a window of neighboring integer
/// Dopplers. `truncation[i]` is the half-width `M_i` for path i: indices
/// `-M_i..=M_i` are kept, clipped to the fundamental window
/// `[-N/2, N/2 - 1]` (so any `M_i >= N/2` yields the complete, exact
/// expansion). Paths with zero fractional Doppler contribute exactly one
/// term regardless of `M_i`.
pub fn expand_virtual_paths(
    ch: &ChannelRealization,
    truncation: &[usize],
) -> Result<Vec<VirtualPath>> {
    if truncation.len() != ch.paths().len() {
        return Err(Error::InvalidConfig(format!(
            "need one truncation half-width per path: {} paths, {} widths",
            ch.paths().len(),
            truncation.len()
        )));
    }
    let n = ch.n_chirps();
    let half = n as i64 / 2;
    let mut virtuals = Vec::new();
    for (i, (path, h_eq)) in ch.paths().iter().zip(ch.equivalent_gains()).enumerate() {
        let (lo, hi) = if path.doppler_frac == 0.0 {
            (0i64, 0i64)
        } else {
            let m = truncation[i] as i64;
            ((-m).max(-half), m.min(half - 1))
        };
        for m in lo..=hi {
            let a = path.doppler_int + m;
            let weight = h_eq * lambda_coeff(path.doppler_frac, m, n) * unit_phase(-a * a, n);
            let chirp_shift = (path.delay_taps as i64 + a).rem_euclid(n as i64) as usize;
            virtuals.push(VirtualPath {
                source_path: i,
                basis_index: m,
                weight,
                doppler: a,
                chirp_shift,
            });
        }
    }
    Ok(virtuals)
}

/// All virtual paths sharing one chirp shift, merged into a single
/// row-dependent weight profile.
#[derive(Debug, Clone)]
pub struct LogicalPath {
    /// Cyclic chirp shift `d`: transmit chirp c lands on receive chirp
    /// `(c + d) mod N`.
    pub chirp_shift: usize,
    /// `weights[r]` is the gain this path applies at receive chirp r (the
    /// entry at row r, column `(r - d) mod N` of the dense matrix).
    pub weights: Vec<Complex64>,
}

impl LogicalPath {
    /// Receive chirp hit by transmit chirp `c` via this path.
    pub fn target_index(&self, c: usize) -> usize {
        (c + self.chirp_shift) % self.weights.len()
    }
}

/// Sparse chirp-domain channel: L logical paths, each a cyclic shift plus a
/// weight profile. The dense equivalent has exactly L nonzero entries in
/// every row and every column.
#[derive(Debug, Clone)]
pub struct SparseFresnelChannel {
    n_chirps: usize,
    logical_paths: Vec<LogicalPath>,
    /// Extra per-sample noise variance budgeted for the truncation residual
    /// `H_eff - H~_eff`; zero until calibrated.
    noise_inflation: f64,
}

impl SparseFresnelChannel {
    /// Group virtual paths by chirp shift and accumulate their Doppler
    /// rotations into per-shift weight profiles. Shifts whose weights merge
    /// to (near) zero are kept; see [`Self::pruned`].
    pub fn merge(n_chirps: usize, virtuals: &[VirtualPath]) -> Result<Self> {
        if n_chirps < 2 || !n_chirps.is_power_of_two() {
            return Err(Error::InvalidBlockSize(n_chirps));
        }
        let mut groups: BTreeMap<usize, Vec<(Complex64, i64)>> = BTreeMap::new();
        for v in virtuals {
            if v.chirp_shift >= n_chirps {
                return Err(Error::DelayExceedsBlock {
                    delay_taps: v.chirp_shift,
                    n: n_chirps,
                });
            }
            groups
                .entry(v.chirp_shift)
                .or_default()
                .push((v.weight, v.doppler));
        }
        let n = n_chirps as f64;
        let logical_paths = groups
            .into_iter()
            .map(|(chirp_shift, terms)| {
                let weights = (0..n_chirps)
                    .map(|r| {
                        terms
                            .iter()
                            .map(|&(w, a)| {
                                w * Complex64::from_polar(1.0, 2.0 * PI * a as f64 * r as f64 / n)
                            })
                            .sum()
                    })
                    .collect();
                LogicalPath {
                    chirp_shift,
                    weights,
                }
            })
            .collect();
        Ok(Self {
            n_chirps,
            logical_paths,
            noise_inflation: 0.0,
        })
    }

    /// Expansion plus merge with one truncation half-width for all paths.
    pub fn from_realization(ch: &ChannelRealization, truncation: usize) -> Result<Self> {
        let widths = vec![truncation; ch.paths().len()];
        let virtuals = expand_virtual_paths(ch, &widths)?;
        Self::merge(ch.n_chirps(), &virtuals)
    }

    pub fn n_chirps(&self) -> usize {
        self.n_chirps
    }

    pub fn logical_paths(&self) -> &[LogicalPath] {
        &self.logical_paths
    }

    pub fn num_logical_paths(&self) -> usize {
        self.logical_paths.len()
    }

    pub fn chirp_shifts(&self) -> Vec<usize> {
        self.logical_paths.iter().map(|p| p.chirp_shift).collect()
    }

    pub fn noise_inflation(&self) -> f64 {
        self.noise_inflation
    }

    /// Drop logical paths whose weight profile has sup-norm at or below
    /// `threshold`.
    pub fn pruned(mut self, threshold: f64) -> Self {
        self.logical_paths.retain(|p| {
            p.weights.iter().map(|w| w.norm()).fold(0.0, f64::max) > threshold
        });
        self
    }

    /// Dense N x N matrix `sum_l diag(weights_l) * Pi^(d_l)`.
    pub fn assemble_dense(&self) -> DMatrix<Complex64> {
        let n = self.n_chirps;
        let mut out = DMatrix::<Complex64>::zeros(n, n);
        for lp in &self.logical_paths {
            for r in 0..n {
                let c = (r + n - lp.chirp_shift) % n;
                out[(r, c)] += lp.weights[r];
            }
        }
        out
    }

    /// Relative Frobenius error `||H~ - H_eff||_F / ||H_eff||_F` against an
    /// exact chirp-domain matrix.
    pub fn approximation_error(&self, oracle: &DMatrix<Complex64>) -> Result<f64> {
        check_square(oracle, self.n_chirps)?;
        let denom = oracle.norm();
        if !(denom > 0.0) {
            return Err(Error::InvalidConfig(
                "reference channel matrix is zero".into(),
            ));
        }
        Ok((self.assemble_dense() - oracle).norm() / denom)
    }

    /// Budget the truncation residual as extra observation noise: with
    /// i.i.d. symbols of mean energy `symbol_energy`, the residual
    /// contributes `||H_eff - H~_eff||_F^2 * symbol_energy / N` variance
    /// per received sample.
    pub fn calibrate_noise_inflation(
        &mut self,
        oracle: &DMatrix<Complex64>,
        symbol_energy: f64,
    ) -> Result<()> {
        check_square(oracle, self.n_chirps)?;
        let residual = (self.assemble_dense() - oracle).norm();
        self.noise_inflation = residual * residual * symbol_energy / self.n_chirps as f64;
        Ok(())
    }
}
