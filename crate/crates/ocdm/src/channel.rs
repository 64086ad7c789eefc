//! Multi-lag / multi-Doppler (MLMD) time-variant channel model.
//!
//! A realization is a finite set of discrete paths, each with a complex
//! gain, an integer delay in samples, and a Doppler shift expressed in
//! chirp-spacing units and split into an integer part `k` and a fractional
//! part `kappa` in (-0.5, 0.5]. Over one block of N samples the received
//! signal is
//!
//! ```text
//! r[n] = sum_i  h~_i * exp(j*2*pi*(k_i + kappa_i)*n / N) * s[n - l_i] + w[n]
//! ```
//!
//! with the cyclic prefix turning the delay into a cyclic shift and
//! `h~_i = h_i * exp(-j*2*pi*(k_i + kappa_i)*l_i / N)` absorbing the phase
//! origin of each path.

use std::f64::consts::{FRAC_PI_2, PI};
use std::path::Path;

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One discrete propagation path after quantization to the block grid.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PathSpec {
    /// Complex path gain `h_i` (before the delay-dependent phase rotation).
    pub gain: Complex64,
    /// Delay in samples, `0 <= delay_taps < N`.
    pub delay_taps: usize,
    /// Integer part of the Doppler shift in chirp-spacing units.
    pub doppler_int: i64,
    /// Fractional part of the Doppler shift, in (-0.5, 0.5].
    pub doppler_frac: f64,
}

impl PathSpec {
    /// Doppler shift in units of the chirp spacing, `k + kappa`.
    pub fn normalized_doppler(&self) -> f64 {
        self.doppler_int as f64 + self.doppler_frac
    }
}

/// A drawn channel: paths plus the per-path equivalent gains used by every
/// receive-side expression.
#[derive(Debug, Clone)]
pub struct ChannelRealization {
    paths: Vec<PathSpec>,
    n_chirps: usize,
    /// `h~_i = h_i * exp(-j*2*pi*(k_i+kappa_i)*l_i/N)`.
    equivalent_gains: Vec<Complex64>,
}

impl ChannelRealization {
    pub fn new(paths: Vec<PathSpec>, n_chirps: usize) -> Result<Self> {
        if !n_chirps.is_power_of_two() || n_chirps < 2 {
            return Err(Error::InvalidBlockSize(n_chirps));
        }
        if paths.is_empty() {
            return Err(Error::InvalidConfig("channel needs at least one path".into()));
        }
        for p in &paths {
            if p.delay_taps >= n_chirps {
                return Err(Error::DelayExceedsBlock {
                    delay_taps: p.delay_taps,
                    n: n_chirps,
                });
            }
            if !(p.doppler_frac > -0.5 && p.doppler_frac <= 0.5) {
                return Err(Error::InvalidConfig(format!(
                    "fractional Doppler {} outside (-0.5, 0.5]",
                    p.doppler_frac
                )));
            }
            if !p.gain.re.is_finite() || !p.gain.im.is_finite() {
                return Err(Error::NonFiniteInput);
            }
        }
        let n = n_chirps as f64;
        let equivalent_gains = paths
            .iter()
            .map(|p| {
                let phase = -2.0 * PI * p.normalized_doppler() * p.delay_taps as f64 / n;
                p.gain * Complex64::from_polar(1.0, phase)
            })
            .collect();
        Ok(Self {
            paths,
            n_chirps,
            equivalent_gains,
        })
    }

    pub fn paths(&self) -> &[PathSpec] {
        &self.paths
    }

    pub fn n_chirps(&self) -> usize {
        self.n_chirps
    }

    pub fn equivalent_gains(&self) -> &[Complex64] {
        &self.equivalent_gains
    }

    pub fn max_delay_taps(&self) -> usize {
        self.paths.iter().map(|p| p.delay_taps).max().unwrap_or(0)
    }

    /// Total instantaneous path power `sum_i |h_i|^2`.
    pub fn total_power(&self) -> f64 {
        self.paths.iter().map(|p| p.gain.norm_sqr()).sum()
    }
}

/// Quantize a physical (delay, Doppler) pair onto the block grid.
///
/// Delay rounds to the nearest sample. The Doppler shift, measured in units
/// of the chirp spacing `sample_rate / N`, splits into an integer `k` and a
/// fractional `kappa` with `kappa` in (-0.5, 0.5] (ties resolve to +0.5);
/// `k + kappa` reproduces the normalized Doppler exactly.
pub fn quantize_path(
    delay_s: f64,
    doppler_hz: f64,
    sample_rate: f64,
    n_chirps: usize,
) -> Result<(usize, i64, f64)> {
    if !(delay_s >= 0.0) || !delay_s.is_finite() || !doppler_hz.is_finite() {
        return Err(Error::InvalidConfig(format!(
            "invalid delay/Doppler pair ({delay_s}, {doppler_hz})"
        )));
    }
    if sample_rate <= 0.0 {
        return Err(Error::InvalidConfig("sample rate must be positive".into()));
    }
    let delay_taps = (delay_s * sample_rate).round() as usize;
    if delay_taps >= n_chirps {
        return Err(Error::DelayExceedsBlock {
            delay_taps,
            n: n_chirps,
        });
    }
    let nu = doppler_hz * n_chirps as f64 / sample_rate;
    // k = ceil(nu - 1/2) puts kappa = nu - k in (-0.5, 0.5] with the tie at
    // half a spacing going to +0.5.
    let k = (nu - 0.5).ceil() as i64;
    let kappa = nu - k as f64;
    Ok((delay_taps, k, kappa))
}

/// One tap of a delay-power profile.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProfileTap {
    pub delay_s: f64,
    pub power_db: f64,
}

/// A statistical channel description: tapped delay line with relative tap
/// powers, a maximum Doppler shift, and the OCDM frame numerology that goes
/// with it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DelayPowerProfile {
    pub name: String,
    pub carrier_hz: f64,
    /// Complex baseband bandwidth; the model is critically sampled, so this
    /// is also the sample rate.
    pub bandwidth_hz: f64,
    pub n_chirps: usize,
    pub guard_interval_s: f64,
    pub max_doppler_hz: f64,
    pub taps: Vec<ProfileTap>,
}

impl DelayPowerProfile {
    /// Extended Vehicular A power-delay profile on a 15.36 MHz / 256-chirp
    /// numerology at 5 GHz, with the Doppler limit set by the UE speed.
    pub fn eva(speed_kmph: f64) -> Self {
        const DELAYS_NS: [f64; 9] = [0.0, 30.0, 150.0, 310.0, 370.0, 710.0, 1090.0, 1730.0, 2510.0];
        const POWERS_DB: [f64; 9] = [0.0, -1.5, -1.4, -3.6, -0.6, -9.1, -7.0, -12.0, -16.9];
        let carrier_hz = 5.0e9;
        Self {
            name: format!("eva-{:.0}kmph", speed_kmph),
            carrier_hz,
            bandwidth_hz: 15.36e6,
            n_chirps: 256,
            guard_interval_s: 2.6e-6,
            max_doppler_hz: carrier_hz * (speed_kmph / 3.6) / 3.0e8,
            taps: DELAYS_NS
                .iter()
                .zip(&POWERS_DB)
                .map(|(&d, &p)| ProfileTap {
                    delay_s: d * 1e-9,
                    power_db: p,
                })
                .collect(),
        }
    }

    /// Shallow-water acoustic profile: 3.2 kHz of bandwidth at a 24 kHz
    /// carrier, 128 chirps, 15 ms guard, platform speed 40 km/h, sound
    /// speed 1500 m/s. Delay and Doppler spreads overlap the signalling
    /// grid by orders of magnitude more than the radio profile does.
    pub fn underwater_acoustic() -> Self {
        const DELAYS_MS: [f64; 10] = [0.0, 0.6, 1.3, 2.2, 6.9, 7.5, 8.1, 13.1, 13.8, 14.7];
        const POWERS_DB: [f64; 10] =
            [0.0, -0.6, -1.0, -1.3, -2.8, -4.2, -3.5, -6.2, -7.3, -8.1];
        let carrier_hz = 24.0e3;
        Self {
            name: "uwa-40kmph".into(),
            carrier_hz,
            bandwidth_hz: 3.2e3,
            n_chirps: 128,
            guard_interval_s: 15.0e-3,
            max_doppler_hz: carrier_hz * (40.0 / 3.6) / 1500.0,
            taps: DELAYS_MS
                .iter()
                .zip(&POWERS_DB)
                .map(|(&d, &p)| ProfileTap {
                    delay_s: d * 1e-3,
                    power_db: p,
                })
                .collect(),
        }
    }

    pub fn sample_rate(&self) -> f64 {
        self.bandwidth_hz
    }

    /// Chirp spacing in Hz (block duration is N / sample_rate).
    pub fn chirp_spacing_hz(&self) -> f64 {
        self.bandwidth_hz / self.n_chirps as f64
    }

    /// Cyclic-prefix length covering the guard interval, in samples.
    pub fn cp_taps(&self) -> usize {
        let raw = self.guard_interval_s * self.sample_rate();
        // Guard against float dust pushing an exact integer across the
        // ceiling (e.g. 15 ms * 3.2 kHz).
        if (raw - raw.round()).abs() < 1e-9 {
            raw.round() as usize
        } else {
            raw.ceil() as usize
        }
    }

    pub fn max_delay_taps(&self) -> usize {
        self.taps
            .iter()
            .map(|t| (t.delay_s * self.sample_rate()).round() as usize)
            .max()
            .unwrap_or(0)
    }

    /// Delay spread times Doppler spread (two-sided); >= 1 means the
    /// channel is overspread.
    pub fn spread_product(&self) -> f64 {
        let max_delay = self
            .taps
            .iter()
            .map(|t| t.delay_s)
            .fold(0.0f64, f64::max);
        max_delay * 2.0 * self.max_doppler_hz
    }

    pub fn validate(&self) -> Result<()> {
        if !self.n_chirps.is_power_of_two() || self.n_chirps < 2 {
            return Err(Error::InvalidBlockSize(self.n_chirps));
        }
        if !(self.bandwidth_hz > 0.0) {
            return Err(Error::InvalidProfile("bandwidth must be positive".into()));
        }
        if !(self.carrier_hz > 0.0) {
            return Err(Error::InvalidProfile("carrier must be positive".into()));
        }
        if !(self.max_doppler_hz >= 0.0) {
            return Err(Error::InvalidProfile(
                "maximum Doppler must be non-negative".into(),
            ));
        }
        if !(self.guard_interval_s >= 0.0) {
            return Err(Error::InvalidProfile(
                "guard interval must be non-negative".into(),
            ));
        }
        if self.taps.is_empty() {
            return Err(Error::InvalidProfile("profile has no taps".into()));
        }
        if self.taps[0].delay_s != 0.0 {
            return Err(Error::InvalidProfile(
                "first tap must be at zero delay".into(),
            ));
        }
        for w in self.taps.windows(2) {
            if !(w[1].delay_s > w[0].delay_s) {
                return Err(Error::InvalidProfile(
                    "tap delays must be strictly increasing".into(),
                ));
            }
        }
        let max_delay = self.max_delay_taps();
        if max_delay >= self.n_chirps {
            return Err(Error::DelayExceedsBlock {
                delay_taps: max_delay,
                n: self.n_chirps,
            });
        }
        if max_delay > self.cp_taps() {
            return Err(Error::InsufficientCyclicPrefix {
                cp_taps: self.cp_taps(),
                max_delay_taps: max_delay,
            });
        }
        Ok(())
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let profile: Self = toml::from_str(&text).map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            message: e.to_string(),
        })?;
        profile.validate()?;
        Ok(profile)
    }
}

/// Draw one channel realization from a profile.
///
/// Tap gains are complex Gaussian with variance proportional to the tap's
/// relative power, then jointly rescaled so every draw carries unit total
/// power. Each tap's Doppler shift is `f_max * cos(theta)` with `theta`
/// uniform on [-pi/2, pi/2].
pub fn draw_channel<R: Rng + ?Sized>(
    profile: &DelayPowerProfile,
    rng: &mut R,
) -> Result<ChannelRealization> {
    profile.validate()?;
    let rate = profile.sample_rate();
    let mut gains = Vec::with_capacity(profile.taps.len());
    let mut dopplers = Vec::with_capacity(profile.taps.len());
    for tap in &profile.taps {
        let sigma = (10f64.powf(tap.power_db / 10.0) / 2.0).sqrt();
        let re: f64 = rng.sample(StandardNormal);
        let im: f64 = rng.sample(StandardNormal);
        gains.push(Complex64::new(re * sigma, im * sigma));
        let theta = rng.gen_range(-FRAC_PI_2..FRAC_PI_2);
        dopplers.push(profile.max_doppler_hz * theta.cos());
    }
    let total: f64 = gains.iter().map(|g| g.norm_sqr()).sum();
    if !(total > 0.0) {
        return Err(Error::InvalidConfig(
            "degenerate draw: zero total path power".into(),
        ));
    }
    let scale = total.sqrt().recip();
    let paths = profile
        .taps
        .iter()
        .zip(gains.iter().zip(&dopplers))
        .map(|(tap, (g, &fd))| {
            let (delay_taps, doppler_int, doppler_frac) =
                quantize_path(tap.delay_s, fd, rate, profile.n_chirps)?;
            Ok(PathSpec {
                gain: g * scale,
                delay_taps,
                doppler_int,
                doppler_frac,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    ChannelRealization::new(paths, profile.n_chirps)
}

/// Dense N x N time-domain channel matrix: column c scatters onto row
/// `(c + l_i) mod N` with weight `h~_i * exp(j*2*pi*(k_i+kappa_i)*r/N)`
/// evaluated at the receive index r.
pub fn build_time_channel_matrix(ch: &ChannelRealization) -> DMatrix<Complex64> {
    let n = ch.n_chirps();
    let mut h = DMatrix::<Complex64>::zeros(n, n);
    for (p, g) in ch.paths().iter().zip(ch.equivalent_gains()) {
        let nu = p.normalized_doppler();
        for c in 0..n {
            let r = (c + p.delay_taps) % n;
            let rot = Complex64::from_polar(1.0, 2.0 * PI * nu * r as f64 / n as f64);
            h[(r, c)] += g * rot;
        }
    }
    h
}

/// Run one block (cyclic prefix included) through the channel and return
/// the N received samples after prefix removal. `s_with_cp` holds the
/// prefix followed by the N-sample block; the prefix must cover the longest
/// path delay. Noise of variance `noise_var` per complex sample is added
/// when `noise_var > 0` (no RNG draws otherwise).
pub fn apply_channel<R: Rng + ?Sized>(
    ch: &ChannelRealization,
    s_with_cp: &[Complex64],
    noise_var: f64,
    rng: &mut R,
) -> Result<Vec<Complex64>> {
    let n = ch.n_chirps();
    if s_with_cp.len() < n {
        return Err(Error::LengthMismatch {
            expected: n,
            got: s_with_cp.len(),
        });
    }
    let cp = s_with_cp.len() - n;
    let max_delay = ch.max_delay_taps();
    if cp < max_delay {
        return Err(Error::InsufficientCyclicPrefix {
            cp_taps: cp,
            max_delay_taps: max_delay,
        });
    }
    if s_with_cp
        .iter()
        .any(|v| !v.re.is_finite() || !v.im.is_finite())
    {
        return Err(Error::NonFiniteInput);
    }
    let mut r = vec![Complex64::default(); n];
    for (p, g) in ch.paths().iter().zip(ch.equivalent_gains()) {
        let nu = p.normalized_doppler();
        for (idx, out) in r.iter_mut().enumerate() {
            let rot = Complex64::from_polar(1.0, 2.0 * PI * nu * idx as f64 / n as f64);
            *out += g * rot * s_with_cp[cp + idx - p.delay_taps];
        }
    }
    if noise_var > 0.0 {
        let sigma = (noise_var / 2.0).sqrt();
        for out in &mut r {
            let re: f64 = rng.sample(StandardNormal);
            let im: f64 = rng.sample(StandardNormal);
            *out += Complex64::new(re * sigma, im * sigma);
        }
    }
    Ok(r)
}

/// `H * H^H` assembled directly from the path structure in O(P^2 * N).
///
/// With `H = sum_i h~_i * Delta^(nu_i) * Pi^(l_i)`, each pair (i, j)
/// contributes `h~_i * conj(h~_j)` on the cyclic diagonal `l_i - l_j`, with
/// the entry at row r, column `(r - l_i + l_j) mod N` carrying the rotation
/// `exp(j*2*pi*(nu_i*r - nu_j*c)/N)`. Equals the dense product to
/// floating-point precision at a fraction of the cost.
pub fn build_time_gram_matrix(ch: &ChannelRealization) -> DMatrix<Complex64> {
    let n = ch.n_chirps();
    let nf = n as f64;
    let mut out = DMatrix::<Complex64>::zeros(n, n);
    for (pi, gi) in ch.paths().iter().zip(ch.equivalent_gains()) {
        for (pj, gj) in ch.paths().iter().zip(ch.equivalent_gains()) {
            let coeff = gi * gj.conj();
            let nu_i = pi.normalized_doppler();
            let nu_j = pj.normalized_doppler();
            let shift = pi.delay_taps as i64 - pj.delay_taps as i64;
            for r in 0..n {
                let c = (r as i64 - shift).rem_euclid(n as i64) as usize;
                let phase = 2.0 * PI * (nu_i * r as f64 - nu_j * c as f64) / nf;
                out[(r, c)] += coeff * Complex64::from_polar(1.0, phase);
            }
        }
    }
    out
}

/// Dense diagonal Doppler operator `diag(exp(j*2*pi*a*r/N))`; `a` may be
/// fractional.
pub fn doppler_matrix(n: usize, exponent: f64) -> DMatrix<Complex64> {
    DMatrix::from_fn(n, n, |r, c| {
        if r == c {
            Complex64::from_polar(1.0, 2.0 * PI * exponent * r as f64 / n as f64)
        } else {
            Complex64::default()
        }
    })
}

/// Dense cyclic-shift operator: `(Pi^k s)[r] = s[(r - k) mod N]`.
pub fn cyclic_shift_matrix(n: usize, k: i64) -> DMatrix<Complex64> {
    let mut m = DMatrix::<Complex64>::zeros(n, n);
    for c in 0..n {
        let r = (c as i64 + k).rem_euclid(n as i64) as usize;
        m[(r, c)] = Complex64::new(1.0, 0.0);
    }
    m
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn single_path(n: usize, gain: Complex64, l: usize, k: i64, kappa: f64) -> ChannelRealization {
        ChannelRealization::new(
            vec![PathSpec {
                gain,
                delay_taps: l,
                doppler_int: k,
                doppler_frac: kappa,
            }],
            n,
        )
        .unwrap()
    }

    #[test]
    fn quantize_zero_pair() {
        assert_eq!(quantize_path(0.0, 0.0, 15.36e6, 256).unwrap(), (0, 0, 0.0));
    }

    #[test]
    fn quantize_longest_radio_tap() {
        // 2510 ns at 15.36 MHz is 38.55 samples -> rounds to 39.
        let (l, k, kappa) = quantize_path(2510e-9, 0.0, 15.36e6, 256).unwrap();
        assert_eq!((l, k), (39, 0));
        assert_eq!(kappa, 0.0);
    }

    #[test]
    fn quantize_acoustic_doppler_split() {
        // 177.8 Hz against a 25 Hz chirp spacing: 7.112 spacings.
        let (_, k, kappa) = quantize_path(0.0, 177.8, 3.2e3, 128).unwrap();
        assert_eq!(k, 7);
        assert!((kappa - 0.112).abs() < 1e-9);
    }

    #[test]
    fn quantize_fractional_ties_go_up() {
        // Exactly half a spacing: kappa must land on +0.5, not -0.5.
        let (_, k, kappa) = quantize_path(0.0, 187.5, 3.2e3, 128).unwrap();
        assert_eq!((k, kappa), (7, 0.5));
        let (_, k, kappa) = quantize_path(0.0, -12.5, 3.2e3, 128).unwrap();
        assert_eq!((k, kappa), (-1, 0.5));
    }

    #[test]
    fn quantize_split_is_exact() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..500 {
            let doppler = rng.gen_range(-400.0..400.0);
            let (_, k, kappa) = quantize_path(0.0, doppler, 3.2e3, 128).unwrap();
            let nu = doppler * 128.0 / 3.2e3;
            assert!((k as f64 + kappa - nu).abs() < 1e-14);
            assert!(kappa > -0.5 && kappa <= 0.5);
        }
    }

    #[test]
    fn quantize_rejects_oversize_delay() {
        assert!(matches!(
            quantize_path(100e-6, 0.0, 15.36e6, 256),
            Err(Error::DelayExceedsBlock { .. })
        ));
    }

    #[test]
    fn eva_profile_numerology() {
        let p = DelayPowerProfile::eva(500.0);
        p.validate().unwrap();
        assert_eq!(p.n_chirps, 256);
        assert_eq!(p.cp_taps(), 40);
        assert_eq!(p.max_delay_taps(), 39);
        assert!((p.chirp_spacing_hz() - 60e3).abs() < 1e-6);
        assert!((p.max_doppler_hz - 2314.8148).abs() < 1e-3);
        // Normalized Doppler stays well inside half a chirp spacing.
        assert!(p.max_doppler_hz / p.chirp_spacing_hz() < 0.05);
        // Underspread: delay-Doppler product around 0.01.
        assert!((p.spread_product() - 0.0116).abs() < 3e-4);
    }

    #[test]
    fn acoustic_profile_numerology() {
        let p = DelayPowerProfile::underwater_acoustic();
        p.validate().unwrap();
        assert_eq!(p.n_chirps, 128);
        assert_eq!(p.cp_taps(), 48);
        assert_eq!(p.max_delay_taps(), 47);
        assert!((p.chirp_spacing_hz() - 25.0).abs() < 1e-9);
        assert!((p.max_doppler_hz - 177.7778).abs() < 1e-3);
        // Normalized Doppler spans roughly seven chirp spacings.
        assert!((p.max_doppler_hz / p.chirp_spacing_hz() - 7.111).abs() < 1e-2);
        // Overspread: delay-Doppler product >> 1.
        assert!((p.spread_product() - 5.227).abs() < 0.01);
    }

    #[test]
    fn profiles_round_trip_through_toml() {
        for p in [
            DelayPowerProfile::eva(500.0),
            DelayPowerProfile::eva(300.0),
            DelayPowerProfile::underwater_acoustic(),
        ] {
            let text = toml::to_string(&p).unwrap();
            let back: DelayPowerProfile = toml::from_str(&text).unwrap();
            assert_eq!(back, p);
        }
    }

    #[test]
    fn profile_validation_catches_bad_tap_tables() {
        let mut p = DelayPowerProfile::eva(500.0);
        p.taps[0].delay_s = 1e-9;
        assert!(p.validate().is_err());

        let mut p = DelayPowerProfile::eva(500.0);
        p.taps.swap(3, 4);
        assert!(p.validate().is_err());

        let mut p = DelayPowerProfile::eva(500.0);
        p.n_chirps = 300;
        assert!(p.validate().is_err());

        let mut p = DelayPowerProfile::eva(500.0);
        p.guard_interval_s = 1e-7; // shorter than the delay spread
        assert!(matches!(
            p.validate(),
            Err(Error::InsufficientCyclicPrefix { .. })
        ));
    }

    #[test]
    fn radio_draws_have_integer_free_doppler() {
        let p = DelayPowerProfile::eva(500.0);
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        for _ in 0..100 {
            let ch = draw_channel(&p, &mut rng).unwrap();
            assert_eq!(ch.paths().len(), 9);
            assert!((ch.total_power() - 1.0).abs() < 1e-12);
            for path in ch.paths() {
                assert_eq!(path.doppler_int, 0);
                assert!(path.doppler_frac.abs() < 0.05);
            }
        }
    }

    #[test]
    fn acoustic_draws_cover_the_integer_doppler_range() {
        let p = DelayPowerProfile::underwater_acoustic();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let mut seen_positive = false;
        for _ in 0..200 {
            let ch = draw_channel(&p, &mut rng).unwrap();
            assert_eq!(ch.paths().len(), 10);
            assert!((ch.total_power() - 1.0).abs() < 1e-12);
            for path in ch.paths() {
                assert!((0..=7).contains(&path.doppler_int), "k={}", path.doppler_int);
                if path.doppler_int > 0 {
                    seen_positive = true;
                }
            }
        }
        assert!(seen_positive);
    }

    #[test]
    fn single_tap_profile_draws_unit_gain() {
        let p = DelayPowerProfile {
            name: "flat".into(),
            carrier_hz: 1e6,
            bandwidth_hz: 1e3,
            n_chirps: 16,
            guard_interval_s: 0.0,
            max_doppler_hz: 0.0,
            taps: vec![ProfileTap {
                delay_s: 0.0,
                power_db: 0.0,
            }],
        };
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let ch = draw_channel(&p, &mut rng).unwrap();
        let path = ch.paths()[0];
        assert!((path.gain.norm() - 1.0).abs() < 1e-12);
        assert_eq!(
            (path.delay_taps, path.doppler_int, path.doppler_frac),
            (0, 0, 0.0)
        );
        assert_eq!(ch.equivalent_gains()[0], path.gain);
    }

    #[test]
    fn trivial_path_builds_identity_matrix() {
        let ch = single_path(8, Complex64::new(1.0, 0.0), 0, 0, 0.0);
        let h = build_time_channel_matrix(&ch);
        let eye = DMatrix::<Complex64>::identity(8, 8);
        assert!((h - eye).norm() < 1e-12);
    }

    #[test]
    fn pure_delay_builds_shift_matrix() {
        let n = 8;
        let ch = single_path(n, Complex64::new(1.0, 0.0), 2, 0, 0.0);
        let h = build_time_channel_matrix(&ch);
        assert!((h - cyclic_shift_matrix(n, 2)).norm() < 1e-12);
    }

    #[test]
    fn matrix_columns_match_streaming_impulse_responses() {
        // Push unit impulses through the streaming form and compare with the
        // assembled matrix, column by column.
        let n = 16;
        let ch = ChannelRealization::new(
            vec![
                PathSpec {
                    gain: Complex64::new(0.8, 0.1),
                    delay_taps: 0,
                    doppler_int: 1,
                    doppler_frac: 0.2,
                },
                PathSpec {
                    gain: Complex64::new(-0.3, 0.5),
                    delay_taps: 3,
                    doppler_int: -1,
                    doppler_frac: -0.4,
                },
            ],
            n,
        )
        .unwrap();
        let h = build_time_channel_matrix(&ch);
        let cp = ch.max_delay_taps();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for c in 0..n {
            let mut block = vec![Complex64::default(); n];
            block[c] = Complex64::new(1.0, 0.0);
            let mut with_cp = block[n - cp..].to_vec();
            with_cp.extend_from_slice(&block);
            let r = apply_channel(&ch, &with_cp, 0.0, &mut rng).unwrap();
            for row in 0..n {
                assert!(
                    (h[(row, c)] - r[row]).norm() < 1e-12,
                    "entry ({row},{c})"
                );
            }
        }
    }

    #[test]
    fn streaming_apply_equals_matrix_product() {
        let n = 32;
        let p = DelayPowerProfile::underwater_acoustic();
        // Rescale the acoustic taps onto a 32-chirp toy grid for speed.
        let p = DelayPowerProfile {
            n_chirps: n,
            bandwidth_hz: 800.0,
            guard_interval_s: 20e-3,
            ..p
        };
        let mut rng = ChaCha8Rng::seed_from_u64(19);
        let ch = draw_channel(&p, &mut rng).unwrap();
        let h = build_time_channel_matrix(&ch);
        let cp = p.cp_taps().min(n - 1);
        let block: Vec<Complex64> = (0..n)
            .map(|_| Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))
            .collect();
        let mut with_cp = block[n - cp..].to_vec();
        with_cp.extend_from_slice(&block);
        let r = apply_channel(&ch, &with_cp, 0.0, &mut rng).unwrap();
        let x = nalgebra::DVector::from_column_slice(&block);
        let want = &h * x;
        for i in 0..n {
            assert!((r[i] - want[i]).norm() < 1e-12);
        }
    }

    #[test]
    fn structured_gram_equals_the_dense_product() {
        for seed in 0..4u64 {
            let n = 32;
            let p = DelayPowerProfile {
                n_chirps: n,
                bandwidth_hz: 800.0,
                guard_interval_s: 20e-3,
                ..DelayPowerProfile::underwater_acoustic()
            };
            let mut rng = ChaCha8Rng::seed_from_u64(700 + seed);
            let ch = draw_channel(&p, &mut rng).unwrap();
            let h = build_time_channel_matrix(&ch);
            let dense = &h * h.adjoint();
            let fast = build_time_gram_matrix(&ch);
            let dev = (&dense - &fast).iter().map(|v| v.norm()).fold(0.0, f64::max);
            assert!(dev < 1e-10, "seed {seed}: max deviation {dev}");
        }
    }

    #[test]
    fn short_prefix_is_rejected() {
        let ch = single_path(16, Complex64::new(1.0, 0.0), 5, 0, 0.0);
        let s = vec![Complex64::new(1.0, 0.0); 16 + 3];
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(matches!(
            apply_channel(&ch, &s, 0.0, &mut rng),
            Err(Error::InsufficientCyclicPrefix { .. })
        ));
    }

    #[test]
    fn added_noise_has_the_requested_variance() {
        let n = 8;
        let ch = single_path(n, Complex64::new(1.0, 0.0), 0, 0, 0.0);
        let s = vec![Complex64::default(); n];
        let noise_var = 0.5;
        let mut rng = ChaCha8Rng::seed_from_u64(2024);
        let blocks = 100_000;
        let mut acc = 0.0;
        for _ in 0..blocks {
            let r = apply_channel(&ch, &s, noise_var, &mut rng).unwrap();
            acc += r.iter().map(|v| v.norm_sqr()).sum::<f64>();
        }
        let measured = acc / (blocks * n) as f64;
        assert!(
            (measured - noise_var).abs() < 0.02 * noise_var,
            "measured {measured}"
        );
    }

    #[test]
    fn doppler_and_shift_operators_commute_up_to_a_phase() {
        // Delta * Pi = exp(j*2*pi/N) * Pi * Delta for the integer operators.
        for n in [4usize, 16, 256] {
            let delta = doppler_matrix(n, 1.0);
            let pi = cyclic_shift_matrix(n, 1);
            let left = &delta * &pi;
            let right = &pi * &delta * Complex64::from_polar(1.0, 2.0 * PI / n as f64);
            let max = (left - right)
                .iter()
                .map(|v| v.norm())
                .fold(0.0, f64::max);
            assert!(max < 1e-10, "n={n}: {max}");
        }
    }

    #[test]
    fn equivalent_gain_absorbs_the_delay_phase() {
        let n = 64;
        let l = 5usize;
        let ch = single_path(n, Complex64::new(0.7, -0.2), l, 2, 0.3);
        let nu = 2.0 + 0.3;
        let want = Complex64::new(0.7, -0.2)
            * Complex64::from_polar(1.0, -2.0 * PI * nu * l as f64 / n as f64);
        let got = ch.equivalent_gains()[0];
        assert!((got - want).norm() < 1e-12);
    }
}
