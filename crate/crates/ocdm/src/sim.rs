//! Monte Carlo BER harness.
//!
//! One run sweeps Eb/N0 over a grid for one transmission scheme. Every block
//! gets its own counter-derived RNG, so runs with different schemes but the
//! same seed see identical bits, channel draws and noise — scheme curves
//! from the same seed are paired sample-by-sample, and any single point can
//! be reproduced without replaying the blocks before it.

use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use num_complex::Complex64;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::baseline::{ofdm_channel_matrix, ofdm_demodulate, ofdm_modulate, MmseEqualizer};
use crate::channel::{
    apply_channel, build_time_channel_matrix, build_time_gram_matrix, draw_channel,
    DelayPowerProfile,
};
use crate::constellation::{Constellation, ConstellationKind};
use crate::detector::{detect, DetectorConfig};
use crate::error::{Error, Result};
use crate::fresnel::FresnelTransform;
use crate::fresnel_channel::{conjugate_columns, fresnel_matrix_fast, SparseFresnelChannel};

/// Transmission scheme under test.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scheme {
    /// Chirp-domain modulation with the iterative message-passing detector.
    OcdmMp,
    /// Chirp-domain modulation with block MMSE equalization.
    OcdmMmse,
    /// Subcarrier modulation with block MMSE equalization.
    OfdmMmse,
}

impl Scheme {
    pub const ALL: [Scheme; 3] = [Scheme::OcdmMp, Scheme::OcdmMmse, Scheme::OfdmMmse];
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Scheme::OcdmMp => "OCDM-MP",
            Scheme::OcdmMmse => "OCDM-MMSE",
            Scheme::OfdmMmse => "OFDM-MMSE",
        })
    }
}

impl FromStr for Scheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace('_', "-").as_str() {
            "ocdm-mp" | "mp" => Ok(Scheme::OcdmMp),
            "ocdm-mmse" => Ok(Scheme::OcdmMmse),
            "ofdm-mmse" | "ofdm" => Ok(Scheme::OfdmMmse),
            other => Err(Error::InvalidConfig(format!(
                "unknown scheme '{other}' (expected ocdm-mp, ocdm-mmse or ofdm-mmse)"
            ))),
        }
    }
}

/// Detector knobs carried by the harness config; the per-point noise
/// variance is filled in at run time.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(default)]
pub struct DetectorParams {
    pub damping: f64,
    pub max_iters: usize,
    pub gamma: f64,
    pub epsilon: f64,
}

impl Default for DetectorParams {
    fn default() -> Self {
        Self {
            damping: 0.6,
            max_iters: 20,
            gamma: 0.999,
            epsilon: 0.05,
        }
    }
}

impl DetectorParams {
    pub fn to_config(self, noise_var: f64) -> DetectorConfig {
        DetectorConfig {
            damping: self.damping,
            max_iters: self.max_iters,
            gamma: self.gamma,
            epsilon: self.epsilon,
            noise_var,
        }
    }
}

/// Full description of a BER sweep.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SimConfig {
    pub scheme: Scheme,
    pub profile: DelayPowerProfile,
    pub constellation: ConstellationKind,
    /// Eb/N0 grid in dB, swept in order.
    pub ebn0_grid_db: Vec<f64>,
    /// Keep simulating a point at least until this many bits are in.
    pub min_bits: u64,
    /// Hard cap on bits per point.
    pub max_bits: u64,
    /// After `min_bits`, stop once this many bit errors were seen.
    pub target_errors: u64,
    #[serde(default)]
    pub detector: DetectorParams,
    /// Doppler basis truncation for the sparse detector channel.
    pub truncation: usize,
    /// Budget the truncation residual as extra detector noise.
    pub include_approx_noise: bool,
    pub rng_seed: u64,
}

impl SimConfig {
    /// Config with harness defaults; callers fill in the Eb/N0 grid.
    pub fn new(scheme: Scheme, profile: DelayPowerProfile, constellation: ConstellationKind) -> Self {
        Self {
            scheme,
            profile,
            constellation,
            ebn0_grid_db: Vec::new(),
            min_bits: 200_000,
            max_bits: 2_000_000,
            target_errors: 200,
            detector: DetectorParams::default(),
            truncation: 5,
            include_approx_noise: true,
            rng_seed: 1,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.profile.validate()?;
        if self.ebn0_grid_db.is_empty() {
            return Err(Error::InvalidConfig("Eb/N0 grid is empty".into()));
        }
        if self.ebn0_grid_db.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidConfig("Eb/N0 grid has non-finite entries".into()));
        }
        if self.min_bits == 0 {
            return Err(Error::InvalidConfig("min_bits must be positive".into()));
        }
        if self.max_bits < self.min_bits {
            return Err(Error::InvalidConfig(format!(
                "max_bits {} below min_bits {}",
                self.max_bits, self.min_bits
            )));
        }
        self.detector.to_config(1.0).validate()?;
        Ok(())
    }
}

/// Result of one (Eb/N0, scheme) point.
#[derive(Debug, Clone, PartialEq)]
pub struct BerRecord {
    pub ebn0_db: f64,
    pub scheme: Scheme,
    pub bits: u64,
    pub bit_errors: u64,
    pub ber: f64,
    /// Mean detector iterations per block; 0 for the MMSE schemes.
    pub mean_iterations: f64,
    /// Mean final convergence indicator per block; 0 for the MMSE schemes.
    pub mean_eta: f64,
}

/// Noise variance per complex sample for a target Eb/N0. The energy per
/// info bit charges the cyclic-prefix overhead to the payload:
/// `Eb = (N + cp) / (N * bits_per_symbol)` for unit-energy symbols.
pub fn ebn0_to_noise_var(
    ebn0_db: f64,
    kind: ConstellationKind,
    n_chirps: usize,
    cp_taps: usize,
) -> f64 {
    let eb = (n_chirps + cp_taps) as f64 / (n_chirps as f64 * kind.bits_per_symbol() as f64);
    eb * 10f64.powf(-ebn0_db / 10.0)
}

/// Prepend the last `cp` samples of the block.
pub fn add_cyclic_prefix(block: &[Complex64], cp: usize) -> Result<Vec<Complex64>> {
    if cp > block.len() {
        return Err(Error::InvalidConfig(format!(
            "cyclic prefix of {cp} exceeds block length {}",
            block.len()
        )));
    }
    let mut out = Vec::with_capacity(block.len() + cp);
    out.extend_from_slice(&block[block.len() - cp..]);
    out.extend_from_slice(block);
    Ok(out)
}

/// Drop the prefix, keeping the trailing `n` samples.
pub fn strip_cyclic_prefix(with_cp: &[Complex64], n: usize) -> Result<Vec<Complex64>> {
    if with_cp.len() < n {
        return Err(Error::LengthMismatch {
            expected: n,
            got: with_cp.len(),
        });
    }
    Ok(with_cp[with_cp.len() - n..].to_vec())
}

fn splitmix64(x: u64) -> u64 {
    let mut z = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// RNG for one simulated block, derived from (seed, Eb/N0, block counter).
/// Counter-based derivation keeps blocks independent of each other and of
/// the scheme, which is what makes same-seed runs paired.
pub fn block_rng(seed: u64, ebn0_db: f64, block: u64) -> ChaCha8Rng {
    let mixed = splitmix64(splitmix64(splitmix64(seed) ^ ebn0_db.to_bits()) ^ block);
    ChaCha8Rng::seed_from_u64(mixed)
}

struct BlockOutcome {
    bit_errors: u64,
    iterations: f64,
    eta: f64,
}

/// Draw bits, channel and noise (always in that order), push one block
/// through `cfg.scheme`, and count bit errors.
fn simulate_block(
    cfg: &SimConfig,
    tr: &FresnelTransform,
    cons: &Constellation,
    noise_var: f64,
    rng: &mut ChaCha8Rng,
) -> Result<BlockOutcome> {
    let n = tr.n_chirps();
    let cp = cfg.profile.cp_taps();
    let n_bits = n * cons.bits_per_symbol();
    let bits: Vec<u8> = (0..n_bits).map(|_| rng.gen_range(0..2u8)).collect();
    let ch = draw_channel(&cfg.profile, rng)?;

    let indices = cons.map_bits(&bits)?;
    let x = cons.indices_to_points(&indices);
    let s = match cfg.scheme {
        Scheme::OcdmMp | Scheme::OcdmMmse => tr.idfnt(&x)?,
        Scheme::OfdmMmse => ofdm_modulate(tr, &x)?,
    };
    let with_cp = add_cyclic_prefix(&s, cp)?;
    let r = apply_channel(&ch, &with_cp, noise_var, rng)?;

    let (decided, iterations, eta) = match cfg.scheme {
        Scheme::OcdmMp => {
            let y = tr.dfnt(&r)?;
            let mut sfc = SparseFresnelChannel::from_realization(&ch, cfg.truncation)?;
            if cfg.include_approx_noise {
                let h = build_time_channel_matrix(&ch);
                let oracle = fresnel_matrix_fast(&h, tr)?;
                sfc.calibrate_noise_inflation(&oracle, 1.0)?;
            }
            let dc = cfg.detector.to_config(noise_var + sfc.noise_inflation());
            let det = detect(&y, &sfc, cons, &dc)?;
            (det.symbol_indices, det.iterations_used as f64, det.final_eta)
        }
        Scheme::OcdmMmse => {
            let h = build_time_channel_matrix(&ch);
            let g = fresnel_matrix_fast(&h, tr)?;
            let gram = conjugate_columns(&build_time_gram_matrix(&ch), tr, |t, b| t.dfnt(b))?;
            let eq = MmseEqualizer::with_gram(g, gram, noise_var)?;
            let y = tr.dfnt(&r)?;
            (eq.detect(&y, cons)?, 0.0, 0.0)
        }
        Scheme::OfdmMmse => {
            let h = build_time_channel_matrix(&ch);
            let g = ofdm_channel_matrix(&h, tr)?;
            let gram = conjugate_columns(&build_time_gram_matrix(&ch), tr, |t, b| t.dft(b))?;
            let eq = MmseEqualizer::with_gram(g, gram, noise_var)?;
            let y = ofdm_demodulate(tr, &r)?;
            (eq.detect(&y, cons)?, 0.0, 0.0)
        }
    };

    let decided_bits = cons.bits_from_indices(&decided);
    let bit_errors = bits
        .iter()
        .zip(&decided_bits)
        .filter(|(a, b)| a != b)
        .count() as u64;
    Ok(BlockOutcome {
        bit_errors,
        iterations,
        eta,
    })
}

/// Simulate one Eb/N0 point until the stopping rule fires: at least
/// `min_bits` and `target_errors` errors, or `max_bits` in total.
pub fn run_point(cfg: &SimConfig, ebn0_db: f64) -> Result<BerRecord> {
    cfg.profile.validate()?;
    let n = cfg.profile.n_chirps;
    let tr = FresnelTransform::new(n)?;
    let cons = Constellation::new(cfg.constellation);
    let noise_var = ebn0_to_noise_var(ebn0_db, cfg.constellation, n, cfg.profile.cp_taps());
    let bits_per_block = (n * cons.bits_per_symbol()) as u64;

    let mut bits = 0u64;
    let mut bit_errors = 0u64;
    let mut iter_sum = 0.0;
    let mut eta_sum = 0.0;
    let mut blocks = 0u64;
    loop {
        let mut rng = block_rng(cfg.rng_seed, ebn0_db, blocks);
        let out = simulate_block(cfg, &tr, &cons, noise_var, &mut rng)?;
        bits += bits_per_block;
        bit_errors += out.bit_errors;
        iter_sum += out.iterations;
        eta_sum += out.eta;
        blocks += 1;
        if bits >= cfg.max_bits || (bits >= cfg.min_bits && bit_errors >= cfg.target_errors) {
            break;
        }
    }
    Ok(BerRecord {
        ebn0_db,
        scheme: cfg.scheme,
        bits,
        bit_errors,
        ber: bit_errors as f64 / bits as f64,
        mean_iterations: iter_sum / blocks as f64,
        mean_eta: eta_sum / blocks as f64,
    })
}

/// Sweep `cfg.ebn0_grid_db` for `cfg.scheme`.
pub fn run_sweep(cfg: &SimConfig) -> Result<Vec<BerRecord>> {
    cfg.validate()?;
    cfg.ebn0_grid_db
        .iter()
        .map(|&ebn0| run_point(cfg, ebn0))
        .collect()
}

/// Sweep several schemes over the same grid with shared randomness. Records
/// are ordered grid-point first, then scheme in the given order.
pub fn run_sweep_paired(cfg: &SimConfig, schemes: &[Scheme]) -> Result<Vec<BerRecord>> {
    cfg.validate()?;
    if schemes.is_empty() {
        return Err(Error::InvalidConfig("no schemes selected".into()));
    }
    let mut records = Vec::with_capacity(cfg.ebn0_grid_db.len() * schemes.len());
    for &ebn0 in &cfg.ebn0_grid_db {
        for &scheme in schemes {
            let point_cfg = SimConfig {
                scheme,
                ..cfg.clone()
            };
            records.push(run_point(&point_cfg, ebn0)?);
        }
    }
    Ok(records)
}

/// BER of the message-passing scheme at one Eb/N0 as the basis truncation
/// varies; all runs share randomness.
pub fn study_truncation(
    cfg: &SimConfig,
    ebn0_db: f64,
    truncations: &[usize],
) -> Result<Vec<(usize, BerRecord)>> {
    truncations
        .iter()
        .map(|&mi| {
            let point_cfg = SimConfig {
                scheme: Scheme::OcdmMp,
                truncation: mi,
                ..cfg.clone()
            };
            Ok((mi, run_point(&point_cfg, ebn0_db)?))
        })
        .collect()
}

/// Iteration statistics of the message-passing scheme at one Eb/N0 as the
/// damping factor varies; all runs share randomness.
pub fn study_damping(
    cfg: &SimConfig,
    ebn0_db: f64,
    dampings: &[f64],
) -> Result<Vec<(f64, BerRecord)>> {
    dampings
        .iter()
        .map(|&d| {
            let mut point_cfg = SimConfig {
                scheme: Scheme::OcdmMp,
                ..cfg.clone()
            };
            point_cfg.detector.damping = d;
            Ok((d, run_point(&point_cfg, ebn0_db)?))
        })
        .collect()
}

pub const CSV_HEADER: &str = "ebn0_db,scheme,bits,bit_errors,ber,mean_iterations,mean_eta";

fn push_record(out: &mut String, r: &BerRecord) {
    use fmt::Write;
    writeln!(
        out,
        "{},{},{},{},{},{},{}",
        r.ebn0_db, r.scheme, r.bits, r.bit_errors, r.ber, r.mean_iterations, r.mean_eta
    )
    .expect("string write");
}

/// Render sweep results as CSV (shortest-round-trip float formatting, so
/// equal records render byte-identically).
pub fn render_ber_csv(records: &[BerRecord]) -> String {
    let mut out = String::new();
    out.push_str(CSV_HEADER);
    out.push('\n');
    for r in records {
        push_record(&mut out, r);
    }
    out
}

/// CSV with a leading study-parameter column.
pub fn render_param_csv(param_name: &str, rows: &[(String, BerRecord)]) -> String {
    let mut out = String::new();
    out.push_str(param_name);
    out.push(',');
    out.push_str(CSV_HEADER);
    out.push('\n');
    for (value, r) in rows {
        out.push_str(value);
        out.push(',');
        push_record(&mut out, r);
    }
    out
}

pub fn write_ber_csv(path: &Path, records: &[BerRecord]) -> Result<()> {
    write_text(path, &render_ber_csv(records))
}

pub fn write_param_csv(path: &Path, param_name: &str, rows: &[(String, BerRecord)]) -> Result<()> {
    write_text(path, &render_param_csv(param_name, rows))
}

/// Sidecar describing how a CSV was produced: `<out>.meta.toml` next to the
/// data file, containing the crate version, scheme list and full config.
pub fn write_meta(csv_path: &Path, cfg: &SimConfig, schemes: &[Scheme]) -> Result<()> {
    #[derive(Serialize)]
    struct Meta<'a> {
        crate_version: &'static str,
        schemes: Vec<String>,
        config: &'a SimConfig,
    }
    let meta = Meta {
        crate_version: env!("CARGO_PKG_VERSION"),
        schemes: schemes.iter().map(|s| s.to_string()).collect(),
        config: cfg,
    };
    let path = csv_path.with_extension("meta.toml");
    let text = toml::to_string_pretty(&meta).map_err(|e| Error::Parse {
        path: path.clone(),
        message: e.to_string(),
    })?;
    write_text(&path, &text)
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}
