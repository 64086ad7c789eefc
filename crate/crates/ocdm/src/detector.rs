//! Iterative message-passing (MP) detector for the sparse chirp-domain
//! channel.
//!
//! The factor graph has N variable nodes (transmitted chirp symbols) and N
//! observation nodes (received chirp samples), each observation connected
//! to the L variables its logical paths reach. Messages alternate between
//!
//! * observation -> variable: the interference from the other L-1 paths is
//!   summarized as a Gaussian (mean + variance, noise included), and
//! * variable -> observation: a damped extrinsic pmf over the alphabet,
//!   computed from the Gaussian likelihoods of the other L-1 observations.
//!
//! Decisions come from the per-variable posteriors; iteration stops when
//! the fraction of confidently decided symbols reaches 1, regresses, or the
//! iteration cap is hit. Likelihoods are handled in the log domain with a
//! per-message maximum subtracted before exponentiation; a message that
//! still underflows falls back to the uniform pmf.

use num_complex::Complex64;

use crate::constellation::Constellation;
use crate::error::{Error, Result};
use crate::fresnel_channel::SparseFresnelChannel;

/// Tuning knobs for [`detect`].
#[derive(Debug, Clone, Copy)]
pub struct DetectorConfig {
    /// Message damping factor in (0, 1]; 1 disables damping.
    pub damping: f64,
    /// Iteration cap.
    pub max_iters: usize,
    /// Posterior mass required to call a symbol decided.
    pub gamma: f64,
    /// Slack on the convergence indicator before declaring regression.
    pub epsilon: f64,
    /// Observation noise variance (channel noise plus any truncation
    /// budget); must be positive.
    pub noise_var: f64,
}

impl DetectorConfig {
    pub fn new(noise_var: f64) -> Self {
        Self {
            damping: 0.6,
            max_iters: 20,
            gamma: 0.999,
            // The regression stop should only fire on an obvious collapse.
            // Early iterations often dip eta by a few counts before real
            // convergence starts, so the tolerance must sit well above that
            // startup noise; 0.05 (= 5% of symbols losing confidence)
            // empirically separates the two regimes.
            epsilon: 0.05,
            noise_var,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.damping > 0.0 && self.damping <= 1.0) {
            return Err(Error::InvalidConfig(format!(
                "damping {} outside (0, 1]",
                self.damping
            )));
        }
        if self.max_iters == 0 {
            return Err(Error::InvalidConfig("need at least one iteration".into()));
        }
        if !(self.gamma > 0.0 && self.gamma < 1.0) {
            return Err(Error::InvalidConfig(format!(
                "decision threshold {} outside (0, 1)",
                self.gamma
            )));
        }
        if !(self.epsilon > 0.0) {
            return Err(Error::InvalidConfig(
                "regression slack must be positive".into(),
            ));
        }
        if !(self.noise_var > 0.0) || !self.noise_var.is_finite() {
            return Err(Error::InvalidConfig(
                "noise variance must be positive and finite".into(),
            ));
        }
        Ok(())
    }
}

/// Edge index maps of the factor graph. For path slot `l` with chirp shift
/// `d_l`: observation `n` listens to variable `b(n, l) = (n - d_l) mod N`,
/// and variable `n` feeds observation `q(n, l) = (n + d_l) mod N`.
#[derive(Debug, Clone)]
pub struct IndexMaps {
    n: usize,
    l: usize,
    b: Vec<usize>,
    q: Vec<usize>,
}

impl IndexMaps {
    pub fn n_nodes(&self) -> usize {
        self.n
    }

    pub fn n_paths(&self) -> usize {
        self.l
    }

    /// Variable reached by observation `n` along path slot `l`.
    pub fn b(&self, n: usize, l: usize) -> usize {
        self.b[n * self.l + l]
    }

    /// Observation fed by variable `n` along path slot `l`.
    pub fn q(&self, n: usize, l: usize) -> usize {
        self.q[n * self.l + l]
    }
}

/// Build the b/q maps for a sparse channel.
pub fn build_index_maps(sfc: &SparseFresnelChannel) -> IndexMaps {
    let n = sfc.n_chirps();
    let shifts = sfc.chirp_shifts();
    let l = shifts.len();
    let mut b = vec![0usize; n * l];
    let mut q = vec![0usize; n * l];
    for node in 0..n {
        for (slot, &d) in shifts.iter().enumerate() {
            b[node * l + slot] = (node + n - d) % n;
            q[node * l + slot] = (node + d) % n;
        }
    }
    IndexMaps { n, l, b, q }
}

/// Mutable message arrays of one detector run.
///
/// * `pmf(v, l)` — pmf sent by variable `v` to observation `q(v, l)`;
/// * `mean(o, l)` / `var(o, l)` — Gaussian interference summary sent by
///   observation `o` to variable `b(o, l)`;
/// * `weight(o, l)` — channel gain coupling that pair, i.e. the dense-matrix
///   entry at row `o`, column `b(o, l)`.
#[derive(Debug, Clone)]
pub struct MessageState {
    n: usize,
    l: usize,
    m: usize,
    maps: IndexMaps,
    weights: Vec<Complex64>,
    pmfs: Vec<f64>,
    means: Vec<Complex64>,
    vars: Vec<f64>,
}

impl MessageState {
    /// Fresh state: uniform pmfs, zeroed observation messages.
    pub fn new(sfc: &SparseFresnelChannel, alphabet_size: usize) -> Result<Self> {
        if alphabet_size < 2 {
            return Err(Error::InvalidConfig("alphabet needs >= 2 points".into()));
        }
        // The softmax scratch buffer in the variable update is stack
        // allocated with this capacity.
        if alphabet_size > 64 {
            return Err(Error::InvalidConfig("alphabet limited to 64 points".into()));
        }
        let maps = build_index_maps(sfc);
        let n = maps.n;
        let l = maps.l;
        if l == 0 {
            return Err(Error::InvalidConfig(
                "sparse channel has no logical paths".into(),
            ));
        }
        let mut weights = vec![Complex64::default(); n * l];
        for (slot, lp) in sfc.logical_paths().iter().enumerate() {
            for node in 0..n {
                weights[node * l + slot] = lp.weights[node];
            }
        }
        Ok(Self {
            n,
            l,
            m: alphabet_size,
            maps,
            weights,
            pmfs: vec![1.0 / alphabet_size as f64; n * l * alphabet_size],
            means: vec![Complex64::default(); n * l],
            vars: vec![0.0; n * l],
        })
    }

    pub fn maps(&self) -> &IndexMaps {
        &self.maps
    }

    pub fn pmf(&self, v: usize, l: usize) -> &[f64] {
        let base = (v * self.l + l) * self.m;
        &self.pmfs[base..base + self.m]
    }

    pub fn mean(&self, o: usize, l: usize) -> Complex64 {
        self.means[o * self.l + l]
    }

    pub fn var(&self, o: usize, l: usize) -> f64 {
        self.vars[o * self.l + l]
    }

    pub fn weight(&self, o: usize, l: usize) -> Complex64 {
        self.weights[o * self.l + l]
    }
}

/// Observation half-iteration: refresh every Gaussian interference summary
/// from the current pmfs. For observation `o` and path slot `l`, the mean
/// and variance aggregate the other L-1 incoming symbol estimates, plus
/// `noise_var` on the variance.
pub fn observation_messages(
    y: &[Complex64],
    state: &mut MessageState,
    cons: &Constellation,
    noise_var: f64,
) -> Result<()> {
    let (n, l, m) = (state.n, state.l, state.m);
    check_inputs(y, state, cons, noise_var)?;
    let points = cons.points();
    let mut term_mean = vec![Complex64::default(); l];
    let mut term_var = vec![0.0f64; l];
    for o in 0..n {
        let mut sum_mean = Complex64::default();
        let mut sum_var = 0.0f64;
        for slot in 0..l {
            let v = state.maps.b(o, slot);
            let base = (v * l + slot) * m;
            let pmf = &state.pmfs[base..base + m];
            let mut x_bar = Complex64::default();
            let mut energy = 0.0f64;
            for (p, alpha) in pmf.iter().zip(points) {
                x_bar += p * alpha;
                energy += p * alpha.norm_sqr();
            }
            let w = state.weights[o * l + slot];
            let tm = w * x_bar;
            let tv = w.norm_sqr() * (energy - x_bar.norm_sqr()).max(0.0);
            term_mean[slot] = tm;
            term_var[slot] = tv;
            sum_mean += tm;
            sum_var += tv;
        }
        for slot in 0..l {
            state.means[o * l + slot] = sum_mean - term_mean[slot];
            state.vars[o * l + slot] = (sum_var - term_var[slot]).max(0.0) + noise_var;
        }
    }
    Ok(())
}

/// Variable half-iteration: refresh every extrinsic pmf from the Gaussian
/// likelihoods, damping the update by `damping`, and return the length
/// N*M posterior table (products over all L observations, normalized).
pub fn variable_update(
    y: &[Complex64],
    state: &mut MessageState,
    cons: &Constellation,
    damping: f64,
) -> Result<Vec<f64>> {
    let (n, l, m) = (state.n, state.l, state.m);
    if !(damping > 0.0 && damping <= 1.0) {
        return Err(Error::InvalidConfig(format!(
            "damping {damping} outside (0, 1]"
        )));
    }
    if y.len() != n {
        return Err(Error::LengthMismatch {
            expected: n,
            got: y.len(),
        });
    }
    let points = cons.points();
    let mut ll = vec![0.0f64; l * m];
    let mut total = vec![0.0f64; m];
    let mut extrinsic = vec![0.0f64; m];
    let mut posteriors = vec![0.0f64; n * m];
    for v in 0..n {
        total.fill(0.0);
        for slot in 0..l {
            let o = state.maps.q(v, slot);
            let w = state.weights[o * l + slot];
            let mu = state.means[o * l + slot];
            let var = state.vars[o * l + slot];
            let yo = y[o];
            for (idx, alpha) in points.iter().enumerate() {
                let diff = yo - w * alpha - mu;
                let val = -diff.norm_sqr() / var;
                ll[slot * m + idx] = val;
                total[idx] += val;
            }
        }
        for slot in 0..l {
            for idx in 0..m {
                extrinsic[idx] = total[idx] - ll[slot * m + idx];
            }
            let base = (v * l + slot) * m;
            write_damped_softmax(&extrinsic, damping, &mut state.pmfs[base..base + m]);
        }
        normalized_softmax(&total, &mut posteriors[v * m..(v + 1) * m]);
    }
    Ok(posteriors)
}

/// Exponentiate a log-weight vector with max subtraction and write the
/// normalized result blended into `out` with factor `damping`. Falls back
/// to uniform if the mass underflows.
fn write_damped_softmax(logs: &[f64], damping: f64, out: &mut [f64]) {
    let mut fresh = [0.0f64; 64];
    let fresh = &mut fresh[..logs.len()];
    normalized_softmax(logs, fresh);
    let mut sum = 0.0;
    for (o, f) in out.iter_mut().zip(fresh.iter()) {
        *o = damping * f + (1.0 - damping) * *o;
        sum += *o;
    }
    // The blend of two normalized pmfs is normalized up to rounding; keep
    // the invariant exact.
    if sum > 0.0 {
        for o in out.iter_mut() {
            *o /= sum;
        }
    }
}

fn normalized_softmax(logs: &[f64], out: &mut [f64]) {
    let max = logs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for (o, &v) in out.iter_mut().zip(logs) {
        let e = if max.is_finite() { (v - max).exp() } else { 0.0 };
        *o = e;
        sum += e;
    }
    if sum > 0.0 && sum.is_finite() {
        for o in out.iter_mut() {
            *o /= sum;
        }
    } else {
        let u = 1.0 / out.len() as f64;
        out.fill(u);
    }
}

/// Fraction of variables whose posterior puts at least `gamma` mass on one
/// point.
pub fn convergence_indicator(posteriors: &[f64], alphabet_size: usize, gamma: f64) -> f64 {
    let n = posteriors.len() / alphabet_size;
    let decided = posteriors
        .chunks(alphabet_size)
        .filter(|p| p.iter().cloned().fold(0.0, f64::max) >= gamma)
        .count();
    decided as f64 / n as f64
}

fn check_inputs(
    y: &[Complex64],
    state: &MessageState,
    cons: &Constellation,
    noise_var: f64,
) -> Result<()> {
    if y.len() != state.n {
        return Err(Error::LengthMismatch {
            expected: state.n,
            got: y.len(),
        });
    }
    if cons.size() != state.m {
        return Err(Error::InvalidConfig(format!(
            "state built for {} points, constellation has {}",
            state.m,
            cons.size()
        )));
    }
    if !(noise_var > 0.0) {
        return Err(Error::InvalidConfig(
            "noise variance must be positive".into(),
        ));
    }
    if y.iter().any(|v| !v.re.is_finite() || !v.im.is_finite()) {
        return Err(Error::NonFiniteInput);
    }
    Ok(())
}

/// Outcome of a detector run. `symbols`/`symbol_indices`/`posteriors` come
/// from the iteration with the highest convergence indicator, which is also
/// what `final_eta` reports.
#[derive(Debug, Clone)]
pub struct DetectionResult {
    pub symbols: Vec<Complex64>,
    pub symbol_indices: Vec<usize>,
    /// N x M posterior table, row-major.
    pub posteriors: Vec<f64>,
    pub iterations_used: usize,
    pub final_eta: f64,
    pub converged: bool,
}

/// Per-iteration view handed to the trace callback of [`detect_traced`].
pub struct IterationSnapshot<'a> {
    pub iteration: usize,
    pub eta: f64,
    pub hard_decisions: &'a [usize],
}

/// Run the message-passing detector on one received block.
pub fn detect(
    y: &[Complex64],
    sfc: &SparseFresnelChannel,
    cons: &Constellation,
    config: &DetectorConfig,
) -> Result<DetectionResult> {
    detect_traced(y, sfc, cons, config, |_| {})
}

/// [`detect`] with a callback observing every iteration.
pub fn detect_traced(
    y: &[Complex64],
    sfc: &SparseFresnelChannel,
    cons: &Constellation,
    config: &DetectorConfig,
    mut trace: impl FnMut(IterationSnapshot<'_>),
) -> Result<DetectionResult> {
    config.validate()?;
    let mut state = MessageState::new(sfc, cons.size())?;
    check_inputs(y, &state, cons, config.noise_var)?;
    let n = state.n;
    let m = state.m;

    let mut best_indices: Vec<usize> = vec![0; n];
    let mut best_posteriors: Vec<f64> = Vec::new();
    let mut eta_max = 0.0f64;
    let mut iterations_used = 0;
    let mut hard = vec![0usize; n];

    for iter in 1..=config.max_iters {
        observation_messages(y, &mut state, cons, config.noise_var)?;
        let posteriors = variable_update(y, &mut state, cons, config.damping)?;
        let eta = convergence_indicator(&posteriors, m, config.gamma);
        iterations_used = iter;
        for (v, h) in hard.iter_mut().enumerate() {
            *h = argmax(&posteriors[v * m..(v + 1) * m]);
        }
        trace(IterationSnapshot {
            iteration: iter,
            eta,
            hard_decisions: &hard,
        });
        if iter == 1 || eta > eta_max {
            // First iteration seeds the decision; afterwards only strict
            // improvement replaces it.
            eta_max = eta_max.max(eta);
            best_indices.copy_from_slice(&hard);
            best_posteriors = posteriors;
        } else if eta < eta_max - config.epsilon {
            break;
        }
        if eta >= 1.0 {
            break;
        }
    }

    Ok(DetectionResult {
        symbols: cons.indices_to_points(&best_indices),
        symbol_indices: best_indices,
        posteriors: best_posteriors,
        iterations_used,
        final_eta: eta_max,
        converged: eta_max >= 1.0,
    })
}

fn argmax(p: &[f64]) -> usize {
    let mut best = 0;
    let mut best_v = f64::NEG_INFINITY;
    for (idx, &v) in p.iter().enumerate() {
        if v > best_v {
            best_v = v;
            best = idx;
        }
    }
    best
}
