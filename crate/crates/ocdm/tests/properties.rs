//! Property tests for the invariants the library promises on arbitrary
//! inputs: transform round trips, Doppler coefficient identities, path
//! quantization exactness, and message validity under iteration.

use num_complex::Complex64;
use proptest::prelude::*;
use std::f64::consts::PI;

use ocdm::channel::{quantize_path, ChannelRealization, PathSpec};
use ocdm::constellation::{Constellation, ConstellationKind};
use ocdm::detector::{observation_messages, variable_update, MessageState};
use ocdm::fresnel::FresnelTransform;
use ocdm::fresnel_channel::{lambda_coeff, SparseFresnelChannel};
use ocdm::sim::{add_cyclic_prefix, ebn0_to_noise_var, strip_cyclic_prefix};

fn complex_vec(n: usize) -> impl Strategy<Value = Vec<Complex64>> {
    prop::collection::vec((-10.0..10.0f64, -10.0..10.0f64), n)
        .prop_map(|v| v.into_iter().map(|(re, im)| Complex64::new(re, im)).collect())
}

proptest! {
    // ============================================================
    // Transform round trips and energy preservation
    // ============================================================

    #[test]
    fn transform_round_trips(exp in 1usize..9, seed_vec in complex_vec(256)) {
        let n = 1usize << exp;
        let tr = FresnelTransform::new(n).unwrap();
        let x = &seed_vec[..n];
        let y = tr.dfnt(x).unwrap();
        let back = tr.idfnt(&y).unwrap();
        for (a, b) in back.iter().zip(x) {
            prop_assert!((a - b).norm() < 1e-9);
        }
        // Unitary: energy is preserved both ways.
        let ex: f64 = x.iter().map(|v| v.norm_sqr()).sum();
        let ey: f64 = y.iter().map(|v| v.norm_sqr()).sum();
        prop_assert!((ex - ey).abs() <= 1e-9 * ex.max(1.0));
    }

    #[test]
    fn fast_transform_matches_direct_sum(exp in 1usize..7, seed_vec in complex_vec(64)) {
        let n = 1usize << exp;
        let tr = FresnelTransform::new(n).unwrap();
        let x = &seed_vec[..n];
        let fast = tr.dfnt(x).unwrap();
        let direct = tr.dfnt_direct(x).unwrap();
        for (a, b) in fast.iter().zip(&direct) {
            prop_assert!((a - b).norm() < 1e-9);
        }
    }

    // ============================================================
    // Fractional Doppler basis coefficients
    // ============================================================

    #[test]
    fn doppler_coefficient_matches_the_defining_sum(
        kappa in -0.5f64..0.5,
        m in -32i64..32,
        exp in 2usize..8,
    ) {
        let n = 1usize << exp;
        let closed = lambda_coeff(kappa, m, n);
        let mut sum = Complex64::default();
        for idx in 0..n {
            sum += Complex64::from_polar(1.0, 2.0 * PI * (kappa - m as f64) * idx as f64 / n as f64);
        }
        sum /= n as f64;
        prop_assert!((closed - sum).norm() < 1e-11);
    }

    #[test]
    fn doppler_coefficients_sum_to_the_tone_sample(kappa in -0.49f64..0.49) {
        // Summing the full basis at sample 0 must reproduce the tone there:
        // sum_m lambda(kappa, m) = exp(j*2*pi*kappa*0/N) = 1.
        let n = 32usize;
        let mut sum = Complex64::default();
        for m in -(n as i64) / 2..(n as i64) / 2 {
            sum += lambda_coeff(kappa, m, n);
        }
        prop_assert!((sum - Complex64::new(1.0, 0.0)).norm() < 1e-9);
    }

    // ============================================================
    // Path quantization
    // ============================================================

    #[test]
    fn quantized_doppler_parts_recombine_exactly(
        delay_s in 0.0f64..0.03,
        doppler in -500.0f64..500.0,
    ) {
        let rate = 3.2e3;
        let n = 128usize;
        let (l, k, kappa) = quantize_path(delay_s, doppler, rate, n).unwrap();
        prop_assert!(l < n);
        // k + kappa must equal the normalized Doppler bit-exactly in spirit:
        // the split is k = ceil(nu - 1/2), kappa = nu - k.
        let nu = doppler / (rate / n as f64);
        prop_assert!((k as f64 + kappa - nu).abs() < 1e-12);
        prop_assert!(kappa > -0.5 - 1e-12 && kappa <= 0.5 + 1e-12);
    }

    // ============================================================
    // Cyclic prefix
    // ============================================================

    #[test]
    fn cyclic_prefix_round_trips(len in 1usize..64, cp_frac in 0.0f64..1.0, seed_vec in complex_vec(64)) {
        let block = &seed_vec[..len];
        let cp = ((len as f64) * cp_frac) as usize;
        let with_cp = add_cyclic_prefix(block, cp).unwrap();
        prop_assert_eq!(with_cp.len(), len + cp);
        let back = strip_cyclic_prefix(&with_cp, len).unwrap();
        prop_assert_eq!(&back[..], block);
    }

    // ============================================================
    // Eb/N0 mapping
    // ============================================================

    #[test]
    fn noise_variance_is_monotone_in_ebn0(a in -5.0f64..30.0, delta in 0.1f64..10.0) {
        let lo = ebn0_to_noise_var(a + delta, ConstellationKind::Qam4, 256, 40);
        let hi = ebn0_to_noise_var(a, ConstellationKind::Qam4, 256, 40);
        prop_assert!(lo < hi);
    }

    // ============================================================
    // Message validity under iteration
    // ============================================================

    #[test]
    fn messages_stay_valid_distributions(
        seed_vec in complex_vec(8),
        gains in prop::collection::vec((-1.0f64..1.0, -1.0f64..1.0), 3),
        delays in prop::collection::vec(0usize..8, 3),
        noise in 0.001f64..1.0,
    ) {
        let n = 8;
        let specs: Vec<PathSpec> = gains
            .iter()
            .zip(&delays)
            .map(|(&(re, im), &d)| PathSpec {
                gain: Complex64::new(re + 0.1, im),
                delay_taps: d,
                doppler_int: 0,
                doppler_frac: 0.2,
            })
            .collect();
        let ch = ChannelRealization::new(specs, n).unwrap();
        let sfc = SparseFresnelChannel::from_realization(&ch, 2).unwrap();
        let cons = Constellation::new(ConstellationKind::Qam4);
        let mut state = MessageState::new(&sfc, cons.size()).unwrap();
        let y = &seed_vec[..n];
        for _ in 0..3 {
            observation_messages(y, &mut state, &cons, noise).unwrap();
            let posteriors = variable_update(y, &mut state, &cons, 0.6).unwrap();
            for v in 0..n {
                for slot in 0..state.maps().n_paths() {
                    let pmf = state.pmf(v, slot);
                    prop_assert!(pmf.iter().all(|&p| p >= 0.0));
                    let sum: f64 = pmf.iter().sum();
                    prop_assert!((sum - 1.0).abs() < 1e-9);
                }
                let row = &posteriors[v * cons.size()..(v + 1) * cons.size()];
                let sum: f64 = row.iter().sum();
                prop_assert!((sum - 1.0).abs() < 1e-9);
            }
            for o in 0..n {
                for slot in 0..state.maps().n_paths() {
                    prop_assert!(state.var(o, slot) >= noise);
                }
            }
        }
    }
}
