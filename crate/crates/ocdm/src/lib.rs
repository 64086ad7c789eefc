//! Orthogonal chirp division multiplexing (OCDM) over doubly dispersive
//! channels.
//!
//! The crate provides the discrete Fresnel transform that underlies OCDM
//! modulation, a multi-lag / multi-Doppler time-variant channel model, exact
//! and sparse chirp-domain representations of that channel, an iterative
//! message-passing symbol detector that exploits the sparse representation,
//! MMSE and OFDM reference receivers, and a Monte Carlo BER harness tying it
//! all together behind a small CLI.

pub mod baseline;
pub mod channel;
pub mod constellation;
pub mod detector;
pub mod error;
pub mod fresnel;
pub mod fresnel_channel;
pub mod sim;
pub mod verify;

pub use baseline::{ofdm_channel_matrix, ofdm_demodulate, ofdm_modulate, MmseEqualizer};
pub use channel::{
    apply_channel, build_time_channel_matrix, build_time_gram_matrix, draw_channel, quantize_path,
    ChannelRealization, DelayPowerProfile, PathSpec, ProfileTap,
};
pub use constellation::{Constellation, ConstellationKind};
pub use detector::{
    build_index_maps, convergence_indicator, detect, detect_traced, observation_messages,
    variable_update, DetectionResult, DetectorConfig, IndexMaps, IterationSnapshot, MessageState,
};
pub use error::{Error, Result};
pub use fresnel::{FresnelTransform, FresnelVector, SignalDomain};
pub use fresnel_channel::{
    exact_fresnel_matrix, expand_virtual_paths, fresnel_matrix_fast, lambda_coeff, LogicalPath,
    SparseFresnelChannel, VirtualPath,
};
pub use sim::{
    add_cyclic_prefix, block_rng, ebn0_to_noise_var, run_point, run_sweep, run_sweep_paired,
    strip_cyclic_prefix, study_damping, study_truncation, write_ber_csv, write_meta,
    write_param_csv, BerRecord, DetectorParams, Scheme, SimConfig,
};
