//! Command-line front end: BER sweeps, detector studies, channel dumps and
//! self-checks.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use nalgebra::DMatrix;
use num_complex::Complex64;

use ocdm::channel::{build_time_channel_matrix, draw_channel, DelayPowerProfile};
use ocdm::constellation::ConstellationKind;
use ocdm::error::{Error, Result};
use ocdm::fresnel::FresnelTransform;
use ocdm::fresnel_channel::{fresnel_matrix_fast, SparseFresnelChannel};
use ocdm::sim::{
    block_rng, render_ber_csv, render_param_csv, run_sweep_paired, study_damping,
    study_truncation, write_ber_csv, write_meta, write_param_csv, BerRecord, DetectorParams,
    Scheme, SimConfig,
};

#[derive(Parser)]
#[command(
    name = "ocdm",
    version,
    about = "Chirp-multiplexed transmission over doubly dispersive channels"
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// BER sweep over an Eb/N0 grid; same-seed runs are paired across schemes.
    Sweep(SweepArgs),
    /// BER at one Eb/N0 as the Doppler basis truncation varies.
    StudyTruncation(StudyTruncationArgs),
    /// Detector iteration statistics at one Eb/N0 as the damping varies.
    StudyDamping(StudyDampingArgs),
    /// Dump the exact and sparse chirp-domain channel matrices for one draw.
    DumpChannel(DumpChannelArgs),
    /// Run the built-in consistency checks.
    Verify,
}

#[derive(Args)]
struct CommonArgs {
    /// Channel profile: `eva`, `uwa`, or a path to a profile TOML.
    #[arg(long, default_value = "eva")]
    profile: String,
    /// Mobile speed for the built-in radio profile, km/h.
    #[arg(long, default_value_t = 500.0)]
    speed_kmph: f64,
    /// Symbol constellation (`bpsk` or `qam4`).
    #[arg(long, default_value_t = ConstellationKind::Qam4)]
    constellation: ConstellationKind,
    /// Base RNG seed; reruns with the same seed are bit-identical.
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Minimum bits per point before the error target can stop the run.
    #[arg(long, default_value_t = 200_000)]
    min_bits: u64,
    /// Hard cap on bits per point.
    #[arg(long, default_value_t = 2_000_000)]
    max_bits: u64,
    /// Bit errors to accumulate before stopping early.
    #[arg(long, default_value_t = 200)]
    target_errors: u64,
    /// Detector iteration cap.
    #[arg(long, default_value_t = 20)]
    max_iters: usize,
    /// Skip budgeting the basis truncation residual as extra detector noise.
    #[arg(long)]
    no_approx_noise: bool,
    /// Output CSV path (stdout if omitted); a `.meta.toml` sidecar records
    /// the full configuration.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SweepArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Eb/N0 grid in dB, comma separated.
    #[arg(long, value_delimiter = ',', required = true)]
    ebn0: Vec<f64>,
    /// Schemes to run, comma separated.
    #[arg(long, value_delimiter = ',', default_values_t = Scheme::ALL)]
    scheme: Vec<Scheme>,
    /// Doppler basis truncation for the sparse detector channel.
    #[arg(long, default_value_t = 5)]
    truncation: usize,
    /// Message damping factor in (0, 1].
    #[arg(long, default_value_t = 0.6)]
    damping: f64,
}

#[derive(Args)]
struct StudyTruncationArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Eb/N0 in dB.
    #[arg(long)]
    ebn0: f64,
    /// Truncation values to compare, comma separated.
    #[arg(long, value_delimiter = ',', required = true)]
    truncation: Vec<usize>,
    /// Message damping factor in (0, 1].
    #[arg(long, default_value_t = 0.6)]
    damping: f64,
}

#[derive(Args)]
struct StudyDampingArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Eb/N0 in dB.
    #[arg(long)]
    ebn0: f64,
    /// Damping factors to compare, comma separated.
    #[arg(long, value_delimiter = ',', required = true)]
    damping: Vec<f64>,
    /// Doppler basis truncation for the sparse detector channel.
    #[arg(long, default_value_t = 5)]
    truncation: usize,
}

#[derive(Args)]
struct DumpChannelArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Doppler basis truncation for the sparse matrix.
    #[arg(long, default_value_t = 5)]
    truncation: usize,
    /// Output prefix; writes `<prefix>.exact.csv` and `<prefix>.sparse.csv`.
    #[arg(long)]
    prefix: PathBuf,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

fn run(cli: Cli) -> Result<ExitCode> {
    match cli.cmd {
        Cmd::Sweep(args) => sweep(args),
        Cmd::StudyTruncation(args) => study_truncation_cmd(args),
        Cmd::StudyDamping(args) => study_damping_cmd(args),
        Cmd::DumpChannel(args) => dump_channel(args),
        Cmd::Verify => Ok(verify()),
    }
}

fn resolve_profile(common: &CommonArgs) -> Result<DelayPowerProfile> {
    match common.profile.to_ascii_lowercase().as_str() {
        "eva" => Ok(DelayPowerProfile::eva(common.speed_kmph)),
        "uwa" | "underwater" | "acoustic" => Ok(DelayPowerProfile::underwater_acoustic()),
        _ => DelayPowerProfile::from_file(Path::new(&common.profile)),
    }
}

fn base_config(common: &CommonArgs, truncation: usize, damping: f64) -> Result<SimConfig> {
    let profile = resolve_profile(common)?;
    let mut cfg = SimConfig::new(Scheme::OcdmMp, profile, common.constellation);
    cfg.min_bits = common.min_bits;
    cfg.max_bits = common.max_bits;
    cfg.target_errors = common.target_errors;
    cfg.truncation = truncation;
    cfg.include_approx_noise = !common.no_approx_noise;
    cfg.rng_seed = common.seed;
    cfg.detector = DetectorParams {
        damping,
        max_iters: common.max_iters,
        ..DetectorParams::default()
    };
    Ok(cfg)
}

fn emit_ber(common: &CommonArgs, cfg: &SimConfig, schemes: &[Scheme], records: &[BerRecord]) -> Result<()> {
    match &common.out {
        Some(path) => {
            write_ber_csv(path, records)?;
            write_meta(path, cfg, schemes)?;
            eprintln!("wrote {} records to {}", records.len(), path.display());
        }
        None => print!("{}", render_ber_csv(records)),
    }
    Ok(())
}

fn emit_param(
    common: &CommonArgs,
    cfg: &SimConfig,
    param: &str,
    rows: &[(String, BerRecord)],
) -> Result<()> {
    match &common.out {
        Some(path) => {
            write_param_csv(path, param, rows)?;
            write_meta(path, cfg, &[Scheme::OcdmMp])?;
            eprintln!("wrote {} records to {}", rows.len(), path.display());
        }
        None => print!("{}", render_param_csv(param, rows)),
    }
    Ok(())
}

fn sweep(args: SweepArgs) -> Result<ExitCode> {
    let mut cfg = base_config(&args.common, args.truncation, args.damping)?;
    cfg.ebn0_grid_db = args.ebn0.clone();
    let records = run_sweep_paired(&cfg, &args.scheme)?;
    emit_ber(&args.common, &cfg, &args.scheme, &records)?;
    Ok(ExitCode::SUCCESS)
}

fn study_truncation_cmd(args: StudyTruncationArgs) -> Result<ExitCode> {
    let mut cfg = base_config(&args.common, 0, args.damping)?;
    cfg.ebn0_grid_db = vec![args.ebn0];
    let rows = study_truncation(&cfg, args.ebn0, &args.truncation)?;
    let rows: Vec<(String, BerRecord)> =
        rows.into_iter().map(|(mi, r)| (mi.to_string(), r)).collect();
    emit_param(&args.common, &cfg, "truncation", &rows)?;
    Ok(ExitCode::SUCCESS)
}

fn study_damping_cmd(args: StudyDampingArgs) -> Result<ExitCode> {
    let mut cfg = base_config(&args.common, args.truncation, 0.6)?;
    cfg.ebn0_grid_db = vec![args.ebn0];
    let rows = study_damping(&cfg, args.ebn0, &args.damping)?;
    let rows: Vec<(String, BerRecord)> =
        rows.into_iter().map(|(d, r)| (d.to_string(), r)).collect();
    emit_param(&args.common, &cfg, "damping", &rows)?;
    Ok(ExitCode::SUCCESS)
}

fn write_matrix_csv(path: &Path, m: &DMatrix<Complex64>) -> Result<()> {
    let mut text = String::from("row,col,re,im\n");
    for r in 0..m.nrows() {
        for c in 0..m.ncols() {
            let v = m[(r, c)];
            text.push_str(&format!("{r},{c},{},{}\n", v.re, v.im));
        }
    }
    std::fs::write(path, text).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn dump_channel(args: DumpChannelArgs) -> Result<ExitCode> {
    let profile = resolve_profile(&args.common)?;
    profile.validate()?;
    let mut rng = block_rng(args.common.seed, 0.0, 0);
    let ch = draw_channel(&profile, &mut rng)?;
    let tr = FresnelTransform::new(profile.n_chirps)?;
    let exact = fresnel_matrix_fast(&build_time_channel_matrix(&ch), &tr)?;
    let sfc = SparseFresnelChannel::from_realization(&ch, args.truncation)?;
    let sparse = sfc.assemble_dense();

    let exact_path = args.prefix.with_extension("exact.csv");
    let sparse_path = args.prefix.with_extension("sparse.csv");
    write_matrix_csv(&exact_path, &exact)?;
    write_matrix_csv(&sparse_path, &sparse)?;
    println!(
        "profile {}: {} physical paths -> {} logical paths (truncation {})",
        profile.name,
        ch.paths().len(),
        sfc.num_logical_paths(),
        args.truncation
    );
    println!(
        "relative approximation error {:.3e}",
        sfc.approximation_error(&exact)?
    );
    println!("wrote {} and {}", exact_path.display(), sparse_path.display());
    Ok(ExitCode::SUCCESS)
}

fn verify() -> ExitCode {
    let checks = ocdm::verify::run_all();
    let mut all_ok = true;
    for check in &checks {
        let tag = if check.passed { "ok " } else { "FAIL" };
        println!("[{tag}] {}: {}", check.name, check.detail);
        all_ok &= check.passed;
    }
    if all_ok {
        println!("{} checks passed", checks.len());
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
