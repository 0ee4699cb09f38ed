mod output;
mod parse;
mod run;

use std::fmt;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use num_complex::Complex64;
use ringcoag::{InitMode, KernelKind};
use serde::Deserialize;

use output::{sha256_file, RunManifest};
use run::{
    execute, EnsembleRunConfig, KineticRunConfig, OracleRunConfig, RunConfig, SelfsimRunConfig,
    SimulateConfig,
};

const SEED_ENV: &str = "COAG_SEED";

/// Bad input from the user: flags, config file, or manifest.
#[derive(Debug)]
pub struct ConfigError(pub String);

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for ConfigError {}

#[derive(Parser)]
#[command(
    name = "ringcoag",
    version,
    about = "Ballistic coagulation on a ring: simulation, kinetics and exact solutions"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Single realization of the ring process.
    Simulate(SimArgs),
    /// Many independent realizations with aggregate statistics.
    Ensemble(EnsembleArgs),
    /// Truncated kinetic equations integrated with RK4.
    Kinetic(KineticArgs),
    /// Exact generating-function solution.
    Oracle(OracleArgs),
    /// Self-similar system of the majority kernel.
    Selfsim(SelfsimArgs),
    /// Re-runs a manifest and compares output digests.
    Replay(ReplayArgs),
}

#[derive(Args)]
struct Common {
    /// JSON file with flat keys named like the flags; flags take precedence.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

#[derive(Args)]
struct SimArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long)]
    n0: Option<u32>,
    /// Coagulation probability per meeting [default: 0.1].
    #[arg(long)]
    p: Option<f64>,
    /// Probability of an initial +1 velocity [default: 0.5].
    #[arg(long)]
    p0: Option<f64>,
    /// binomial | fixed
    #[arg(long)]
    init: Option<InitMode>,
    /// random | majority
    #[arg(long)]
    kernel: Option<KernelKind>,
    /// Master seed; COAG_SEED overrides it.
    #[arg(long)]
    seed: Option<u64>,
    /// Times at which Z is sampled, comma separated.
    #[arg(long, value_delimiter = ',')]
    z_grid: Option<Vec<f64>>,
}

#[derive(Args)]
struct EnsembleArgs {
    #[command(flatten)]
    sim: SimArgs,
    #[arg(long)]
    realizations: Option<u64>,
    /// Worker threads [default: available cores].
    #[arg(long)]
    threads: Option<usize>,
}

#[derive(Args)]
struct KineticArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long)]
    kernel: Option<KernelKind>,
    /// Monomers split evenly between the two directions (the default).
    #[arg(long)]
    symmetric: bool,
    /// Total initial monomer count.
    #[arg(long)]
    n0: Option<f64>,
    #[arg(long)]
    n_plus: Option<f64>,
    #[arg(long)]
    n_minus: Option<f64>,
    /// Initial + spectrum as a polynomial in z, e.g. "0.5z + 0.5z^2".
    #[arg(long)]
    f0: Option<String>,
    /// Initial - spectrum; defaults to --f0.
    #[arg(long)]
    f0_minus: Option<String>,
    /// Largest tracked cluster size [default: 256].
    #[arg(long = "L", alias = "truncation")]
    truncation: Option<usize>,
    /// Largest RK4 step [default: 0.01].
    #[arg(long)]
    dt: Option<f64>,
    /// Final time [default: 1].
    #[arg(long)]
    t: Option<f64>,
    #[arg(long)]
    output_every: Option<f64>,
}

#[derive(Args)]
struct OracleArgs {
    #[command(flatten)]
    common: Common,
    /// Initial + spectrum as a polynomial in z.
    #[arg(long)]
    f0: Option<String>,
    /// Initial - spectrum; omit for the symmetric solution.
    #[arg(long)]
    f0_minus: Option<String>,
    /// Output times, comma separated [default: 1].
    #[arg(long, value_delimiter = ',')]
    t: Option<Vec<f64>>,
    /// Number of coefficients kept [default: 64].
    #[arg(long = "L", alias = "truncation")]
    truncation: Option<usize>,
    /// Contour radius of the winding check [default: 0.999].
    #[arg(long)]
    radius: Option<f64>,
}

#[derive(Args)]
struct SelfsimArgs {
    #[command(flatten)]
    common: Common,
    /// Kick of H+ at the fixed point, e.g. 1e-3i [default: 1e-3i].
    #[arg(long, allow_hyphen_values = true)]
    perturb: Option<String>,
    /// Kick of H-; defaults to --perturb.
    #[arg(long, allow_hyphen_values = true)]
    perturb_minus: Option<String>,
    #[arg(long, allow_hyphen_values = true)]
    tau_start: Option<f64>,
    /// [default: 20]
    #[arg(long)]
    tau_max: Option<f64>,
    /// RK4 steps [default: 20000].
    #[arg(long)]
    steps: Option<usize>,
    /// Keep every k-th state in ss_trajectory.csv [default: 1].
    #[arg(long)]
    record_every: Option<usize>,
    /// Also invert the Laplace profile (needs real kicks). The kick fixes the
    /// profile's scale: -2e^{tau_start} centres the connection at tau = 0.
    #[arg(long)]
    profile: bool,
    /// [default: 5]
    #[arg(long)]
    zeta_max: Option<f64>,
    /// [default: 0.1]
    #[arg(long)]
    zeta_step: Option<f64>,
}

#[derive(Args)]
struct ReplayArgs {
    #[arg(long)]
    manifest: PathBuf,
    /// Where to write the rerun; a temporary directory by default.
    #[arg(long)]
    out: Option<PathBuf>,
}

/// Flat config file; keys mirror the long flags with `_` for `-`.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct FileConfig {
    n0: Option<f64>,
    p: Option<f64>,
    p0: Option<f64>,
    init: Option<InitMode>,
    kernel: Option<KernelKind>,
    seed: Option<u64>,
    z_grid: Option<Vec<f64>>,
    realizations: Option<u64>,
    threads: Option<usize>,
    symmetric: Option<bool>,
    n_plus: Option<f64>,
    n_minus: Option<f64>,
    f0: Option<String>,
    f0_minus: Option<String>,
    #[serde(alias = "L")]
    truncation: Option<usize>,
    dt: Option<f64>,
    t: Option<OneOrMany>,
    output_every: Option<f64>,
    radius: Option<f64>,
    perturb: Option<String>,
    perturb_minus: Option<String>,
    tau_start: Option<f64>,
    tau_max: Option<f64>,
    steps: Option<usize>,
    record_every: Option<usize>,
    profile: Option<bool>,
    zeta_max: Option<f64>,
    zeta_step: Option<f64>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
enum OneOrMany {
    One(f64),
    Many(Vec<f64>),
}

impl OneOrMany {
    fn into_vec(self) -> Vec<f64> {
        match self {
            OneOrMany::One(x) => vec![x],
            OneOrMany::Many(v) => v,
        }
    }
}

fn config_error(msg: impl Into<String>) -> anyhow::Error {
    ConfigError(msg.into()).into()
}

fn load_file(path: Option<&Path>) -> Result<FileConfig> {
    let Some(path) = path else {
        return Ok(FileConfig::default());
    };
    let text = std::fs::read_to_string(path)
        .map_err(|e| config_error(format!("--config {}: {e}", path.display())))?;
    serde_json::from_str(&text)
        .map_err(|e| config_error(format!("--config {}: {e}", path.display())))
}

fn env_seed() -> Result<Option<u64>> {
    match std::env::var(SEED_ENV) {
        Ok(v) => v.trim().parse().map(Some).map_err(|_| {
            config_error(format!("{SEED_ENV} must be an unsigned integer, got `{v}`"))
        }),
        Err(_) => Ok(None),
    }
}

fn resolve_sim(a: &SimArgs, f: &FileConfig) -> Result<SimulateConfig> {
    let n0 = match a.n0 {
        Some(n) => n,
        None => match f.n0 {
            Some(x) if x.fract() == 0.0 && x >= 0.0 && x <= u32::MAX as f64 => x as u32,
            Some(x) => {
                return Err(config_error(format!(
                    "n0 must be a non-negative integer, got {x}"
                )))
            }
            None => return Err(config_error("--n0 is required")),
        },
    };
    Ok(SimulateConfig {
        n0,
        p: a.p.or(f.p).unwrap_or(0.1),
        p0: a.p0.or(f.p0).unwrap_or(0.5),
        init: a.init.or(f.init).unwrap_or_default(),
        kernel: a.kernel.or(f.kernel).unwrap_or_default(),
        seed: env_seed()?.or(a.seed).or(f.seed).unwrap_or(0),
        z_grid: a
            .z_grid
            .clone()
            .or_else(|| f.z_grid.clone())
            .unwrap_or_default(),
    })
}

fn polynomial(flag: &str, text: &str) -> Result<Vec<(usize, f64)>> {
    parse::polynomial(text).map_err(|e| config_error(format!("--{flag}: {e:#}")))
}

fn complex(flag: &str, text: &str) -> Result<(f64, f64)> {
    let z: Complex64 =
        parse::complex(text).map_err(|e| config_error(format!("--{flag}: {e:#}")))?;
    Ok((z.re, z.im))
}

fn to_u64_terms(terms: Vec<(usize, f64)>) -> Vec<(u64, f64)> {
    terms.into_iter().map(|(k, c)| (k as u64, c)).collect()
}

fn resolve_kinetic(a: &KineticArgs, f: &FileConfig) -> Result<KineticRunConfig> {
    let f0 = a.f0.clone().or_else(|| f.f0.clone());
    let f0_minus = a.f0_minus.clone().or_else(|| f.f0_minus.clone());
    let n_plus = a.n_plus.or(f.n_plus);
    let n_minus = a.n_minus.or(f.n_minus);
    let n0 = a.n0.or(f.n0);
    let symmetric = a.symmetric || f.symmetric.unwrap_or(false);
    let (plus, minus) = if let Some(p) = f0 {
        if symmetric && f0_minus.is_some() {
            return Err(config_error("--symmetric conflicts with --f0-minus"));
        }
        let plus = polynomial("f0", &p)?;
        let minus = match f0_minus {
            Some(m) => polynomial("f0-minus", &m)?,
            None => plus.clone(),
        };
        (to_u64_terms(plus), to_u64_terms(minus))
    } else if n_plus.is_some() || n_minus.is_some() {
        if symmetric {
            return Err(config_error(
                "--symmetric conflicts with --n-plus/--n-minus",
            ));
        }
        (
            vec![(1, n_plus.unwrap_or(0.0))],
            vec![(1, n_minus.unwrap_or(0.0))],
        )
    } else {
        let n0 = n0.unwrap_or(1.0);
        (vec![(1, n0 / 2.0)], vec![(1, n0 / 2.0)])
    };
    Ok(KineticRunConfig {
        kernel: a.kernel.or(f.kernel).unwrap_or_default(),
        f0_plus: plus,
        f0_minus: minus,
        truncation: a.truncation.or(f.truncation).unwrap_or(256),
        dt: a.dt.or(f.dt).unwrap_or(0.01),
        t: match a
            .t
            .map(|x| vec![x])
            .or_else(|| f.t.clone().map(OneOrMany::into_vec))
        {
            None => 1.0,
            Some(v) if v.len() == 1 => v[0],
            Some(_) => return Err(config_error("kinetic takes a single --t")),
        },
        output_every: a.output_every.or(f.output_every),
    })
}

fn resolve_oracle(a: &OracleArgs, f: &FileConfig) -> Result<OracleRunConfig> {
    let plus =
        a.f0.clone()
            .or_else(|| f.f0.clone())
            .ok_or_else(|| config_error("--f0 is required"))?;
    let minus = a.f0_minus.clone().or_else(|| f.f0_minus.clone());
    Ok(OracleRunConfig {
        f0_plus: polynomial("f0", &plus)?,
        f0_minus: minus.map(|m| polynomial("f0-minus", &m)).transpose()?,
        times: a
            .t
            .clone()
            .or_else(|| f.t.clone().map(OneOrMany::into_vec))
            .unwrap_or_else(|| vec![1.0]),
        truncation: a.truncation.or(f.truncation).unwrap_or(64),
        radius: a.radius.or(f.radius).unwrap_or(0.999),
    })
}

fn resolve_selfsim(a: &SelfsimArgs, f: &FileConfig) -> Result<SelfsimRunConfig> {
    let plus = a
        .perturb
        .clone()
        .or_else(|| f.perturb.clone())
        .unwrap_or_else(|| "1e-3i".into());
    let minus = a
        .perturb_minus
        .clone()
        .or_else(|| f.perturb_minus.clone())
        .unwrap_or_else(|| plus.clone());
    Ok(SelfsimRunConfig {
        perturb_plus: complex("perturb", &plus)?,
        perturb_minus: complex("perturb-minus", &minus)?,
        tau_start: a.tau_start.or(f.tau_start).unwrap_or(0.0),
        tau_max: a.tau_max.or(f.tau_max).unwrap_or(20.0),
        steps: a.steps.or(f.steps).unwrap_or(20_000),
        record_every: a.record_every.or(f.record_every).unwrap_or(1),
        profile: a.profile || f.profile.unwrap_or(false),
        zeta_max: a.zeta_max.or(f.zeta_max).unwrap_or(5.0),
        zeta_step: a.zeta_step.or(f.zeta_step).unwrap_or(0.1),
    })
}

fn resolve(cmd: &Command) -> Result<RunConfig> {
    Ok(match cmd {
        Command::Simulate(a) => {
            RunConfig::Simulate(resolve_sim(a, &load_file(a.common.config.as_deref())?)?)
        }
        Command::Ensemble(a) => {
            let f = load_file(a.sim.common.config.as_deref())?;
            RunConfig::Ensemble(EnsembleRunConfig {
                sim: resolve_sim(&a.sim, &f)?,
                realizations: a.realizations.or(f.realizations).unwrap_or(1000),
                threads: a.threads.or(f.threads),
            })
        }
        Command::Kinetic(a) => {
            RunConfig::Kinetic(resolve_kinetic(a, &load_file(a.common.config.as_deref())?)?)
        }
        Command::Oracle(a) => {
            RunConfig::Oracle(resolve_oracle(a, &load_file(a.common.config.as_deref())?)?)
        }
        Command::Selfsim(a) => {
            RunConfig::Selfsim(resolve_selfsim(a, &load_file(a.common.config.as_deref())?)?)
        }
        Command::Replay(_) => unreachable!("replay has no run config"),
    })
}

fn out_dir(cmd: &Command) -> &Path {
    match cmd {
        Command::Simulate(a) => &a.common.out,
        Command::Ensemble(a) => &a.sim.common.out,
        Command::Kinetic(a) => &a.common.out,
        Command::Oracle(a) => &a.common.out,
        Command::Selfsim(a) => &a.common.out,
        Command::Replay(_) => unreachable!("replay chooses its own directory"),
    }
}

/// Returns the number of mismatched files.
fn replay(a: &ReplayArgs) -> Result<usize> {
    let manifest =
        RunManifest::read(&a.manifest).map_err(|e| config_error(format!("--manifest: {e:#}")))?;
    let cfg = RunConfig::from_manifest(&manifest)?;
    let tmp;
    let out = match &a.out {
        Some(p) => p.clone(),
        None => {
            tmp = tempfile::tempdir().context("creating a temporary directory")?;
            tmp.path().to_path_buf()
        }
    };
    execute(&cfg, &out)?;
    let mut bad = 0;
    for d in &manifest.outputs {
        let path = out.join(&d.path);
        let ok = path.exists() && sha256_file(&path)? == d.sha256;
        if !ok {
            bad += 1;
            eprintln!("mismatch: {}", d.path);
        }
    }
    println!(
        "replayed {}: {} of {} outputs match",
        manifest.command,
        manifest.outputs.len() - bad,
        manifest.outputs.len()
    );
    Ok(bad)
}

fn exit_code(err: &anyhow::Error) -> u8 {
    if err.downcast_ref::<ConfigError>().is_some() {
        return 2;
    }
    match err.downcast_ref::<ringcoag::Error>() {
        Some(e) if e.is_numerical() => 3,
        Some(_) => 2,
        None => 1,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match &cli.command {
        Command::Replay(a) => replay(a).map(|bad| {
            if bad == 0 {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(1)
            }
        }),
        cmd => resolve(cmd)
            .and_then(|cfg| execute(&cfg, out_dir(cmd)))
            .map(|m| {
                println!(
                    "{}: wrote {} files to {}",
                    m.command,
                    m.outputs.len() + 1,
                    out_dir(cmd).display()
                );
                ExitCode::SUCCESS
            }),
    };
    outcome.unwrap_or_else(|e| {
        eprintln!("error: {e:#}");
        ExitCode::from(exit_code(&e))
    })
}
