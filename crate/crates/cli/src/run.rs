//! Fully resolved run configurations and their execution.

use std::path::Path;

use anyhow::{bail, Result};
use num_complex::Complex64;
use ringcoag::ensemble::{
    collapse_n_inf, particle_size_distribution, run_ensemble, summarize, z_fluctuations,
    EnsembleConfig,
};
use ringcoag::genfun::{exact_asymmetric, exact_symmetric, pole_location, winding_check};
use ringcoag::kinetic::{conserved_diagnostics, integrate, SolverConfig};
use ringcoag::majority_ss::{profile_grid, shoot, BromwichConfig, LaplaceProfile};
use ringcoag::{
    run_realization_with, ClusterSpectrum, Error, InitMode, KernelKind, MeetingEvent, PowerSeries,
    SeedSpec, SimConfig,
};
use serde::{Deserialize, Serialize};

use crate::output::{unix_now, OutputDir, RunManifest, MANIFEST_NAME};
use crate::ConfigError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulateConfig {
    pub n0: u32,
    pub p: f64,
    pub p0: f64,
    pub init: InitMode,
    pub kernel: KernelKind,
    pub seed: u64,
    pub z_grid: Vec<f64>,
}

impl SimulateConfig {
    fn sim(&self) -> SimConfig {
        SimConfig {
            n0: self.n0,
            p: self.p,
            p0: self.p0,
            init_mode: self.init,
            kernel: self.kernel,
            z_sample_times: self.z_grid.clone(),
            seed: SeedSpec::new(self.seed, 0),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleRunConfig {
    #[serde(flatten)]
    pub sim: SimulateConfig,
    pub realizations: u64,
    pub threads: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KineticRunConfig {
    pub kernel: KernelKind,
    pub f0_plus: Vec<(u64, f64)>,
    pub f0_minus: Vec<(u64, f64)>,
    pub truncation: usize,
    pub dt: f64,
    pub t: f64,
    pub output_every: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleRunConfig {
    pub f0_plus: Vec<(usize, f64)>,
    pub f0_minus: Option<Vec<(usize, f64)>>,
    pub times: Vec<f64>,
    pub truncation: usize,
    pub radius: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelfsimRunConfig {
    pub perturb_plus: (f64, f64),
    pub perturb_minus: (f64, f64),
    pub tau_start: f64,
    pub tau_max: f64,
    pub steps: usize,
    pub record_every: usize,
    pub profile: bool,
    pub zeta_max: f64,
    pub zeta_step: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "command", content = "config", rename_all = "lowercase")]
pub enum RunConfig {
    Simulate(SimulateConfig),
    Ensemble(EnsembleRunConfig),
    Kinetic(KineticRunConfig),
    Oracle(OracleRunConfig),
    Selfsim(SelfsimRunConfig),
}

impl RunConfig {
    pub fn name(&self) -> &'static str {
        match self {
            RunConfig::Simulate(_) => "simulate",
            RunConfig::Ensemble(_) => "ensemble",
            RunConfig::Kinetic(_) => "kinetic",
            RunConfig::Oracle(_) => "oracle",
            RunConfig::Selfsim(_) => "selfsim",
        }
    }

    fn seed(&self) -> Option<u64> {
        match self {
            RunConfig::Simulate(c) => Some(c.seed),
            RunConfig::Ensemble(c) => Some(c.sim.seed),
            _ => None,
        }
    }

    fn to_value(&self) -> Result<serde_json::Value> {
        let tagged = serde_json::to_value(self)?;
        Ok(tagged["config"].clone())
    }

    pub fn from_manifest(m: &RunManifest) -> Result<Self> {
        let tagged = serde_json::json!({ "command": m.command, "config": m.config });
        serde_json::from_value(tagged)
            .map_err(|e| ConfigError(format!("manifest config: {e}")).into())
    }
}

/// Runs `cfg`, writing its outputs and manifest into `out`.
pub fn execute(cfg: &RunConfig, out: &Path) -> Result<RunManifest> {
    let started = unix_now();
    let mut dir = OutputDir::create(out)?;
    match cfg {
        RunConfig::Simulate(c) => simulate(c, &mut dir)?,
        RunConfig::Ensemble(c) => ensemble(c, &mut dir)?,
        RunConfig::Kinetic(c) => kinetic(c, &mut dir)?,
        RunConfig::Oracle(c) => oracle(c, &mut dir)?,
        RunConfig::Selfsim(c) => selfsim(c, &mut dir)?,
    }
    let manifest = RunManifest {
        tool: "ringcoag".into(),
        version: env!("CARGO_PKG_VERSION").into(),
        command: cfg.name().into(),
        config: cfg.to_value()?,
        master_seed: cfg.seed(),
        started_unix: started,
        finished_unix: unix_now(),
        outputs: RunManifest::digest_outputs(&dir)?,
    };
    let text = serde_json::to_string_pretty(&manifest)? + "\n";
    std::fs::write(out.join(MANIFEST_NAME), text)?;
    Ok(manifest)
}

fn simulate(c: &SimulateConfig, dir: &mut OutputDir) -> Result<()> {
    let mut events: Vec<MeetingEvent> = Vec::new();
    let mut record = |e: &MeetingEvent| events.push(*e);
    let result = run_realization_with(&c.sim(), Some(&mut record))?;
    dir.json("realization.json", &result)?;
    dir.csv(
        "events.csv",
        &[
            "time", "position", "plus_id", "minus_id", "merged", "velocity",
        ],
        events.iter().map(|e| {
            (
                e.time,
                e.position,
                e.plus_id,
                e.minus_id,
                e.merged_velocity.is_some(),
                e.merged_velocity.unwrap_or(0),
            )
        }),
    )?;
    if !c.z_grid.is_empty() {
        dir.csv(
            "samples.csv",
            &["t", "n_plus", "n_minus", "m_plus", "m_minus", "z"],
            result
                .samples
                .iter()
                .map(|s| (s.t, s.n_plus, s.n_minus, s.m_plus, s.m_minus, s.z())),
        )?;
    }
    Ok(())
}

#[derive(Serialize)]
struct EnsembleFits {
    bin_width: Option<u64>,
    half_gaussian_sigma: Option<ringcoag::FitResult>,
    z_rate: Option<ringcoag::FitResult>,
    size_distribution_argmax: u64,
    /// Non-fatal conditions, e.g. too few histogram bins to fit.
    notes: Vec<String>,
}

fn ensemble(c: &EnsembleRunConfig, dir: &mut OutputDir) -> Result<()> {
    let cfg = EnsembleConfig {
        sim: c.sim.sim(),
        realizations: c.realizations,
        z_grid: c.sim.z_grid.clone(),
    };
    let results = match c.threads {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()?
            .install(|| run_ensemble(&cfg))?,
        None => run_ensemble(&cfg)?,
    };
    let s = summarize(&results)?;
    let mut notes = Vec::new();
    dir.csv(
        "summary.csv",
        &[
            "n0",
            "M",
            "p",
            "p0",
            "init_mode",
            "mean_ninf",
            "sd_ninf",
            "mean_tinf",
            "sd_tinf",
            "p_single",
            "se_p_single",
        ],
        [(
            c.sim.n0,
            c.realizations,
            c.sim.p,
            c.sim.p0,
            c.sim.init,
            s.mean_n_inf,
            s.sd_n_inf,
            s.mean_t_inf,
            s.sd_t_inf,
            s.p_single,
            s.se_p_single,
        )],
    )?;

    let collapse = match collapse_n_inf(&results, c.sim.n0) {
        Ok(col) => Some(col),
        Err(e @ Error::DegenerateHistogram { .. }) => {
            notes.push(e.to_string());
            None
        }
        Err(e) => return Err(e.into()),
    };
    let root = (c.sim.n0 as f64).sqrt();
    let rows: Vec<(f64, u64, u64, u64, f64)> = match &collapse {
        Some(col) => (0..col.x.len())
            .map(|k| {
                let lo = k as u64 * col.bin_width + 1;
                (
                    col.x[k],
                    lo,
                    lo + col.bin_width - 1,
                    col.counts[k],
                    col.density[k],
                )
            })
            .collect(),
        None => {
            // unit-width histogram when there is too little spread to fit
            let mut counts = std::collections::BTreeMap::new();
            for r in &results {
                *counts.entry(r.n_infinity as u64).or_insert(0u64) += 1;
            }
            let m = results.len() as f64;
            counts
                .into_iter()
                .map(|(n, k)| (n as f64 / root, n, n, k, k as f64 / (m / root)))
                .collect()
        }
    };
    dir.csv(
        "ninf_hist.csv",
        &["x", "ninf_low", "ninf_high", "count", "density"],
        rows,
    )?;

    let z_header = ["t", "mean_z", "var_z", "var_z0", "sigma_hat"];
    let z_rate = if c.sim.z_grid.is_empty() {
        dir.csv(
            "zfluct.csv",
            &z_header,
            std::iter::empty::<(f64, f64, f64, f64, f64)>(),
        )?;
        None
    } else {
        let fl = z_fluctuations(&results, c.sim.n0, c.sim.p0)?;
        dir.csv(
            "zfluct.csv",
            &z_header,
            fl.rows
                .iter()
                .map(|r| (r.t, r.mean_z, r.var_z, r.var_z0, r.sigma_hat)),
        )?;
        Some(fl.fit)
    };

    let sizes = particle_size_distribution(&results, c.sim.n0)?;
    dir.csv(
        "sizedist.csv",
        &["n", "f"],
        sizes.n.iter().zip(&sizes.f).map(|(n, f)| (*n, *f)),
    )?;

    dir.json(
        "fits.json",
        &EnsembleFits {
            bin_width: collapse.as_ref().map(|c| c.bin_width),
            half_gaussian_sigma: collapse.as_ref().map(|c| c.half_gaussian),
            z_rate,
            size_distribution_argmax: sizes.argmax,
            notes,
        },
    )?;
    Ok(())
}

fn kinetic(c: &KineticRunConfig, dir: &mut OutputDir) -> Result<()> {
    let init = ClusterSpectrum::from_pairs(c.f0_plus.iter().copied(), c.f0_minus.iter().copied())?;
    let solver = SolverConfig::new(c.truncation, c.dt)?;
    let traj = integrate(&init, c.t, &solver, c.kernel, c.output_every)?;
    let mut rows = Vec::new();
    for s in &traj {
        for (dir_name, f) in [("+", &s.f_plus), ("-", &s.f_minus)] {
            for (i, &v) in f.iter().enumerate() {
                if v != 0.0 {
                    rows.push((s.t, dir_name, i + 1, v));
                }
            }
        }
    }
    dir.csv("spectra.csv", &["t", "direction", "ell", "f"], rows)?;
    dir.csv(
        "moments.csv",
        &[
            "t",
            "n_plus",
            "n_minus",
            "m_plus",
            "m_minus",
            "m2_plus",
            "m2_minus",
            "leaked_mass",
            "c0",
            "c1",
        ],
        traj.iter().map(|s| {
            let m = s.moments();
            let d = conserved_diagnostics(s);
            (
                s.t,
                m.n_plus + s.beyond_plus,
                m.n_minus + s.beyond_minus,
                m.m_plus,
                m.m_minus,
                m.m2_plus,
                m.m2_minus,
                s.leaked_mass(),
                d.c0,
                d.c1,
            )
        }),
    )?;
    Ok(())
}

#[derive(Serialize)]
struct OracleExtras {
    t: f64,
    pole_location: Option<f64>,
    winding_number: Option<i64>,
}

fn oracle(c: &OracleRunConfig, dir: &mut OutputDir) -> Result<()> {
    let plus = PowerSeries::from_terms(c.f0_plus.iter().copied(), c.truncation)?;
    let minus = match &c.f0_minus {
        Some(m) => Some(PowerSeries::from_terms(m.iter().copied(), c.truncation)?),
        None => None,
    };
    let mut rows = Vec::new();
    let mut extras = Vec::new();
    for &t in &c.times {
        let (fp, fm) = match &minus {
            None => {
                let f = exact_symmetric(&plus, t)?;
                (f.clone(), f)
            }
            Some(m) => exact_asymmetric(&plus, m, t)?,
        };
        for (name, f) in [("+", &fp), ("-", &fm)] {
            for ell in 1..=c.truncation {
                rows.push((t, name, ell, f.coeff(ell)));
            }
        }
        let (pole, winding) = match &minus {
            None if t > 0.0 => (pole_location(&plus, t).ok(), None),
            Some(m) if t > 0.0 => (None, Some(winding_check(&plus, m, t, c.radius)?)),
            _ => (None, None),
        };
        extras.push(OracleExtras {
            t,
            pole_location: pole,
            winding_number: winding,
        });
    }
    dir.csv("spectra.csv", &["t", "direction", "ell", "f"], rows)?;
    dir.json("oracle.json", &extras)?;
    Ok(())
}

#[derive(Serialize)]
struct SelfsimSummary {
    phi0_plus: (f64, f64),
    phi0_minus: (f64, f64),
    energy_drift: f64,
    max_modulus: f64,
    max_imag_residue: Option<f64>,
}

fn selfsim(c: &SelfsimRunConfig, dir: &mut OutputDir) -> Result<()> {
    let kick = |(re, im): (f64, f64)| Complex64::new(re, im);
    let shot = shoot(
        (kick(c.perturb_plus), kick(c.perturb_minus)),
        c.tau_start,
        c.tau_max,
        c.steps,
    )?;
    let traj = &shot.trajectory;
    let e0 = traj.energy[0];
    let every = c.record_every.max(1);
    let rows = traj
        .states
        .iter()
        .zip(&traj.energy)
        .enumerate()
        .filter(|(k, _)| k % every == 0 || *k == c.steps)
        .map(|(_, (s, e))| {
            (
                s.tau.re,
                s.tau.im,
                s.psi_plus.re,
                s.psi_plus.im,
                s.psi_minus.re,
                s.psi_minus.im,
                s.h_plus.re,
                s.h_plus.im,
                s.h_minus.re,
                s.h_minus.im,
                (e - e0).norm(),
            )
        });
    dir.csv(
        "ss_trajectory.csv",
        &[
            "tau_re",
            "tau_im",
            "psi_plus_re",
            "psi_plus_im",
            "psi_minus_re",
            "psi_minus_im",
            "h_plus_re",
            "h_plus_im",
            "h_minus_re",
            "h_minus_im",
            "energy_drift",
        ],
        rows,
    )?;
    let mut residue = None;
    if c.profile {
        if c.perturb_plus.1 != 0.0 || c.perturb_minus.1 != 0.0 {
            bail!(ConfigError("--profile needs real perturbations".into()));
        }
        if !(c.zeta_step > 0.0 && c.zeta_max >= 0.0) {
            bail!(ConfigError("zeta grid needs a positive step".into()));
        }
        let n = (c.zeta_max / c.zeta_step + 1e-9).floor() as usize;
        let zetas: Vec<f64> = (0..=n).map(|k| k as f64 * c.zeta_step).collect();
        let profile = LaplaceProfile::new(traj)?;
        let g = profile_grid(&profile, &BromwichConfig::default(), &zetas)?;
        residue = Some(g.max_imag_residue);
        dir.csv(
            "profile.csv",
            &["zeta", "phi_plus", "phi_minus"],
            (0..zetas.len()).map(|k| (g.zeta_values[k], g.phi_plus[k], g.phi_minus[k])),
        )?;
    }
    let (p0p, p0m) = shot.phi0();
    dir.json(
        "selfsim.json",
        &SelfsimSummary {
            phi0_plus: (p0p.re, p0p.im),
            phi0_minus: (p0m.re, p0m.im),
            energy_drift: traj.energy_drift(),
            max_modulus: traj.max_modulus(),
            max_imag_residue: residue,
        },
    )?;
    Ok(())
}
