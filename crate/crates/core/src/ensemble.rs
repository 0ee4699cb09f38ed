//! Independent realizations run in parallel, and the statistics built from
//! them: final-state summaries, the scaling collapse of `N∞`, fluctuations
//! of `Z = N+ - N-`, the particle-weighted size distribution and the time
//! scale linking the simulation to the kinetic equations.

use std::collections::BTreeMap;
use std::f64::consts::PI;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ring_sim::{run_realization, InitMode, RealizationResult, SimConfig};
use crate::stats::{self, fit_scale, FitResult};
use crate::types::SeedSpec;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleConfig {
    /// Template for every realization; its `realization_index` is replaced
    /// by the realization number and its sample times by `z_grid`.
    pub sim: SimConfig,
    pub realizations: u64,
    pub z_grid: Vec<f64>,
}

impl EnsembleConfig {
    pub fn validate(&self) -> Result<()> {
        if self.realizations == 0 {
            return Err(Error::InvalidConfig(
                "at least one realization is required".into(),
            ));
        }
        self.realization_config(0).validate()
    }

    pub fn realization_config(&self, index: u64) -> SimConfig {
        SimConfig {
            z_sample_times: self.z_grid.clone(),
            seed: SeedSpec::new(self.sim.seed.master_seed, index),
            ..self.sim.clone()
        }
    }
}

/// All realizations, in index order whatever the schedule.
pub fn run_ensemble(cfg: &EnsembleConfig) -> Result<Vec<RealizationResult>> {
    cfg.validate()?;
    (0..cfg.realizations)
        .into_par_iter()
        .map(|i| run_realization(&cfg.realization_config(i)))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleSummary {
    pub realizations: u64,
    pub mean_n_inf: f64,
    pub sd_n_inf: f64,
    pub mean_t_inf: f64,
    pub sd_t_inf: f64,
    /// Fraction of realizations ending in a single cluster.
    pub p_single: f64,
    pub se_p_single: f64,
    pub single_count: u64,
    pub z_times: Vec<f64>,
    pub mean_z: Vec<f64>,
    pub var_z: Vec<f64>,
    pub mean_z0: f64,
    pub z0_variance: f64,
}

impl EnsembleSummary {
    pub fn se_mean_n_inf(&self) -> f64 {
        self.sd_n_inf / (self.realizations as f64).sqrt()
    }
}

fn column(results: &[RealizationResult], f: impl Fn(&RealizationResult) -> f64) -> Vec<f64> {
    results.iter().map(f).collect()
}

fn z_column(results: &[RealizationResult], k: usize) -> Vec<f64> {
    column(results, |r| r.samples[k].z() as f64)
}

pub fn summarize(results: &[RealizationResult]) -> Result<EnsembleSummary> {
    let first = results
        .first()
        .ok_or_else(|| Error::InvalidConfig("no realizations to summarize".into()))?;
    let grid: Vec<f64> = first.samples.iter().map(|s| s.t).collect();
    if results.iter().any(|r| r.samples.len() != grid.len()) {
        return Err(Error::InvalidConfig(
            "realizations were sampled on different grids".into(),
        ));
    }
    let m = results.len() as f64;
    let n_inf = column(results, |r| r.n_infinity as f64);
    let t_inf = column(results, |r| r.t_infinity);
    let z0 = column(results, |r| r.z0 as f64);
    let single_count = results.iter().filter(|r| r.n_infinity == 1).count() as u64;
    let p_single = single_count as f64 / m;
    let (mean_z, var_z) = (0..grid.len())
        .map(|k| {
            let z = z_column(results, k);
            (stats::mean(&z), stats::sample_variance(&z))
        })
        .unzip();
    Ok(EnsembleSummary {
        realizations: results.len() as u64,
        mean_n_inf: stats::mean(&n_inf),
        sd_n_inf: stats::sample_sd(&n_inf),
        mean_t_inf: stats::mean(&t_inf),
        sd_t_inf: stats::sample_sd(&t_inf),
        p_single,
        se_p_single: (p_single * (1.0 - p_single) / m).sqrt(),
        single_count,
        z_times: grid,
        mean_z,
        var_z,
        mean_z0: stats::mean(&z0),
        z0_variance: stats::sample_variance(&z0),
    })
}

/// `G+(x) = (2 / (σ √(2π))) exp(-x² / 2σ²)` for `x >= 0`.
pub fn half_gaussian(x: f64, sigma: f64) -> f64 {
    2.0 / (sigma * (2.0 * PI).sqrt()) * (-x * x / (2.0 * sigma * sigma)).exp()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Collapse {
    /// Bin centres in `x = N∞ / √N0`.
    pub x: Vec<f64>,
    /// Density of `x`, integrating to one.
    pub density: Vec<f64>,
    pub counts: Vec<u64>,
    /// Bin width in units of `N∞`.
    pub bin_width: u64,
    pub half_gaussian: FitResult,
}

/// Histogram of `x = N∞ N0^{-1/2}` with Freedman–Diaconis bins (rounded to
/// whole clusters) and the least-squares half-Gaussian width.
pub fn collapse_n_inf(results: &[RealizationResult], n0: u32) -> Result<Collapse> {
    let scale = (n0 as f64).sqrt();
    let mut xs = column(results, |r| r.n_infinity as f64 / scale);
    if xs.is_empty() {
        return Err(Error::DegenerateHistogram { occupied: 0 });
    }
    xs.sort_by(f64::total_cmp);
    let iqr = stats::quantile_sorted(&xs, 0.75) - stats::quantile_sorted(&xs, 0.25);
    let h = 2.0 * iqr / (xs.len() as f64).cbrt();
    let width = ((h * scale).round() as u64).max(1);

    // bin k holds N∞ in [k w + 1, (k + 1) w]
    let mut hist: BTreeMap<u64, u64> = BTreeMap::new();
    for r in results {
        *hist.entry((r.n_infinity as u64 - 1) / width).or_insert(0) += 1;
    }
    if hist.len() < 3 {
        return Err(Error::DegenerateHistogram {
            occupied: hist.len(),
        });
    }
    let last = *hist.keys().next_back().expect("non-empty");
    let m = results.len() as f64;
    let dx = width as f64 / scale;
    let (mut x, mut density, mut counts) = (Vec::new(), Vec::new(), Vec::new());
    for k in 0..=last {
        let c = hist.get(&k).copied().unwrap_or(0);
        x.push((0.5 + (k as f64 + 0.5) * width as f64) / scale);
        density.push(c as f64 / (m * dx));
        counts.push(c);
    }
    let points: Vec<(f64, f64)> = x.iter().copied().zip(density.iter().copied()).collect();
    let fit = fit_scale(&points, |sigma, x| half_gaussian(x, sigma), 1e-2, 1e2);
    Ok(Collapse {
        x,
        density,
        counts,
        bin_width: width,
        half_gaussian: fit,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ZRow {
    pub t: f64,
    pub mean_z: f64,
    pub var_z: f64,
    pub var_z0: f64,
    /// `sqrt(max(0, var Z(t) - var Z(0)))`
    pub sigma_hat: f64,
    /// Mean and standard error of `Z(t) - Z(0)`.
    pub mean_dz: f64,
    pub se_dz: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ZFluctuations {
    pub rows: Vec<ZRow>,
    /// Rate `a` in `σ̂ / √N0 = √(4 p0 (1 - p0)) (1 - exp(-a √(N0 t)))`.
    pub fit: FitResult,
    pub amplitude: f64,
}

impl ZFluctuations {
    /// Largest `|mean ΔZ| / SE` over the grid; `0` where the SE vanishes
    /// and the mean is exactly zero.
    pub fn max_drift_in_se(&self) -> f64 {
        self.rows
            .iter()
            .map(|r| {
                if r.se_dz > 0.0 {
                    r.mean_dz.abs() / r.se_dz
                } else if r.mean_dz == 0.0 {
                    0.0
                } else {
                    f64::INFINITY
                }
            })
            .fold(0.0, f64::max)
    }
}

/// Initial-condition variance of `Z` implied by the sampling mode.
pub fn expected_z0_variance(n0: u32, p0: f64, mode: InitMode) -> f64 {
    match mode {
        InitMode::Binomial => 4.0 * p0 * (1.0 - p0) * n0 as f64,
        InitMode::FixedCount => 0.0,
    }
}

pub fn z_fluctuations(results: &[RealizationResult], n0: u32, p0: f64) -> Result<ZFluctuations> {
    let summary = summarize(results)?;
    if summary.z_times.is_empty() {
        return Err(Error::InvalidConfig("no sample times to analyse".into()));
    }
    let m = results.len() as f64;
    let z0 = column(results, |r| r.z0 as f64);
    let rows: Vec<ZRow> = summary
        .z_times
        .iter()
        .enumerate()
        .map(|(k, &t)| {
            let z = z_column(results, k);
            let dz: Vec<f64> = z.iter().zip(&z0).map(|(a, b)| a - b).collect();
            let var_z = summary.var_z[k];
            ZRow {
                t,
                mean_z: summary.mean_z[k],
                var_z,
                var_z0: summary.z0_variance,
                sigma_hat: (var_z - summary.z0_variance).max(0.0).sqrt(),
                mean_dz: stats::mean(&dz),
                se_dz: stats::sample_sd(&dz) / m.sqrt(),
            }
        })
        .collect();
    let scale = (n0 as f64).sqrt();
    let amplitude = (4.0 * p0 * (1.0 - p0)).sqrt();
    let points: Vec<(f64, f64)> = rows
        .iter()
        .map(|r| ((n0 as f64 * r.t).sqrt(), r.sigma_hat / scale))
        .collect();
    let fit = fit_scale(
        &points,
        |a, x| amplitude * (1.0 - (-a * x).exp()),
        1e-4,
        1e2,
    );
    Ok(ZFluctuations {
        rows,
        fit,
        amplitude,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SizeDistribution {
    pub n: Vec<u64>,
    /// Probability that a particle sits in a cluster of size `n`.
    pub f: Vec<f64>,
    pub argmax: u64,
}

pub fn particle_size_distribution(
    results: &[RealizationResult],
    n0: u32,
) -> Result<SizeDistribution> {
    if results.is_empty() {
        return Err(Error::InvalidConfig("no realizations".into()));
    }
    let mut mass_at: BTreeMap<u64, f64> = BTreeMap::new();
    for r in results {
        for side in [r.final_spectrum.f_plus(), r.final_spectrum.f_minus()] {
            for (&size, &count) in side {
                *mass_at.entry(size).or_insert(0.0) += size as f64 * count;
            }
        }
    }
    let total = results.len() as f64 * n0 as f64;
    let n: Vec<u64> = (1..=n0 as u64).collect();
    let f: Vec<f64> = n
        .iter()
        .map(|k| mass_at.get(k).copied().unwrap_or(0.0) / total)
        .collect();
    let argmax = n
        .iter()
        .zip(&f)
        .fold((1, f64::NEG_INFINITY), |best, (&k, &v)| {
            if v > best.1 {
                (k, v)
            } else {
                best
            }
        })
        .0;
    Ok(SizeDistribution { n, f, argmax })
}

/// Ensemble-mean total cluster count `N(t)` on the sample grid.
pub fn mean_cluster_count(results: &[RealizationResult]) -> Vec<(f64, f64)> {
    let Some(first) = results.first() else {
        return Vec::new();
    };
    first
        .samples
        .iter()
        .enumerate()
        .map(|(k, s)| {
            let n = column(results, |r| {
                (r.samples[k].n_plus + r.samples[k].n_minus) as f64
            });
            (s.t, stats::mean(&n))
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimescaleFit {
    /// Simulation time maps to kinetic time `κ t`.
    pub kappa: f64,
    pub residual: f64,
    /// Largest relative deviation of the simulated curve from the fitted one.
    pub max_rel_deviation: f64,
}

/// Least-squares `κ` so that `observed(t) ≈ kinetic(κ t)`.
pub fn timescale_fit(observed: &[(f64, f64)], kinetic: impl Fn(f64) -> f64) -> TimescaleFit {
    let fit = fit_scale(observed, |k, t| kinetic(k * t), 1e-6, 1e6);
    let max_rel_deviation = observed
        .iter()
        .map(|&(t, y)| {
            let m = kinetic(fit.estimate * t);
            ((y - m) / m).abs()
        })
        .fold(0.0, f64::max);
    TimescaleFit {
        kappa: fit.estimate,
        residual: fit.residual,
        max_rel_deviation,
    }
}

/// `N(t) = N0 / (1 + N0 t / 4)`: total count of the symmetric monodisperse
/// random-kernel solution with `N0 / 2` clusters per direction.
pub fn kinetic_total_count(n0: f64, t: f64) -> f64 {
    n0 / (1.0 + 0.25 * n0 * t)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::types::KernelKind;

    fn cfg(n0: u32, m: u64) -> EnsembleConfig {
        EnsembleConfig {
            sim: SimConfig {
                n0,
                p: 0.1,
                p0: 0.5,
                seed: SeedSpec::new(2024, 0),
                ..SimConfig::default()
            },
            realizations: m,
            z_grid: vec![0.0, 0.1, 1.0],
        }
    }

    #[test]
    fn ordered_and_deterministic() {
        let c = cfg(20, 64);
        let a = run_ensemble(&c).unwrap();
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(1)
            .build()
            .unwrap();
        let b = pool.install(|| run_ensemble(&c)).unwrap();
        assert_eq!(a, b);
        for (i, r) in a.iter().enumerate() {
            assert_eq!(
                *r,
                run_realization(&c.realization_config(i as u64)).unwrap()
            );
        }
        assert_eq!(summarize(&a).unwrap(), summarize(&b).unwrap());
    }

    #[test]
    fn single_realization_summary() {
        let r = run_ensemble(&cfg(10, 1)).unwrap();
        let s = summarize(&r).unwrap();
        assert_eq!(s.mean_n_inf, r[0].n_infinity as f64);
        assert_eq!(s.sd_n_inf, 0.0);
        assert_eq!(s.mean_t_inf, r[0].t_infinity);
    }

    #[test]
    fn degenerate_all_plus() {
        let mut c = cfg(8, 10);
        c.sim.p0 = 1.0;
        c.sim.init_mode = InitMode::FixedCount;
        let s = summarize(&run_ensemble(&c).unwrap()).unwrap();
        assert_eq!((s.mean_n_inf, s.mean_t_inf, s.p_single), (8.0, 0.0, 0.0));
        assert_eq!(s.z0_variance, 0.0);
    }

    #[test]
    fn rejects_empty_ensemble() {
        assert!(run_ensemble(&cfg(10, 0)).is_err());
        assert!(summarize(&[]).is_err());
    }

    #[test]
    fn final_states_are_consistent() {
        let r = run_ensemble(&cfg(50, 200)).unwrap();
        for x in &r {
            let m = crate::types::moments(&x.final_spectrum);
            assert_eq!(m.total_mass(), 50.0);
            assert!(x.n_infinity as i64 >= x.z_final().abs());
        }
    }

    #[test]
    fn binomial_z0_variance() {
        let c = EnsembleConfig {
            z_grid: vec![0.0],
            ..cfg(100, 4000)
        };
        let s = summarize(&run_ensemble(&c).unwrap()).unwrap();
        let expected = expected_z0_variance(100, 0.5, InitMode::Binomial);
        // the sample variance of a near-normal variable has sd ≈ σ² √(2/(M-1))
        let se = expected * (2.0 / 3999.0f64).sqrt();
        assert!(
            (s.z0_variance - expected).abs() < 3.0 * se,
            "{}",
            s.z0_variance
        );
    }

    #[test]
    fn one_cluster_distribution() {
        let mut c = cfg(6, 1);
        c.sim.p = 1.0;
        c.sim.init_mode = InitMode::FixedCount;
        // search for a seed that ends in a single cluster
        let r = (0..200u64)
            .map(|s| {
                c.sim.seed = SeedSpec::new(s, 0);
                run_ensemble(&c).unwrap()
            })
            .find(|r| r[0].n_infinity == 1)
            .expect("some seed coalesces fully");
        let d = particle_size_distribution(&r, 6).unwrap();
        assert_eq!(d.f[5], 1.0);
        assert!(d.f[..5].iter().all(|&v| v == 0.0));
        assert_eq!(d.argmax, 6);
    }

    #[test]
    fn size_distribution_is_normalized() {
        let r = run_ensemble(&cfg(10, 2000)).unwrap();
        let d = particle_size_distribution(&r, 10).unwrap();
        assert!((d.f.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert_eq!(d.argmax, 10);
    }

    #[test]
    fn half_gaussian_is_a_density() {
        let h = 1e-3;
        let total: f64 = (0..20_000)
            .map(|k| h * half_gaussian((k as f64 + 0.5) * h, 1.3))
            .sum();
        assert!((total - 1.0).abs() < 1e-6);
    }

    #[test]
    fn collapse_needs_spread() {
        let mut c = cfg(8, 5);
        c.sim.p0 = 1.0;
        let r = run_ensemble(&c).unwrap();
        assert!(matches!(
            collapse_n_inf(&r, 8),
            Err(Error::DegenerateHistogram { .. })
        ));
    }

    #[test]
    fn collapse_density_integrates_to_one() {
        let r = run_ensemble(&cfg(100, 2000)).unwrap();
        let col = collapse_n_inf(&r, 100).unwrap();
        let dx = col.bin_width as f64 / 10.0;
        assert!((col.density.iter().sum::<f64>() * dx - 1.0).abs() < 1e-12);
        assert_eq!(col.counts.iter().sum::<u64>(), 2000);
    }

    #[test]
    fn timescale_of_kinetic_against_itself() {
        let obs: Vec<(f64, f64)> = (0..20)
            .map(|k| (k as f64 * 0.1, kinetic_total_count(50.0, k as f64 * 0.1)))
            .collect();
        let fit = timescale_fit(&obs, |t| kinetic_total_count(50.0, t));
        assert!((fit.kappa - 1.0).abs() < 1e-6 && fit.residual < 1e-10);
    }

    #[test]
    fn fixed_count_z_is_conserved_on_average() {
        let c = EnsembleConfig {
            sim: SimConfig {
                n0: 100,
                p: 0.1,
                p0: 0.5,
                init_mode: InitMode::FixedCount,
                kernel: KernelKind::Random,
                z_sample_times: vec![],
                seed: SeedSpec::new(5, 0),
            },
            realizations: 1000,
            z_grid: (0..10).map(|k| k as f64 * 0.05).collect(),
        };
        let r = run_ensemble(&c).unwrap();
        let z = z_fluctuations(&r, 100, 0.5).unwrap();
        assert_eq!(z.rows[0].var_z0, 0.0);
        assert_eq!(z.rows[0].sigma_hat, 0.0);
        assert!(z.rows.last().unwrap().sigma_hat > 1.0);
        assert!(z.fit.estimate > 0.0);
    }
}
