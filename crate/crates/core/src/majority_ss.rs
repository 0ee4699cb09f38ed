//! Self-similar dynamical system of the majority kernel in logarithmic
//! variables:
//!
//! ```text
//! H+' = ψ- H+,  ψ+' = H+,  H-' = ψ+ H-,  ψ-' = H-
//! ```
//!
//! with first integral `E = ψ+ ψ- - H+ - H-`. Trajectories leaving the fixed
//! point `ψ± = 1, H± = 0` encode the Laplace transform of the size profile:
//! `φ(η) = ψ(ln η) - ψ(+∞)`. [`bromwich_invert`] turns `φ` back into `Φ(ζ)`.

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Any component above this modulus counts as divergence.
pub const DIVERGENCE_BOUND: f64 = 1e6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SSState {
    pub psi_plus: Complex64,
    pub psi_minus: Complex64,
    pub h_plus: Complex64,
    pub h_minus: Complex64,
    pub tau: Complex64,
}

impl SSState {
    pub fn fixed_point(tau: Complex64) -> Self {
        let one = Complex64::new(1.0, 0.0);
        let zero = Complex64::new(0.0, 0.0);
        Self {
            psi_plus: one,
            psi_minus: one,
            h_plus: zero,
            h_minus: zero,
            tau,
        }
    }

    /// Point on the real symmetric connection.
    pub fn symmetric(tau: f64, tau0: f64) -> Self {
        let (psi, h) = analytic_symmetric(tau, tau0);
        let (psi, h) = (Complex64::new(psi, 0.0), Complex64::new(h, 0.0));
        Self {
            psi_plus: psi,
            psi_minus: psi,
            h_plus: h,
            h_minus: h,
            tau: Complex64::new(tau, 0.0),
        }
    }

    fn components(&self) -> [Complex64; 4] {
        [self.psi_plus, self.psi_minus, self.h_plus, self.h_minus]
    }

    fn from_components(c: [Complex64; 4], tau: Complex64) -> Self {
        Self {
            psi_plus: c[0],
            psi_minus: c[1],
            h_plus: c[2],
            h_minus: c[3],
            tau,
        }
    }

    pub fn max_modulus(&self) -> f64 {
        self.components()
            .iter()
            .map(|c| c.norm())
            .fold(0.0, f64::max)
    }
}

/// `d/dτ (ψ+, ψ-, H+, H-)`.
pub fn rhs_ss(s: &SSState) -> [Complex64; 4] {
    [
        s.h_plus,
        s.h_minus,
        s.psi_minus * s.h_plus,
        s.psi_plus * s.h_minus,
    ]
}

pub fn first_integral(s: &SSState) -> Complex64 {
    s.psi_plus * s.psi_minus - s.h_plus - s.h_minus
}

/// Symmetric heteroclinic `ψ = -tanh((τ - τ0)/2)`, `H = -1/(1 + cosh(τ - τ0))`.
pub fn analytic_symmetric(tau: f64, tau0: f64) -> (f64, f64) {
    let x = tau - tau0;
    (-(0.5 * x).tanh(), -1.0 / (1.0 + x.cosh()))
}

fn rk4_step(c: [Complex64; 4], h: Complex64) -> [Complex64; 4] {
    let f = |c: [Complex64; 4]| rhs_ss(&SSState::from_components(c, Complex64::new(0.0, 0.0)));
    let add = |a: [Complex64; 4], k: [Complex64; 4], s: Complex64| {
        std::array::from_fn(|i| a[i] + s * k[i])
    };
    let k1 = f(c);
    let k2 = f(add(c, k1, h * 0.5));
    let k3 = f(add(c, k2, h * 0.5));
    let k4 = f(add(c, k3, h));
    std::array::from_fn(|i| c[i] + h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SSTrajectory {
    pub states: Vec<SSState>,
    /// First integral at each state.
    pub energy: Vec<Complex64>,
}

impl SSTrajectory {
    /// `max |E(τ) - E(τ_start)|`.
    pub fn energy_drift(&self) -> f64 {
        let e0 = self.energy[0];
        self.energy
            .iter()
            .map(|e| (e - e0).norm())
            .fold(0.0, f64::max)
    }

    pub fn last(&self) -> &SSState {
        self.states
            .last()
            .expect("trajectory holds the initial state")
    }

    pub fn max_modulus(&self) -> f64 {
        self.states
            .iter()
            .map(SSState::max_modulus)
            .fold(0.0, f64::max)
    }
}

/// RK4 along the straight segment from `initial.tau` to `tau_end`.
pub fn integrate_ss(initial: &SSState, tau_end: Complex64, steps: usize) -> Result<SSTrajectory> {
    if steps == 0 {
        return Err(Error::InvalidConfig(
            "integrate_ss needs at least one step".into(),
        ));
    }
    let h = (tau_end - initial.tau) / steps as f64;
    let mut states = Vec::with_capacity(steps + 1);
    let mut energy = Vec::with_capacity(steps + 1);
    states.push(*initial);
    energy.push(first_integral(initial));
    let mut c = initial.components();
    for k in 1..=steps {
        c = rk4_step(c, h);
        let tau = initial.tau + h * k as f64;
        let s = SSState::from_components(c, tau);
        if !(s.max_modulus() <= DIVERGENCE_BOUND) {
            return Err(Error::Diverged {
                tau_re: tau.re,
                tau_im: tau.im,
            });
        }
        energy.push(first_integral(&s));
        states.push(s);
    }
    Ok(SSTrajectory { states, energy })
}

/// Result of shooting from the fixed point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Shot {
    pub trajectory: SSTrajectory,
    /// `ψ±` at the end of the run, standing in for `ψ±(+∞)`.
    pub psi_inf_plus: Complex64,
    pub psi_inf_minus: Complex64,
}

impl Shot {
    /// `φ±(0) = 1 - ψ±(+∞)`.
    pub fn phi0(&self) -> (Complex64, Complex64) {
        (1.0 - self.psi_inf_plus, 1.0 - self.psi_inf_minus)
    }
}

/// Starts at `ψ± = 1`, `H± = perturbation` and integrates along the real
/// τ axis from `tau_start` to `tau_end`.
pub fn shoot(
    perturbation: (Complex64, Complex64),
    tau_start: f64,
    tau_end: f64,
    steps: usize,
) -> Result<Shot> {
    let mut start = SSState::fixed_point(Complex64::new(tau_start, 0.0));
    start.h_plus = perturbation.0;
    start.h_minus = perturbation.1;
    let trajectory = integrate_ss(&start, Complex64::new(tau_end, 0.0), steps)?;
    let last = *trajectory.last();
    Ok(Shot {
        trajectory,
        psi_inf_plus: last.psi_plus,
        psi_inf_minus: last.psi_minus,
    })
}

/// Boundedness of the continuation along one horizontal line of the strip.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StripLine {
    pub im_tau: f64,
    pub max_modulus: f64,
    pub energy_drift: f64,
}

/// Follows `initial` vertically to each `Im τ` in `lines`, then along that
/// line to `Re τ = tau_end_re`.
pub fn strip_check(
    initial: &SSState,
    tau_end_re: f64,
    lines: &[f64],
    steps: usize,
) -> Result<Vec<StripLine>> {
    lines
        .iter()
        .map(|&im| {
            let up = Complex64::new(initial.tau.re, im);
            let rise = integrate_ss(initial, up, (steps / 20).max(10))?;
            let run = integrate_ss(rise.last(), Complex64::new(tau_end_re, im), steps)?;
            let e0 = first_integral(initial);
            let drift = rise
                .energy
                .iter()
                .chain(&run.energy)
                .map(|e| (e - e0).norm())
                .fold(0.0, f64::max);
            Ok(StripLine {
                im_tau: im,
                max_modulus: rise.max_modulus().max(run.max_modulus()),
                energy_drift: drift,
            })
        })
        .collect()
}

/// `φ±(η)` for complex `η` with `Re η > 0`, read off a real trajectory and
/// continued into the strip `τ = ln|η| + i arg η`.
#[derive(Debug, Clone)]
pub struct LaplaceProfile {
    grid: Vec<SSState>,
    tau_start: f64,
    spacing: f64,
    psi_inf: (Complex64, Complex64),
    /// Step length for the continuation off the real axis.
    pub continuation_step: f64,
}

impl LaplaceProfile {
    /// `trajectory` must run along the real axis with uniform steps; its
    /// last state is taken as `ψ±(+∞)`.
    pub fn new(trajectory: &SSTrajectory) -> Result<Self> {
        let states = &trajectory.states;
        if states.len() < 2 || states.iter().any(|s| s.tau.im != 0.0) {
            return Err(Error::InvalidConfig(
                "profile needs a real trajectory with at least two states".into(),
            ));
        }
        let tau_start = states[0].tau.re;
        let spacing = (states[1].tau.re - tau_start).abs();
        let last = states.last().expect("non-empty");
        Ok(Self {
            grid: states.clone(),
            tau_start,
            spacing,
            psi_inf: (last.psi_plus, last.psi_minus),
            continuation_step: 0.01,
        })
    }

    fn state_at(&self, tau: Complex64) -> Result<SSState> {
        let idx = ((tau.re - self.tau_start) / self.spacing).round();
        if !(idx >= 0.0 && (idx as usize) < self.grid.len()) {
            return Err(Error::InvalidConfig(format!(
                "ln|η| = {} outside the stored trajectory",
                tau.re
            )));
        }
        let base = self.grid[idx as usize];
        let dist = (tau - base.tau).norm();
        if dist == 0.0 {
            return Ok(base);
        }
        let steps = (dist / self.continuation_step).ceil().max(1.0) as usize;
        Ok(*integrate_ss(&base, tau, steps)?.last())
    }

    /// `(φ+(η), φ-(η))`.
    pub fn phi(&self, eta: Complex64) -> Result<(Complex64, Complex64)> {
        if !(eta.re > 0.0) {
            return Err(Error::InvalidConfig(format!(
                "φ(η) needs Re η > 0, got {eta}"
            )));
        }
        let s = self.state_at(Complex64::new(eta.norm().ln(), eta.arg()))?;
        Ok((s.psi_plus - self.psi_inf.0, s.psi_minus - self.psi_inf.1))
    }
}

/// Euler-accelerated trapezoid rule on the Bromwich line
/// `Re η = a / (2ζ)`, with node spacing `π / ζ`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BromwichConfig {
    /// Discretization error is about `exp(-a)`.
    pub a: f64,
    /// Terms summed before the Euler tail.
    pub terms: usize,
    /// Binomial averaging order.
    pub euler_order: usize,
    /// Agreement required between `terms` and `2 * terms`.
    pub tolerance: f64,
    /// `η` at which `η φ(η)` is read for the `ζ = 0` limit.
    pub large_eta: f64,
}

impl Default for BromwichConfig {
    fn default() -> Self {
        Self {
            a: 18.4,
            terms: 15,
            euler_order: 11,
            tolerance: 1e-6,
            large_eta: 1e4,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BromwichPoint {
    pub zeta: f64,
    pub value: f64,
    /// Imaginary part of the quadrature; zero for a real transform pair.
    pub imag_residue: f64,
}

fn binomial_row(m: usize) -> Vec<f64> {
    let mut row = vec![1.0];
    for _ in 0..m {
        let mut next = vec![1.0; row.len() + 1];
        for j in 1..row.len() {
            next[j] = row[j - 1] + row[j];
        }
        row = next;
    }
    let scale = 0.5f64.powi(m as i32);
    row.into_iter().map(|c| c * scale).collect()
}

fn euler_sum(
    phi: &dyn Fn(Complex64) -> Result<Complex64>,
    zeta: f64,
    cfg: &BromwichConfig,
    terms: usize,
) -> Result<Complex64> {
    let base = cfg.a / (2.0 * zeta);
    let weight = (0.5 * cfg.a).exp() / zeta;
    let mut partial = 0.5 * phi(Complex64::new(base, 0.0))?;
    let mut sums = Vec::with_capacity(cfg.euler_order + 1);
    for k in 1..=terms + cfg.euler_order {
        let y = k as f64 * PI / zeta;
        let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
        // both halves of the line: the imaginary parts cancel for real pairs
        let pair = phi(Complex64::new(base, y))? + phi(Complex64::new(base, -y))?;
        partial += 0.5 * sign * pair;
        if k >= terms {
            sums.push(partial);
        }
    }
    let coeffs = binomial_row(cfg.euler_order);
    let accelerated: Complex64 = coeffs.iter().zip(&sums).map(|(c, s)| *c * s).sum();
    Ok(weight * accelerated)
}

/// Inverse Laplace transform `Φ(ζ) = (1/2πi) ∫ e^{ζη} φ(η) dη` on
/// `zeta_grid`. At `ζ = 0` the limit `lim η φ(η)` is used, extrapolated
/// from `η` and `2η`.
pub fn bromwich_invert(
    phi: impl Fn(Complex64) -> Result<Complex64>,
    cfg: &BromwichConfig,
    zeta_grid: &[f64],
) -> Result<Vec<BromwichPoint>> {
    zeta_grid
        .iter()
        .map(|&zeta| {
            if !(zeta >= 0.0 && zeta.is_finite()) {
                return Err(Error::InvalidConfig(format!(
                    "ζ = {zeta} must be finite and non-negative"
                )));
            }
            if zeta == 0.0 {
                let eta = cfg.large_eta;
                let g = |x: f64| -> Result<Complex64> { Ok(x * phi(Complex64::new(x, 0.0))?) };
                let v = 2.0 * g(2.0 * eta)? - g(eta)?;
                let check = g(2.0 * eta)?;
                if (v - check).norm() > cfg.tolerance.sqrt() {
                    return Err(Error::QuadratureNotConverged {
                        zeta,
                        change: (v - check).norm(),
                    });
                }
                return Ok(BromwichPoint {
                    zeta,
                    value: v.re,
                    imag_residue: v.im,
                });
            }
            let coarse = euler_sum(&phi, zeta, cfg, cfg.terms)?;
            let fine = euler_sum(&phi, zeta, cfg, 2 * cfg.terms)?;
            let change = (fine - coarse).norm();
            if !(change <= cfg.tolerance) {
                return Err(Error::QuadratureNotConverged { zeta, change });
            }
            Ok(BromwichPoint {
                zeta,
                value: fine.re,
                imag_residue: fine.im,
            })
        })
        .collect()
}

/// `Φ±` sampled on a ζ grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProfileGrid {
    pub zeta_values: Vec<f64>,
    pub phi_plus: Vec<f64>,
    pub phi_minus: Vec<f64>,
    /// Largest imaginary residue over both directions.
    pub max_imag_residue: f64,
}

impl ProfileGrid {
    /// `∫ ζ Φ±(ζ) dζ` by the trapezoid rule over the grid.
    pub fn first_moments(&self) -> (f64, f64) {
        let trap = |f: &[f64]| {
            self.zeta_values
                .windows(2)
                .zip(f.windows(2))
                .map(|(z, v)| 0.5 * (z[1] - z[0]) * (z[0] * v[0] + z[1] * v[1]))
                .sum::<f64>()
        };
        (trap(&self.phi_plus), trap(&self.phi_minus))
    }
}

/// Inverts both directions of a [`LaplaceProfile`].
pub fn profile_grid(
    profile: &LaplaceProfile,
    cfg: &BromwichConfig,
    zeta_grid: &[f64],
) -> Result<ProfileGrid> {
    let plus = bromwich_invert(|eta| Ok(profile.phi(eta)?.0), cfg, zeta_grid)?;
    let minus = bromwich_invert(|eta| Ok(profile.phi(eta)?.1), cfg, zeta_grid)?;
    let residue = plus
        .iter()
        .chain(&minus)
        .map(|p| p.imag_residue.abs())
        .fold(0.0, f64::max);
    Ok(ProfileGrid {
        zeta_values: zeta_grid.to_vec(),
        phi_plus: plus.iter().map(|p| p.value).collect(),
        phi_minus: minus.iter().map(|p| p.value).collect(),
        max_imag_residue: residue,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn fixed_point_is_stationary() {
        let d = rhs_ss(&SSState::fixed_point(c(0.0, 0.0)));
        assert!(d.iter().all(|x| x.norm() == 0.0));
    }

    #[test]
    fn rhs_at_center() {
        let s = SSState {
            psi_plus: c(0.0, 0.0),
            psi_minus: c(0.0, 0.0),
            h_plus: c(-0.5, 0.0),
            h_minus: c(-0.5, 0.0),
            tau: c(0.0, 0.0),
        };
        let d = rhs_ss(&s);
        assert_eq!(d, [c(-0.5, 0.0), c(-0.5, 0.0), c(0.0, 0.0), c(0.0, 0.0)]);
    }

    #[test]
    fn first_integral_is_stationary_for_any_state() {
        let s = SSState {
            psi_plus: c(0.3, -1.2),
            psi_minus: c(2.0, 0.7),
            h_plus: c(-0.4, 0.1),
            h_minus: c(1.5, 2.0),
            tau: c(0.0, 0.0),
        };
        let [dpp, dpm, dhp, dhm] = rhs_ss(&s);
        let de = dpp * s.psi_minus + s.psi_plus * dpm - dhp - dhm;
        assert!(de.norm() < 1e-15);
    }

    #[test]
    fn analytic_examples() {
        assert_eq!(analytic_symmetric(1.5, 1.5), (0.0, -0.5));
        let (psi, h) = analytic_symmetric(-40.0, 0.0);
        assert!((psi - 1.0).abs() < 1e-15 && h.abs() < 1e-15);
        let (psi, _) = analytic_symmetric(40.0, 0.0);
        assert!((psi + 1.0).abs() < 1e-15);
    }

    #[test]
    fn analytic_solves_the_system() {
        // central differences of the closed form against the right-hand side
        let e = 1e-5;
        for tau in [-3.0, -0.2, 0.0, 1.1, 4.0] {
            let s = SSState::symmetric(tau, 0.3);
            let (pa, ha) = analytic_symmetric(tau + e, 0.3);
            let (pb, hb) = analytic_symmetric(tau - e, 0.3);
            let d = rhs_ss(&s);
            assert!(((pa - pb) / (2.0 * e) - d[0].re).abs() < 1e-8);
            assert!(((ha - hb) / (2.0 * e) - d[2].re).abs() < 1e-8);
        }
    }

    #[test]
    fn symmetric_plane_is_invariant() {
        let start = SSState {
            h_plus: c(-1e-3, 2e-4),
            h_minus: c(-1e-3, 2e-4),
            ..SSState::fixed_point(c(0.0, 0.0))
        };
        let traj = integrate_ss(&start, c(15.0, 0.0), 3000).unwrap();
        for s in &traj.states {
            assert_eq!(s.psi_plus, s.psi_minus);
            assert_eq!(s.h_plus, s.h_minus);
        }
    }

    #[test]
    fn numeric_matches_closed_form() {
        let start = SSState::symmetric(-10.0, 0.0);
        let traj = integrate_ss(&start, c(10.0, 0.0), 10_000).unwrap();
        let worst = traj
            .states
            .iter()
            .map(|s| {
                let (psi, h) = analytic_symmetric(s.tau.re, 0.0);
                (s.psi_plus.re - psi).abs().max((s.h_plus.re - h).abs())
            })
            .fold(0.0, f64::max);
        assert!(worst < 1e-6, "{worst}");
        assert!(traj.energy_drift() < 1e-8);
        assert!((traj.energy[0].re - 1.0).abs() < 1e-12);
    }

    #[test]
    fn positive_imaginary_kicks_stay_bounded() {
        let kick = c(0.0, 1e-3);
        let shot = shoot((kick, kick), 0.0, 20.0, 10_000).unwrap();
        assert!(shot.trajectory.max_modulus() < 10.0);
        assert!(shot.trajectory.energy_drift() < 1e-8);
    }

    #[test]
    fn opposite_imaginary_kicks_diverge() {
        let r = shoot((c(0.0, 1e-3), c(0.0, -1e-3)), 0.0, 20.0, 10_000);
        assert!(matches!(r, Err(Error::Diverged { .. })), "{r:?}");
    }

    #[test]
    fn real_kick_reaches_the_hyperbola() {
        let kick = c(-1e-4, 0.0);
        let shot = shoot((kick, kick), -5.0, 30.0, 20_000).unwrap();
        let (p0, _) = shot.phi0();
        // ψ(+∞) = -sqrt(1 - 2ε) for a symmetric kick ε
        assert!(
            (p0.re - (1.0 + (1.0 + 2e-4f64).sqrt())).abs() < 1e-6,
            "{p0}"
        );
        let end = shot.trajectory.last();
        assert!((end.psi_plus * end.psi_minus - 1.0).norm() < 1e-3);
    }

    #[test]
    fn divergence_reports_tau() {
        let start = SSState {
            psi_plus: c(5.0, 0.0),
            psi_minus: c(5.0, 0.0),
            h_plus: c(5.0, 0.0),
            h_minus: c(5.0, 0.0),
            tau: c(0.0, 0.0),
        };
        match integrate_ss(&start, c(10.0, 0.0), 1000) {
            Err(Error::Diverged { tau_re, .. }) => assert!(tau_re > 0.0 && tau_re < 10.0),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn bromwich_exponential_pair() {
        let cfg = BromwichConfig::default();
        let grid: Vec<f64> = (0..=50).map(|k| k as f64 * 0.1).collect();
        let out = bromwich_invert(|eta| Ok(1.0 / (1.0 + eta)), &cfg, &grid).unwrap();
        for p in &out {
            assert!((p.value - (-p.zeta).exp()).abs() < 1e-6, "{p:?}");
            assert!(p.imag_residue.abs() < 1e-9);
        }
        assert!((out[10].value - 0.367879).abs() < 1e-6);
    }

    #[test]
    fn bromwich_ramp() {
        let cfg = BromwichConfig::default();
        let out =
            bromwich_invert(|eta| Ok(1.0 / (eta * eta)), &cfg, &[0.0, 0.5, 2.0, 4.0]).unwrap();
        for p in &out {
            assert!((p.value - p.zeta).abs() < 1e-6, "{p:?}");
        }
    }

    #[test]
    fn profile_of_symmetric_connection() {
        // ψ = -tanh(τ/2) gives φ(η) = 2 / (1 + η) and Φ(ζ) = 2 e^{-ζ}
        let traj = integrate_ss(&SSState::symmetric(-15.0, 0.0), c(45.0, 0.0), 30_000).unwrap();
        let profile = LaplaceProfile::new(&traj).unwrap();
        let eta = c(0.7, 1.3);
        let (p, m) = profile.phi(eta).unwrap();
        let exact = 2.0 / (1.0 + eta);
        assert!(
            (p - exact).norm() < 1e-7 && (m - exact).norm() < 1e-7,
            "{p}"
        );

        let grid: Vec<f64> = (0..=20).map(|k| k as f64 * 0.25).collect();
        let g = profile_grid(&profile, &BromwichConfig::default(), &grid).unwrap();
        for (z, v) in grid.iter().zip(&g.phi_plus) {
            assert!((v - 2.0 * (-z).exp()).abs() < 1e-5, "ζ = {z}: {v}");
            assert!(*v >= 0.0);
        }
        let (mp, _) = g.first_moments();
        assert!(mp.is_finite() && mp > 0.0);
    }
}
