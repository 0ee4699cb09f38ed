//! Domain types shared by the simulator, the kinetic solver and the oracles.

use std::collections::BTreeMap;

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Rule for the direction of a freshly merged cluster.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum KernelKind {
    /// The merged cluster moves either way with probability 1/2.
    #[default]
    Random,
    /// The merged cluster inherits the direction of each parent with
    /// probability proportional to that parent's mass.
    Majority,
}

impl KernelKind {
    /// Probability that a cluster formed from a `plus_mass` cluster moving +1
    /// and a `minus_mass` cluster moving -1 moves +1.
    pub fn prob_plus(self, plus_mass: u64, minus_mass: u64) -> f64 {
        match self {
            KernelKind::Random => 0.5,
            KernelKind::Majority => plus_mass as f64 / (plus_mass + minus_mass) as f64,
        }
    }
}

impl std::str::FromStr for KernelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "random" => Ok(KernelKind::Random),
            "majority" => Ok(KernelKind::Majority),
            other => Err(Error::InvalidConfig(format!("unknown kernel `{other}`"))),
        }
    }
}

/// Per-direction cluster-size distribution `f+(l)`, `f-(l)` at one time.
///
/// Counts are reals: the kinetic description evolves ensemble averages. The
/// stochastic simulator produces integer-valued spectra through
/// [`ClusterSpectrum::from_counts`].
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ClusterSpectrum {
    f_plus: BTreeMap<u64, f64>,
    f_minus: BTreeMap<u64, f64>,
    time: f64,
}

fn validate_side(side: &BTreeMap<u64, f64>, name: &str) -> Result<()> {
    for (&size, &value) in side {
        if size == 0 {
            return Err(Error::InvalidConfig(format!("{name}: cluster size 0")));
        }
        if !(value.is_finite() && value >= 0.0) {
            return Err(Error::InvalidConfig(format!(
                "{name}: count {value} at size {size} is not a finite non-negative number"
            )));
        }
    }
    Ok(())
}

impl ClusterSpectrum {
    pub fn new(f_plus: BTreeMap<u64, f64>, f_minus: BTreeMap<u64, f64>, time: f64) -> Result<Self> {
        validate_side(&f_plus, "f+")?;
        validate_side(&f_minus, "f-")?;
        if !(time.is_finite() && time >= 0.0) {
            return Err(Error::InvalidConfig(format!(
                "time {time} must be finite and >= 0"
            )));
        }
        Ok(Self {
            f_plus,
            f_minus,
            time,
        })
    }

    /// Builds a spectrum from `(size, count)` pairs on each side.
    pub fn from_pairs(
        plus: impl IntoIterator<Item = (u64, f64)>,
        minus: impl IntoIterator<Item = (u64, f64)>,
    ) -> Result<Self> {
        let collect = |it: &mut dyn Iterator<Item = (u64, f64)>| {
            let mut side = BTreeMap::new();
            for (size, v) in it {
                *side.entry(size).or_insert(0.0) += v;
            }
            side
        };
        Self::new(
            collect(&mut plus.into_iter()),
            collect(&mut minus.into_iter()),
            0.0,
        )
    }

    /// Histogram of integer cluster masses for the two velocity classes.
    pub fn from_counts(
        plus_masses: impl IntoIterator<Item = u64>,
        minus_masses: impl IntoIterator<Item = u64>,
        time: f64,
    ) -> Self {
        let hist = |it: &mut dyn Iterator<Item = u64>| {
            let mut side = BTreeMap::new();
            for m in it {
                *side.entry(m).or_insert(0.0) += 1.0;
            }
            side
        };
        Self {
            f_plus: hist(&mut plus_masses.into_iter()),
            f_minus: hist(&mut minus_masses.into_iter()),
            time,
        }
    }

    /// All clusters of unit mass: `n_plus` moving +1, `n_minus` moving -1.
    pub fn monodisperse(n_plus: f64, n_minus: f64) -> Result<Self> {
        Self::from_pairs([(1, n_plus)], [(1, n_minus)])
    }

    pub fn f_plus(&self) -> &BTreeMap<u64, f64> {
        &self.f_plus
    }

    pub fn f_minus(&self) -> &BTreeMap<u64, f64> {
        &self.f_minus
    }

    pub fn time(&self) -> f64 {
        self.time
    }

    pub fn with_time(mut self, time: f64) -> Self {
        self.time = time;
        self
    }

    /// Largest size with a non-zero count on either side.
    pub fn max_size(&self) -> Option<u64> {
        self.support().max()
    }

    /// Sizes carrying a strictly positive count on either side.
    pub fn support(&self) -> impl Iterator<Item = u64> + '_ {
        self.f_plus
            .iter()
            .chain(self.f_minus.iter())
            .filter(|(_, &v)| v > 0.0)
            .map(|(&s, _)| s)
    }

    /// `a * self + b * other`, for non-negative weights.
    pub fn combine(&self, a: f64, other: &Self, b: f64) -> Result<Self> {
        let mix = |x: &BTreeMap<u64, f64>, y: &BTreeMap<u64, f64>| {
            let mut out: BTreeMap<u64, f64> = x.iter().map(|(&s, &v)| (s, a * v)).collect();
            for (&s, &v) in y {
                *out.entry(s).or_insert(0.0) += b * v;
            }
            out
        };
        Self::new(
            mix(&self.f_plus, &other.f_plus),
            mix(&self.f_minus, &other.f_minus),
            self.time,
        )
    }

    /// Dense per-direction arrays indexed by `size - 1`, of length `len`.
    pub fn to_dense(&self, len: usize) -> Result<(Vec<f64>, Vec<f64>)> {
        let fill = |side: &BTreeMap<u64, f64>| -> Result<Vec<f64>> {
            let mut out = vec![0.0; len];
            for (&s, &v) in side {
                if s as usize > len {
                    if v > 0.0 {
                        return Err(Error::UnsupportedSize {
                            size: s,
                            truncation: len,
                        });
                    }
                    continue;
                }
                out[s as usize - 1] = v;
            }
            Ok(out)
        };
        Ok((fill(&self.f_plus)?, fill(&self.f_minus)?))
    }
}

/// Zeroth, first and second moments of both sides of a spectrum.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Moments {
    pub n_plus: f64,
    pub n_minus: f64,
    pub m_plus: f64,
    pub m_minus: f64,
    pub m2_plus: f64,
    pub m2_minus: f64,
}

impl Moments {
    pub fn total_clusters(&self) -> f64 {
        self.n_plus + self.n_minus
    }

    pub fn total_mass(&self) -> f64 {
        self.m_plus + self.m_minus
    }
}

fn side_moments(side: &BTreeMap<u64, f64>) -> (f64, f64, f64) {
    side.iter().fold((0.0, 0.0, 0.0), |(n, m, m2), (&s, &v)| {
        let l = s as f64;
        (n + v, m + l * v, m2 + l * l * v)
    })
}

/// Cluster counts `N±`, particle counts `M±` and second moments `Σ l² f±`.
pub fn moments(spec: &ClusterSpectrum) -> Moments {
    let (n_plus, m_plus, m2_plus) = side_moments(&spec.f_plus);
    let (n_minus, m_minus, m2_minus) = side_moments(&spec.f_minus);
    Moments {
        n_plus,
        n_minus,
        m_plus,
        m_minus,
        m2_plus,
        m2_minus,
    }
}

pub(crate) fn gcd(mut a: u64, mut b: u64) -> u64 {
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a
}

/// Greatest common divisor of all occupied sizes. Sizes that are not
/// multiples of it never appear under either kernel.
pub fn gap_index(spec: &ClusterSpectrum) -> Result<u64> {
    spec.support().reduce(gcd).ok_or(Error::EmptySpectrum)
}

/// Seed of one realization: the stream is a pure function of the pair, so
/// realizations can run in any order or on any worker.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
pub struct SeedSpec {
    pub master_seed: u64,
    pub realization_index: u64,
}

impl SeedSpec {
    pub fn new(master_seed: u64, realization_index: u64) -> Self {
        Self {
            master_seed,
            realization_index,
        }
    }

    /// ChaCha8 keyed by the master seed, on stream `realization_index`.
    pub fn rng(&self) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.master_seed);
        rng.set_stream(self.realization_index);
        rng
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::Rng;

    #[test]
    fn monodisperse_moments() {
        let spec = ClusterSpectrum::from_pairs([(1, 3.0)], []).unwrap();
        let m = moments(&spec);
        assert_eq!((m.n_plus, m.m_plus, m.m2_plus), (3.0, 3.0, 3.0));
        assert_eq!((m.n_minus, m.m_minus, m.m2_minus), (0.0, 0.0, 0.0));
    }

    #[test]
    fn two_sizes() {
        let spec = ClusterSpectrum::from_pairs([(2, 1.0), (4, 1.0)], []).unwrap();
        let m = moments(&spec);
        assert_eq!((m.n_plus, m.m_plus, m.m2_plus), (2.0, 6.0, 20.0));
    }

    #[test]
    fn half_and_half_start_holds_all_particles() {
        let n0 = 1000.0;
        let m = moments(&ClusterSpectrum::monodisperse(n0 / 2.0, n0 / 2.0).unwrap());
        assert_eq!(m.total_mass(), n0);
    }

    #[test]
    fn empty_spectrum() {
        let spec = ClusterSpectrum::default();
        assert_eq!(moments(&spec), Moments::default());
        assert_eq!(gap_index(&spec), Err(Error::EmptySpectrum));
    }

    #[test]
    fn gap_examples() {
        let s = ClusterSpectrum::from_pairs([(2, 1.0)], [(4, 0.5)]).unwrap();
        assert_eq!(gap_index(&s).unwrap(), 2);
        let s = ClusterSpectrum::from_pairs([(1, 1.0), (77, 1.0)], []).unwrap();
        assert_eq!(gap_index(&s).unwrap(), 1);
        let s = ClusterSpectrum::from_pairs([(6, 1.0), (10, 1.0)], [(15, 1.0)]).unwrap();
        assert_eq!(gap_index(&s).unwrap(), 1);
    }

    #[test]
    fn zero_counts_are_not_support() {
        let s = ClusterSpectrum::from_pairs([(4, 1.0), (3, 0.0)], []).unwrap();
        assert_eq!(gap_index(&s).unwrap(), 4);
    }

    #[test]
    fn rejects_bad_entries() {
        assert!(ClusterSpectrum::from_pairs([(0, 1.0)], []).is_err());
        assert!(ClusterSpectrum::from_pairs([(1, -1.0)], []).is_err());
        assert!(ClusterSpectrum::from_pairs([(1, f64::NAN)], []).is_err());
    }

    #[test]
    fn seed_streams_are_reproducible_and_distinct() {
        let draw = |s: SeedSpec| {
            let mut rng = s.rng();
            (0..4).map(|_| rng.random::<u64>()).collect::<Vec<_>>()
        };
        assert_eq!(draw(SeedSpec::new(7, 3)), draw(SeedSpec::new(7, 3)));
        assert_ne!(draw(SeedSpec::new(7, 3)), draw(SeedSpec::new(7, 4)));
        assert_ne!(draw(SeedSpec::new(7, 3)), draw(SeedSpec::new(8, 3)));
    }

    fn spectrum_strategy() -> impl Strategy<Value = ClusterSpectrum> {
        let side = proptest::collection::btree_map(1u64..60, 0.0f64..10.0, 0..8);
        (side.clone(), side).prop_map(|(p, m)| ClusterSpectrum::new(p, m, 0.0).unwrap())
    }

    proptest! {
        #[test]
        fn moments_are_linear(a in 0.0f64..5.0, b in 0.0f64..5.0,
                              s1 in spectrum_strategy(), s2 in spectrum_strategy()) {
            let mix = moments(&s1.combine(a, &s2, b).unwrap());
            let (m1, m2) = (moments(&s1), moments(&s2));
            let close = |x: f64, y: f64| (x - y).abs() <= 1e-9 * (1.0 + x.abs());
            prop_assert!(close(mix.n_plus, a * m1.n_plus + b * m2.n_plus));
            prop_assert!(close(mix.m_minus, a * m1.m_minus + b * m2.m_minus));
            prop_assert!(close(mix.m2_plus, a * m1.m2_plus + b * m2.m2_plus));
            prop_assert!(close(mix.m2_minus, a * m1.m2_minus + b * m2.m2_minus));
        }

        #[test]
        fn moment_inequalities(s in spectrum_strategy()) {
            let m = moments(&s);
            prop_assert!(m.n_plus <= m.m_plus + 1e-12);
            prop_assert!(m.m_plus * m.m_plus <= m.n_plus * m.m2_plus * (1.0 + 1e-12) + 1e-12);
            prop_assert!(m.m_minus * m.m_minus <= m.n_minus * m.m2_minus * (1.0 + 1e-12) + 1e-12);
        }

        #[test]
        fn gap_divides_support_and_is_maximal(sizes in proptest::collection::vec(1u64..500, 1..6)) {
            let s = ClusterSpectrum::from_pairs(sizes.iter().map(|&l| (l, 1.0)), []).unwrap();
            let d = gap_index(&s).unwrap();
            prop_assert!(sizes.iter().all(|l| l % d == 0));
            let max = *sizes.iter().min().unwrap();
            for e in (d + 1)..=max {
                prop_assert!(sizes.iter().any(|l| l % e != 0));
            }
        }
    }
}
