//! Fixtures shared by the benchmarks.

use ringcoag::{ClusterSpectrum, InitMode, KernelKind, PowerSeries, SeedSpec, SimConfig};

/// Default ring protocol with `n0` monomers.
pub fn sim_config(n0: u32, kernel: KernelKind, seed: u64) -> SimConfig {
    SimConfig {
        n0,
        p: 0.1,
        p0: 0.5,
        init_mode: InitMode::Binomial,
        kernel,
        z_sample_times: Vec::new(),
        seed: SeedSpec::new(seed, 0),
    }
}

/// Half the unit mass moving each way, all monomers.
pub fn monomers() -> ClusterSpectrum {
    ClusterSpectrum::monodisperse(0.5, 0.5).expect("positive counts")
}

/// `F0(z) = z` truncated at `len`.
pub fn monomer_series(len: usize) -> PowerSeries {
    PowerSeries::monomial(1, 1.0, len)
}
