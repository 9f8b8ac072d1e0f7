//! Analytic model of update versus communication time per sweep.

/// Per-sweep cost model for `M` workers on an `N^3` lattice.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScalingEstimate {
    /// Update time per sweep, `(N / M) N^2 dtu`.
    pub tau_u: f64,
    /// Communication time per sweep, `2 N^2 dtc`.
    pub tau_c: f64,
    /// Largest worker count with `tau_c < tau_u` for slab partitions.
    pub max_nodes_1d: u64,
    /// Same bound for cubic subdomains exchanging six faces.
    pub max_nodes_3d: u64,
}

/// `dtu` is the update time per site, `dtc` the transfer time per site.
///
/// Slabs: `2 N^2 dtc < (N / M) N^2 dtu` gives `M < N dtu / (2 dtc)`.
/// Cubes of side `N / M^(1/3)`: `6 (N / M^(1/3))^2 dtc < (N / M^(1/3))^3 dtu`
/// gives `M < (N dtu / (6 dtc))^3`.
pub fn scaling_estimate(dtu: f64, dtc: f64, n: usize, m: usize) -> ScalingEstimate {
    assert!(dtu > 0.0 && dtc > 0.0, "site times must be positive");
    assert!(m >= 1, "at least one worker");
    let nf = n as f64;
    let ratio = dtu / dtc;
    ScalingEstimate {
        tau_u: nf / m as f64 * nf * nf * dtu,
        tau_c: 2.0 * nf * nf * dtc,
        max_nodes_1d: (0.5 * ratio * nf).floor() as u64,
        max_nodes_3d: (nf * ratio / 6.0).powi(3).floor() as u64,
    }
}
