//! Frequencies surviving both small-divisor families on a grid.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::iterate::{dot, l1, lattice_box};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FilterParams {
    pub gamma: f64,
    pub tau: f64,
    pub k_max: u32,
    pub iota: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MeasureReport {
    pub accepted: Vec<usize>,
    pub excluded_fraction: f64,
    /// per grid point, the largest gamma at which it is still accepted
    pub critical_gamma: Vec<f64>,
    pub grid_points: usize,
}

impl MeasureReport {
    pub fn is_accepted(&self, idx: usize) -> bool {
        self.accepted.binary_search(&idx).is_ok()
    }
}

/// Cell midpoints of [0,1]^n with m points per side.
pub fn midpoint_grid(n: usize, m: usize) -> Vec<Vec<f64>> {
    (0..m.pow(n as u32))
        .map(|mut idx| {
            (0..n)
                .map(|_| {
                    let v = (idx % m) as f64;
                    idx /= m;
                    (v + 0.5) / m as f64
                })
                .collect()
        })
        .collect()
}

/// Smallest ratio |divisor| / weight over both families; omega is excluded iff gamma exceeds it.
fn critical_gamma(lambdas: &[f64], omega: &[f64], ks: &[Vec<i32>], p: &FilterParams) -> f64 {
    let pw: Vec<f64> = (1..=lambdas.len()).map(|j| (j as f64).powf(p.iota)).collect();
    let mut g = f64::INFINITY;
    for k in ks {
        let nk = l1(k);
        let d = dot(k, omega);
        if nk > 0.0 {
            if d == 0.0 {
                return 0.0;
            }
            g = g.min(d.abs() * nk.powf(p.tau));
        }
        let kw = 1.0 + nk.powf(p.tau);
        for i in 0..lambdas.len() {
            for j in i + 1..lambdas.len() {
                let div = (lambdas[i] - lambdas[j] + d).abs();
                if div == 0.0 {
                    return 0.0;
                }
                g = g.min(div * kw / (pw[j] - pw[i]).abs());
            }
        }
    }
    g.min(f64::MAX)
}

pub fn resonance_filter(lambdas: &[f64], omega_grid: &[Vec<f64>], p: &FilterParams) -> Result<MeasureReport> {
    let n = omega_grid.first().map(|o| o.len()).ok_or_else(|| Error::InvalidInput("empty omega grid".into()))?;
    if omega_grid.iter().any(|o| o.len() != n) {
        return Err(Error::Dimension("omega grid points of different dimension".into()));
    }
    if !(p.iota > 1.0 && p.tau > n as f64 + 2.0 / (p.iota - 1.0)) {
        return Err(Error::InvalidInput(format!("need tau > n + 2/(iota - 1) = {}, got {}", n as f64 + 2.0 / (p.iota - 1.0), p.tau)));
    }
    if !(p.gamma >= 0.0) {
        return Err(Error::InvalidInput("gamma must be nonnegative".into()));
    }
    let ks = lattice_box(n, p.k_max);
    let critical: Vec<f64> = omega_grid.par_iter().map(|o| critical_gamma(lambdas, o, &ks, p)).collect();
    // excluded iff |divisor| < gamma * weight, plus exact zero divisors
    let accepted: Vec<usize> = (0..critical.len()).filter(|&i| critical[i] > 0.0 && p.gamma <= critical[i]).collect();
    if accepted.is_empty() {
        let best = critical.iter().cloned().fold(0.0, f64::max);
        return Err(Error::OverExclusion { suggested_gamma: 0.5 * best });
    }
    let excluded_fraction = 1.0 - accepted.len() as f64 / critical.len() as f64;
    Ok(MeasureReport { accepted, excluded_fraction, critical_gamma: critical, grid_points: omega_grid.len() })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn params(gamma: f64) -> FilterParams {
        FilterParams { gamma, tau: 8.0, k_max: 30, iota: 4.0 / 3.0 }
    }

    fn quartic(n: usize) -> Vec<f64> {
        (1..=n).map(|j| 1.376 * (j as f64 - 0.5).powf(4.0 / 3.0)).collect()
    }

    #[test]
    fn gamma_zero_excludes_nothing() {
        let r = resonance_filter(&quartic(10), &midpoint_grid(1, 2000), &params(0.0)).unwrap();
        assert_eq!(r.excluded_fraction, 0.0);
    }

    #[test]
    fn tau_too_small_rejected() {
        let p = FilterParams { tau: 6.9, ..params(0.01) };
        assert!(resonance_filter(&quartic(4), &midpoint_grid(1, 10), &p).is_err());
    }

    #[test]
    fn over_exclusion_suggests_gamma() {
        let err = resonance_filter(&quartic(6), &midpoint_grid(1, 50), &params(1e6)).unwrap_err();
        match err {
            Error::OverExclusion { suggested_gamma } => {
                let r = resonance_filter(&quartic(6), &midpoint_grid(1, 50), &params(suggested_gamma)).unwrap();
                assert!(!r.accepted.is_empty());
            }
            e => panic!("{e}"),
        }
    }

    #[test]
    fn small_instance_matches_intervals() {
        // first family removes |omega| < gamma / |k|^{tau+1}; second removes a ball around (lambda_j - lambda_i)/k
        let lambdas = [1.0, 2.0];
        let p = FilterParams { gamma: 0.05, tau: 8.0, k_max: 3, iota: 4.0 / 3.0 };
        let grid = midpoint_grid(1, 4001);
        let r = resonance_filter(&lambdas, &grid, &p).unwrap();
        let w = 2f64.powf(4.0 / 3.0) - 1.0;
        let mut intervals = Vec::new();
        for k in 1..=3i32 {
            let kf = k as f64;
            let rad = p.gamma / kf.powf(p.tau + 1.0);
            intervals.push((-rad, rad));
            for c in [1.0 / kf, -1.0 / kf] {
                let rad = p.gamma * w / ((1.0 + kf.powf(p.tau)) * kf);
                intervals.push((c - rad, c + rad));
            }
        }
        for (i, o) in grid.iter().enumerate() {
            let out = intervals.iter().any(|&(a, b)| o[0] > a && o[0] < b);
            assert_eq!(r.is_accepted(i), !out, "omega = {}", o[0]);
        }
    }

    proptest! {
        #[test]
        fn monotone_in_gamma(g in 1e-4f64..0.05) {
            let l = quartic(6);
            let grid = midpoint_grid(1, 400);
            let a = resonance_filter(&l, &grid, &params(g)).unwrap();
            let b = resonance_filter(&l, &grid, &params(g / 2.0)).unwrap();
            prop_assert!(b.excluded_fraction <= a.excluded_fraction);
            prop_assert!(a.accepted.iter().all(|i| b.is_accepted(*i)));
        }
    }
}
