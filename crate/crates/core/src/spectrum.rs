//! Finite-difference eigenbasis of -d^2/dx^2 + V on [-L, L] with Dirichlet walls.

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numeric::{power_law_fit, trapezoid};
use crate::potential::Potential;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Grid {
    #[serde(rename = "L")]
    pub half_width: f64,
    pub n_pts: usize,
}

impl Grid {
    pub fn new(half_width: f64, n_pts: usize) -> Result<Self> {
        let g = Self { half_width, n_pts };
        g.validate()?;
        Ok(g)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.half_width.is_finite() && self.half_width > 0.0) {
            return Err(Error::InvalidInput(format!("L = {} must be positive", self.half_width)));
        }
        if self.n_pts < 3 || self.n_pts % 2 == 0 {
            return Err(Error::InvalidInput(format!("n_pts = {} must be odd and >= 3", self.n_pts)));
        }
        if self.n_pts > 50_000_001 {
            return Err(Error::InvalidInput("n_pts too large".into()));
        }
        Ok(())
    }

    /// Domain wide enough for the first `j` eigenfunctions, spacing at most `h`.
    pub fn auto(pot: &Potential, j: usize, h: f64) -> Result<Self> {
        let lambda = pot.eigenvalue_estimate(j.max(1));
        let half_width = auto_half_width(pot, lambda);
        let n = (2.0 * half_width / h).ceil() as usize + 1;
        Self::new(half_width, n | 1)
    }

    pub fn h(&self) -> f64 {
        2.0 * self.half_width / (self.n_pts - 1) as f64
    }

    pub fn x(&self, i: usize) -> f64 {
        -self.half_width + self.h() * i as f64
    }

    pub fn points(&self) -> Vec<f64> {
        (0..self.n_pts).map(|i| self.x(i)).collect()
    }

    pub fn center(&self) -> usize {
        (self.n_pts - 1) / 2
    }

    /// Same domain, spacing halved.
    pub fn refined(&self) -> Self {
        Self {
            half_width: self.half_width,
            n_pts: 2 * self.n_pts - 1,
        }
    }
}

/// L with V(0.9 L) >= 4 lambda and at least 24 e-folds of tunnelling before 0.95 L.
fn auto_half_width(pot: &Potential, lambda: f64) -> f64 {
    let root = |target: f64| {
        let mut lo = 0.0;
        let mut hi = 1.0;
        while pot.value(hi) < target {
            lo = hi;
            hi *= 2.0;
        }
        for _ in 0..100 {
            let mid = 0.5 * (lo + hi);
            if pot.value(mid) < target {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        hi
    };
    let by_height = root(4.0 * lambda) / 0.9;
    let x_turn = root(lambda);
    let mut x = x_turn;
    let mut decay = 0.0;
    let dx = 1e-3 * x_turn.max(0.1);
    while decay < 24.0 {
        let mid = x + 0.5 * dx;
        decay += (pot.value(mid) - lambda).max(0.0).sqrt() * dx;
        x += dx;
    }
    by_height.max(x / 0.95)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Parity {
    Even,
    Odd,
}

/// Eigenpairs with index origin 1, ascending.
#[derive(Debug, Clone)]
pub struct SpectralBasis {
    pub grid: Grid,
    pub lambdas: Vec<f64>,
    pub eigfuns: Vec<Vec<f64>>,
    pub parity: Vec<Parity>,
}

impl SpectralBasis {
    pub fn len(&self) -> usize {
        self.lambdas.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lambdas.is_empty()
    }

    pub fn lambda(&self, j: usize) -> f64 {
        self.lambdas[j - 1]
    }

    pub fn eigfun(&self, j: usize) -> &[f64] {
        &self.eigfuns[j - 1]
    }

    pub fn inner(&self, i: usize, j: usize) -> f64 {
        let prod: Vec<f64> = self.eigfun(i).iter().zip(self.eigfun(j)).map(|(a, b)| a * b).collect();
        trapezoid(&prod, self.grid.h())
    }

    /// max |G - I| over the Gram matrix.
    pub fn orthonormality_defect(&self) -> f64 {
        let n = self.len();
        (1..=n)
            .into_par_iter()
            .map(|i| {
                (i..=n)
                    .map(|j| (self.inner(i, j) - if i == j { 1.0 } else { 0.0 }).abs())
                    .fold(0.0, f64::max)
            })
            .reduce(|| 0.0, f64::max)
    }

    pub fn sign_changes(&self, j: usize) -> usize {
        sign_changes(self.eigfun(j))
    }

    pub fn write_eigenvalues_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        wr.write_record(["j", "lambda_j"])?;
        for (j, l) in self.lambdas.iter().enumerate() {
            wr.write_record([(j + 1).to_string(), format!("{l:.17e}")])?;
        }
        wr.flush()?;
        Ok(())
    }

    pub fn write_eigenfunctions_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        let mut header = vec!["x".to_string()];
        header.extend((1..=self.len()).map(|j| format!("h_{j}")));
        wr.write_record(&header)?;
        for i in 0..self.grid.n_pts {
            let mut row = vec![format!("{:.17e}", self.grid.x(i))];
            row.extend(self.eigfuns.iter().map(|f| format!("{:.17e}", f[i])));
            wr.write_record(&row)?;
        }
        wr.flush()?;
        Ok(())
    }
}

pub fn sign_changes(v: &[f64]) -> usize {
    let max = v.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    let mut last = 0.0;
    let mut count = 0;
    for &x in v {
        if x.abs() <= 1e-12 * max {
            continue;
        }
        if last != 0.0 && (x > 0.0) != (last > 0.0) {
            count += 1;
        }
        last = x;
    }
    count
}

/// Symmetric tridiagonal matrix with constant off-diagonal.
struct Tridiag {
    diag: Vec<f64>,
    off: f64,
}

impl Tridiag {
    /// Number of eigenvalues strictly below `e` (Sturm sequence).
    fn count_below(&self, e: f64) -> usize {
        let off2 = self.off * self.off;
        let mut q = 1.0;
        let mut count = 0;
        for (i, d) in self.diag.iter().enumerate() {
            q = if i == 0 { d - e } else { d - e - off2 / q };
            if q == 0.0 {
                q = -f64::EPSILON * (d.abs() + self.off.abs());
            }
            if q < 0.0 {
                count += 1;
            }
        }
        count
    }

    fn bounds(&self) -> (f64, f64) {
        let r = 2.0 * self.off.abs();
        let lo = self.diag.iter().cloned().fold(f64::INFINITY, f64::min) - r;
        let hi = self.diag.iter().cloned().fold(f64::NEG_INFINITY, f64::max) + r;
        (lo, hi)
    }

    /// The j-th smallest eigenvalue (1-based) by bisection.
    fn eigenvalue(&self, j: usize, lo: f64, hi: f64) -> f64 {
        let (mut lo, mut hi) = (lo, hi);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                break;
            }
            if self.count_below(mid) >= j {
                hi = mid;
            } else {
                lo = mid;
            }
            if hi - lo <= 2.0 * f64::EPSILON * lo.abs().max(hi.abs()) {
                break;
            }
        }
        0.5 * (lo + hi)
    }

    /// Solve (T - shift) x = b by Gaussian elimination with partial pivoting.
    fn shifted_solve(&self, shift: f64, b: &mut [f64]) {
        let n = self.diag.len();
        // rows hold (main, sup1, sup2) after elimination
        let mut u0 = vec![0.0; n];
        let mut u1 = vec![0.0; n];
        let mut u2 = vec![0.0; n];
        let tiny = f64::EPSILON * (shift.abs() + 4.0 * self.off.abs());
        let mut cur = (self.diag[0] - shift, if n > 1 { self.off } else { 0.0 }, 0.0);
        for i in 0..n {
            if i + 1 == n {
                u0[i] = if cur.0 == 0.0 { tiny } else { cur.0 };
                u1[i] = 0.0;
                u2[i] = 0.0;
                break;
            }
            let below = (self.off, self.diag[i + 1] - shift, if i + 2 < n { self.off } else { 0.0 });
            if below.0.abs() > cur.0.abs() {
                // swap rows i and i+1
                let piv = below;
                let other = cur;
                let m = other.0 / piv.0;
                u0[i] = piv.0;
                u1[i] = piv.1;
                u2[i] = piv.2;
                b.swap(i, i + 1);
                b[i + 1] -= m * b[i];
                cur = (other.1 - m * piv.1, other.2 - m * piv.2, 0.0);
            } else {
                let p = if cur.0 == 0.0 { tiny } else { cur.0 };
                let m = below.0 / p;
                u0[i] = p;
                u1[i] = cur.1;
                u2[i] = cur.2;
                b[i + 1] -= m * b[i];
                cur = (below.1 - m * cur.1, below.2 - m * cur.2, 0.0);
            }
        }
        for i in (0..n).rev() {
            let mut s = b[i];
            if i + 1 < n {
                s -= u1[i] * b[i + 1];
            }
            if i + 2 < n {
                s -= u2[i] * b[i + 2];
            }
            b[i] = s / u0[i];
        }
    }

    fn eigenvector(&self, lambda: f64) -> Vec<f64> {
        let n = self.diag.len();
        let mut v: Vec<f64> = (0..n).map(|i| 1.0 + 0.5 * ((i as f64) * 0.618_033_988_749_895).sin()).collect();
        for _ in 0..3 {
            self.shifted_solve(lambda, &mut v);
            let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            v.iter_mut().for_each(|x| *x /= norm);
        }
        v
    }
}

/// The lowest `j` eigenpairs of the discretized operator.
pub fn solve_spectrum(pot: &Potential, grid: &Grid, j: usize) -> Result<SpectralBasis> {
    grid.validate()?;
    if j == 0 {
        return Err(Error::InvalidInput("J must be positive".into()));
    }
    let h = grid.h();
    let m = grid.n_pts - 2;
    if j > m {
        return Err(Error::Truncation { found: m, wanted: j });
    }
    let t = Tridiag {
        diag: (1..=m).map(|i| 2.0 / (h * h) + pot.value(grid.x(i))).collect(),
        off: -1.0 / (h * h),
    };
    let l = grid.half_width;
    let found = t.count_below(0.5 * pot.value(l));
    if found < j {
        return Err(Error::Truncation { found, wanted: j });
    }
    let (lo, hi) = t.bounds();
    let lambdas: Vec<f64> = (1..=j).into_par_iter().map(|k| t.eigenvalue(k, lo, hi)).collect();
    let mut vecs: Vec<Vec<f64>> = lambdas.par_iter().map(|&lam| t.eigenvector(lam)).collect();

    // one modified Gram-Schmidt sweep removes the O(eps ||T|| / gap) leakage
    for k in 0..vecs.len() {
        let (done, rest) = vecs.split_at_mut(k);
        let v = &mut rest[0];
        for u in done.iter() {
            let d: f64 = u.iter().zip(v.iter()).map(|(a, b)| a * b).sum();
            v.iter_mut().zip(u).for_each(|(x, y)| *x -= d * y);
        }
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        v.iter_mut().for_each(|x| *x /= norm);
    }

    let c = grid.center();
    let mut eigfuns = Vec::with_capacity(j);
    let mut parity = Vec::with_capacity(j);
    for v in vecs {
        let mut f = Vec::with_capacity(grid.n_pts);
        f.push(0.0);
        f.extend(v);
        f.push(0.0);
        let norm = trapezoid(&f.iter().map(|x| x * x).collect::<Vec<_>>(), h).sqrt();
        f.iter_mut().for_each(|x| *x /= norm);
        let p = if (f[c + 1] - f[c - 1]).abs() <= (f[c + 1] + f[c - 1]).abs() {
            Parity::Even
        } else {
            Parity::Odd
        };
        let anchor = match p {
            Parity::Even => f[c],
            Parity::Odd => f[c + 1],
        };
        if anchor < 0.0 {
            f.iter_mut().for_each(|x| *x = -*x);
        }
        eigfuns.push(f);
        parity.push(p);
    }

    let outer = eigfuns
        .iter()
        .map(|f| {
            (0..grid.n_pts)
                .filter(|&i| grid.x(i).abs() >= 0.95 * l)
                .map(|i| f[i].abs())
                .fold(0.0, f64::max)
        })
        .fold(0.0, f64::max);
    if outer >= 1e-8 {
        let suggested = auto_half_width(pot, lambdas[j - 1]).max(1.25 * l);
        return Err(Error::DomainTooSmall {
            l,
            tail: outer,
            suggested_l: suggested,
        });
    }
    if pot.value(l) <= 2.0 * lambdas[j - 1] {
        return Err(Error::DomainTooSmall {
            l,
            tail: outer,
            suggested_l: auto_half_width(pot, lambdas[j - 1]),
        });
    }
    Ok(SpectralBasis {
        grid: *grid,
        lambdas,
        eigfuns,
        parity,
    })
}

/// Eigenpairs Richardson-extrapolated from grids h and h/2, sampled on the coarse grid.
pub fn solve_spectrum_extrapolated(pot: &Potential, grid: &Grid, j: usize) -> Result<SpectralBasis> {
    let coarse = solve_spectrum(pot, grid, j)?;
    let fine = solve_spectrum(pot, &grid.refined(), j)?;
    let h = grid.h();
    let lambdas = coarse
        .lambdas
        .iter()
        .zip(&fine.lambdas)
        .map(|(c, f)| (4.0 * f - c) / 3.0)
        .collect();
    let eigfuns = coarse
        .eigfuns
        .iter()
        .zip(&fine.eigfuns)
        .map(|(c, f)| {
            let mut v: Vec<f64> = c.iter().enumerate().map(|(i, ci)| (4.0 * f[2 * i] - ci) / 3.0).collect();
            let norm = trapezoid(&v.iter().map(|x| x * x).collect::<Vec<_>>(), h).sqrt();
            v.iter_mut().for_each(|x| *x /= norm);
            v
        })
        .collect();
    Ok(SpectralBasis {
        grid: *grid,
        lambdas,
        eigfuns,
        parity: coarse.parity,
    })
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct WeylFit {
    pub exponent_fit: f64,
    pub c_fit: f64,
}

/// Power-law fit of lambda_j against j over `j_lo..=j_hi`.
pub fn weyl_fit(basis: &SpectralBasis, j_lo: usize, j_hi: usize) -> Result<WeylFit> {
    if j_lo < 1 || j_hi > basis.len() || j_hi < j_lo + 9 {
        return Err(Error::InvalidInput(format!(
            "index window [{j_lo}, {j_hi}] must lie in 1..={} and hold 10 points",
            basis.len()
        )));
    }
    weyl_fit_values(&basis.lambdas[j_lo - 1..j_hi], j_lo)
}

/// Same fit on a raw slice whose first entry has index `first`.
pub fn weyl_fit_values(lambdas: &[f64], first: usize) -> Result<WeylFit> {
    if lambdas.len() < 10 || lambdas.iter().any(|l| !(*l > 0.0)) {
        return Err(Error::InvalidInput("need 10 positive eigenvalues".into()));
    }
    let js: Vec<f64> = (0..lambdas.len()).map(|k| (first + k) as f64).collect();
    let (exponent_fit, c_fit) = power_law_fit(&js, lambdas);
    Ok(WeylFit { exponent_fit, c_fit })
}
