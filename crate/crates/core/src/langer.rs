//! Langer turning-point approximation of high eigenfunctions.

use std::f64::consts::PI;
use std::io::Write;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::numeric::{power_law_fit, trapezoid, GaussRule};
use crate::potential::Potential;
use crate::special::{scaled_on_ray, Ray};
use crate::spectrum::{Parity, SpectralBasis};

const PANEL_ORDER: usize = 12;

/// Which side of the turning point an integral lives on.
#[derive(Clone, Copy, PartialEq)]
enum Side {
    Left,
    Right,
}

/// int sqrt(|lambda - V|) over the u-interval [u0, u1], t = X -/+ u^2.
fn phase_piece(pot: &Potential, lambda: f64, x_turn: f64, side: Side, u0: f64, u1: f64, rule: &GaussRule) -> Result<f64> {
    let bad = std::cell::Cell::new(None);
    let val = rule.integrate(u0, u1, |u| {
        let (t, d) = match side {
            Side::Left => {
                let t = x_turn - u * u;
                (t, lambda - pot.value(t))
            }
            Side::Right => {
                let t = x_turn + u * u;
                (t, pot.value(t) - lambda)
            }
        };
        if d < -1e-10 * lambda.abs().max(1.0) {
            bad.set(Some(t));
        }
        2.0 * u * d.max(0.0).sqrt()
    });
    match bad.get() {
        Some(_) => {
            let (a, b) = match side {
                Side::Left => (x_turn - u1 * u1, x_turn - u0 * u0),
                Side::Right => (x_turn + u0 * u0, x_turn + u1 * u1),
            };
            Err(Error::Branch { a, b })
        }
        None => Ok(val),
    }
}

/// zeta(x) = int_X^x sqrt(lambda - V): negative real left of X, positive imaginary right of it.
pub fn zeta(pot: &Potential, lambda: f64, x_turn: f64, x: f64) -> Result<Complex64> {
    if !(x >= 0.0) {
        return Err(Error::InvalidInput(format!("zeta needs x >= 0, got {x}")));
    }
    if x == x_turn {
        return Ok(Complex64::new(0.0, 0.0));
    }
    let rule = GaussRule::new(PANEL_ORDER);
    let side = if x < x_turn { Side::Left } else { Side::Right };
    let umax = (x - x_turn).abs().sqrt();
    let panels = 16;
    let mut q = 0.0;
    for p in 0..panels {
        let u0 = umax * p as f64 / panels as f64;
        let u1 = umax * (p + 1) as f64 / panels as f64;
        q += phase_piece(pot, lambda, x_turn, side, u0, u1, &rule)?;
    }
    Ok(match side {
        Side::Left => Complex64::new(-q, 0.0),
        Side::Right => Complex64::new(0.0, q),
    })
}

/// zeta at every point of a sorted nonnegative list, accumulated outward from X.
pub fn zeta_profile(pot: &Potential, lambda: f64, x_turn: f64, xs: &[f64]) -> Result<Vec<Complex64>> {
    if xs.windows(2).any(|w| w[0] > w[1]) || xs.first().is_some_and(|x| *x < 0.0) {
        return Err(Error::InvalidInput("zeta_profile needs sorted nonnegative points".into()));
    }
    let rule = GaussRule::new(PANEL_ORDER);
    let mut out = vec![Complex64::new(0.0, 0.0); xs.len()];
    let split = xs.partition_point(|&x| x < x_turn);
    let mut acc = 0.0;
    let mut u_prev = 0.0;
    for k in (0..split).rev() {
        let u = (x_turn - xs[k]).sqrt();
        acc += phase_piece(pot, lambda, x_turn, Side::Left, u_prev, u, &rule)?;
        out[k] = Complex64::new(-acc, 0.0);
        u_prev = u;
    }
    acc = 0.0;
    u_prev = 0.0;
    for k in split..xs.len() {
        let u = (xs[k] - x_turn).sqrt();
        acc += phase_piece(pot, lambda, x_turn, Side::Right, u_prev, u, &rule)?;
        out[k] = Complex64::new(0.0, acc);
        u_prev = u;
    }
    Ok(out)
}

/// Turning point data for eigenvalue index n on a basis grid.
#[derive(Debug, Clone)]
pub struct TurningPointFrame {
    pub n: usize,
    pub lambda: f64,
    pub x_turn: f64,
    /// zeta at the grid nodes with x >= 0, starting at x = 0
    pub zeta: Vec<Complex64>,
}

impl TurningPointFrame {
    pub fn new(pot: &Potential, basis: &SpectralBasis, n: usize) -> Result<Self> {
        if n == 0 || n > basis.len() {
            return Err(Error::InvalidInput(format!("index {n} outside basis 1..={}", basis.len())));
        }
        let lambda = basis.lambda(n);
        let n0 = first_index_above_threshold(pot, basis);
        if lambda < pot.v_threshold() {
            return Err(Error::UnsupportedIndex { n, n0 });
        }
        let x_turn = pot.turning_point(lambda)?;
        let g = basis.grid;
        let xs: Vec<f64> = (g.center()..g.n_pts).map(|i| g.x(i)).collect();
        let zeta = zeta_profile(pot, lambda, x_turn, &xs)?;
        Ok(Self { n, lambda, x_turn, zeta })
    }

    /// Half-width X^{-1/3} of the excluded turning window.
    pub fn window(&self) -> f64 {
        self.x_turn.powf(-1.0 / 3.0)
    }
}

/// Smallest n with lambda_n >= V(R), or basis length + 1 if none.
pub fn first_index_above_threshold(pot: &Potential, basis: &SpectralBasis) -> usize {
    let v_r = pot.v_threshold();
    basis.lambdas.iter().position(|&l| l >= v_r).map_or(basis.len() + 1, |k| k + 1)
}

#[derive(Debug, Clone, Serialize)]
pub struct LangerApprox {
    /// psi_1 on the full grid, real, L2-normalized, sign matched to h_n
    pub psi: Vec<f64>,
    /// |C_n|
    pub c_n: f64,
    /// |C_n| / X_n^{(l-1)/2}
    pub c_n_ratio: f64,
    /// max |Im| / max |psi| before taking the real part
    pub imag_residue: f64,
    /// sup outside the turning window of |h_n - psi_1| / ||h_n||_inf
    pub error: f64,
}

/// Langer approximation psi_1 for the frame's eigenvalue, compared with h_n.
pub fn langer_eigenfunction(frame: &TurningPointFrame, pot: &Potential, basis: &SpectralBasis) -> Result<LangerApprox> {
    let g = basis.grid;
    let c = g.center();
    let lambda = frame.lambda;
    let x_turn = frame.x_turn;
    // (lambda - V)^{-1/4} S(zeta) e^{2 pi i / 3}; real on both sides of X
    let rot = Complex64::from_polar(1.0, 2.0 * PI / 3.0);
    let mut half: Vec<Option<Complex64>> = (c..g.n_pts)
        .zip(&frame.zeta)
        .map(|(i, z)| {
            let x = g.x(i);
            let d = lambda - pot.value(x);
            if d.abs() <= 1e-9 * lambda || z.norm() == 0.0 {
                return None;
            }
            let v = if x < x_turn {
                d.powf(-0.25) * scaled_on_ray(Ray::Negative(z.re.abs()))
            } else {
                Complex64::from_polar((-d).powf(-0.25), -0.25 * PI) * scaled_on_ray(Ray::PositiveImaginary(z.im))
            };
            Some(v * rot)
        })
        .collect();
    for k in 0..half.len() {
        if half[k].is_none() {
            let left = (0..k).rev().find_map(|j| half[j]);
            let right = (k + 1..half.len()).find_map(|j| half[j]);
            half[k] = Some(match (left, right) {
                (Some(a), Some(b)) => 0.5 * (a + b),
                (Some(a), None) | (None, Some(a)) => a,
                (None, None) => Complex64::new(0.0, 0.0),
            });
        }
    }
    let half: Vec<Complex64> = half.into_iter().map(|v| v.unwrap_or_default()).collect();
    let max_abs = half.iter().map(|v| v.norm()).fold(0.0, f64::max);
    let imag_residue = half
        .iter()
        .enumerate()
        .filter(|(k, _)| g.x(c + k) < x_turn)
        .map(|(_, v)| v.im.abs())
        .fold(0.0, f64::max)
        / max_abs;

    let parity = basis.parity[frame.n - 1];
    let mut psi = vec![0.0; g.n_pts];
    for (k, v) in half.iter().enumerate() {
        psi[c + k] = v.re;
        psi[c - k] = match parity {
            Parity::Even => v.re,
            Parity::Odd => -v.re,
        };
    }
    if parity == Parity::Odd {
        psi[c] = 0.0;
    }
    let norm = trapezoid(&psi.iter().map(|p| p * p).collect::<Vec<_>>(), g.h()).sqrt();
    let h_n = basis.eigfun(frame.n);
    let overlap: f64 = psi.iter().zip(h_n).map(|(a, b)| a * b).sum();
    let scale = overlap.signum() / norm;
    psi.iter_mut().for_each(|p| *p *= scale);
    let c_n = 1.0 / norm;

    let window = frame.window();
    let h_max = h_n.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let error = (0..g.n_pts)
        .filter(|&i| (g.x(i).abs() - x_turn).abs() > window)
        .map(|i| (h_n[i] - psi[i]).abs())
        .fold(0.0, f64::max)
        / h_max;
    Ok(LangerApprox {
        psi,
        c_n,
        c_n_ratio: c_n / x_turn.powf(0.5 * (pot.ell() - 1.0)),
        imag_residue,
        error,
    })
}

/// Tightest constants in the two-sided turning-point bounds on lambda - V and zeta.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct TurningBounds {
    pub a1: f64,
    pub a2: f64,
    #[serde(rename = "A1")]
    pub big_a1: f64,
    #[serde(rename = "A2")]
    pub big_a2: f64,
    /// first x where a bound would need a nonpositive constant
    pub violation: Option<f64>,
}

impl TurningBounds {
    /// Whether constants with 0 < a1 <= 1 <= a2 (and likewise for A) exist after rescaling.
    pub fn normalizable(&self) -> bool {
        self.violation.is_none() && self.a1 > 0.0 && self.big_a1 > 0.0 && self.a2.is_finite() && self.big_a2.is_finite()
    }
}

/// Fit the constants on x in [0, X) and (X, 2X].
pub fn verify_turning_bounds(frame: &TurningPointFrame, pot: &Potential) -> Result<TurningBounds> {
    let x_turn = frame.x_turn;
    let lambda = frame.lambda;
    let ell = pot.ell();
    let m = 400;
    let left: Vec<f64> = (0..m).map(|k| x_turn * k as f64 / m as f64).collect();
    let right: Vec<f64> = (1..=m).map(|k| x_turn * (1.0 + k as f64 / m as f64)).collect();
    let s1 = x_turn.powf(2.0 * ell - 1.0);
    let s2 = x_turn.powf(ell - 0.5);
    let mut b = TurningBounds {
        a1: f64::INFINITY,
        a2: 0.0,
        big_a1: f64::INFINITY,
        big_a2: 0.0,
        violation: None,
    };
    let flag = |x: f64, r: f64, b: &mut TurningBounds| {
        if !(r > 0.0) && b.violation.is_none() {
            b.violation = Some(x);
        }
    };
    for &x in &left {
        let r = (lambda - pot.value(x)) / (s1 * (x_turn - x));
        flag(x, r, &mut b);
        b.a1 = b.a1.min(r);
        b.a2 = b.a2.max(r);
    }
    for &x in &right {
        let r = (pot.value(x) - lambda) / (s1 * (x - x_turn));
        flag(x, r, &mut b);
        b.a1 = b.a1.min(r);
    }
    let cut = x_turn - frame.window();
    let zl: Vec<f64> = left.iter().cloned().filter(|&x| x <= cut).collect();
    if !zl.is_empty() {
        let z = zeta_profile(pot, lambda, x_turn, &zl)?;
        for (x, zv) in zl.iter().zip(&z) {
            let r = -zv.re / (s2 * (x_turn - x).powf(1.5));
            flag(*x, r, &mut b);
            b.big_a1 = b.big_a1.min(r);
            b.big_a2 = b.big_a2.max(r);
        }
    }
    let z = zeta_profile(pot, lambda, x_turn, &right)?;
    for (x, zv) in right.iter().zip(&z) {
        let r = zv.im / (s2 * (x - x_turn).powf(1.5));
        flag(*x, r, &mut b);
        b.big_a1 = b.big_a1.min(r);
    }
    Ok(b)
}

/// Largest relative spread max/min - 1 of each constant across several frames.
pub fn bounds_spread(all: &[TurningBounds]) -> f64 {
    let spread = |f: &dyn Fn(&TurningBounds) -> f64| {
        let lo = all.iter().map(f).fold(f64::INFINITY, f64::min);
        let hi = all.iter().map(f).fold(0.0, f64::max);
        hi / lo - 1.0
    };
    [
        spread(&|b| b.a1),
        spread(&|b| b.a2),
        spread(&|b| b.big_a1),
        spread(&|b| b.big_a2),
    ]
    .into_iter()
    .fold(0.0, f64::max)
}

#[derive(Debug, Clone, Serialize)]
pub struct LangerRow {
    pub n: usize,
    #[serde(rename = "X_n")]
    pub x_turn: f64,
    pub e_n: f64,
    pub a1: f64,
    pub a2: f64,
    #[serde(rename = "A1")]
    pub big_a1: f64,
    #[serde(rename = "A2")]
    pub big_a2: f64,
    pub c_n_ratio: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct LangerLaw {
    pub rows: Vec<LangerRow>,
    /// log-log slope of e_n against X_n
    pub slope: f64,
}

impl LangerLaw {
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        wr.write_record(["n", "X_n", "e_n", "a1", "a2", "A1", "A2"])?;
        for r in &self.rows {
            wr.write_record([
                r.n.to_string(),
                format!("{:.12e}", r.x_turn),
                format!("{:.12e}", r.e_n),
                format!("{:.12e}", r.a1),
                format!("{:.12e}", r.a2),
                format!("{:.12e}", r.big_a1),
                format!("{:.12e}", r.big_a2),
            ])?;
        }
        wr.flush()?;
        Ok(())
    }
}

/// Langer error and turning-point constants for each n, with the fitted decay slope.
pub fn langer_error_law(pot: &Potential, basis: &SpectralBasis, ns: &[usize]) -> Result<LangerLaw> {
    if ns.len() < 2 {
        return Err(Error::InvalidInput("need at least two indices".into()));
    }
    let rows: Vec<LangerRow> = ns
        .par_iter()
        .map(|&n| {
            let frame = TurningPointFrame::new(pot, basis, n)?;
            let approx = langer_eigenfunction(&frame, pot, basis)?;
            let b = verify_turning_bounds(&frame, pot)?;
            Ok(LangerRow {
                n,
                x_turn: frame.x_turn,
                e_n: approx.error,
                a1: b.a1,
                a2: b.a2,
                big_a1: b.big_a1,
                big_a2: b.big_a2,
                c_n_ratio: approx.c_n_ratio,
            })
        })
        .collect::<Result<_>>()?;
    let xs: Vec<f64> = rows.iter().map(|r| r.x_turn).collect();
    let es: Vec<f64> = rows.iter().map(|r| r.e_n).collect();
    let (slope, _) = power_law_fit(&xs, &es);
    Ok(LangerLaw { rows, slope })
}
