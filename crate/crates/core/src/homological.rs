//! Small-divisor equations on the torus and the generator of one reduction step.

use nalgebra::DMatrix;
use num_complex::Complex64;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::matclass::{max_abs, qp_product, ClassNorm, ModeSet, QPMatrix, TorusFunction};

pub const DEFAULT_DIVISOR_FLOOR: f64 = 1e-10;

/// (-i d/dt + E1 + E2h(omega t)) chi = b, on a truncated Fourier box.
#[derive(Debug, Clone)]
pub struct HomologicalProblem {
    pub omega: Vec<f64>,
    pub e1: f64,
    pub e2h: TorusFunction,
    pub b: TorusFunction,
    pub divisor_floor: f64,
}

#[derive(Debug, Clone)]
pub struct ScalarSolution {
    pub chi: TorusFunction,
    /// max |Galerkin residual| over the box
    pub galerkin_residual: f64,
    /// max over real phi samples of the pointwise residual, truncation tail included
    pub sampled_residual: f64,
}

/// Deterministic real sample points on T^n.
pub fn torus_samples(n_freq: usize, count: usize) -> Vec<Vec<f64>> {
    // Kronecker sequence with square roots of primes; equispaced in one dimension
    const ROOTS: [f64; 6] = [1.0, 0.414_213_562_373_095, 0.732_050_807_568_877, 0.236_067_977_499_79, 0.645_751_311_064_591, 0.316_624_790_355_4];
    (0..count)
        .map(|k| {
            (0..n_freq)
                .map(|d| {
                    let frac = if d == 0 { k as f64 / count as f64 } else { (k as f64 * ROOTS[d % ROOTS.len()]).fract() };
                    std::f64::consts::TAU * frac
                })
                .collect()
        })
        .collect()
}

impl HomologicalProblem {
    pub fn modes(&self) -> ModeSet {
        self.b.modes
    }

    pub fn divisor(&self, idx: usize) -> f64 {
        self.modes().dot(idx, &self.omega) + self.e1
    }

    /// Smallest |<l, omega> + E1| over the box and the mode where it occurs.
    pub fn min_divisor(&self) -> (f64, Vec<i32>) {
        self.min_divisor_where(|_| true)
    }

    fn min_divisor_where(&self, keep: impl Fn(usize) -> bool) -> (f64, Vec<i32>) {
        let m = self.modes();
        (0..m.len())
            .filter(|&i| keep(i))
            .map(|i| (self.divisor(i).abs(), i))
            .min_by(|a, b| a.0.total_cmp(&b.0))
            .map(|(d, i)| (d, m.mode(i)))
            .unwrap_or((f64::INFINITY, Vec::new()))
    }

    fn validate(&self) -> Result<()> {
        if self.omega.len() != self.modes().n_freq || self.e2h.modes.n_freq != self.modes().n_freq {
            return Err(Error::Dimension(format!(
                "omega has {} components, torus has {}",
                self.omega.len(),
                self.modes().n_freq
            )));
        }
        // with a constant coefficient the modes decouple, and only modes carrying data matter
        let decoupled = is_zero(&self.e2h);
        let (d, l) = self.min_divisor_where(|i| !decoupled || self.b.coeffs[i] != Complex64::new(0.0, 0.0));
        if d < self.divisor_floor {
            return Err(Error::ResonantDivisor { mode: l, divisor: d });
        }
        Ok(())
    }

    fn pointwise_residual(&self, chi: &TorusFunction) -> f64 {
        let deriv = chi.time_derivative(&self.omega);
        torus_samples(self.modes().n_freq, 32)
            .iter()
            .map(|phi| {
                let lhs = Complex64::new(0.0, -1.0) * deriv.at(phi) + (self.e1 + self.e2h.at(phi)) * chi.at(phi);
                (lhs - self.b.at(phi)).norm()
            })
            .fold(0.0, f64::max)
    }
}

fn is_zero(f: &TorusFunction) -> bool {
    f.coeffs.iter().all(|c| *c == Complex64::new(0.0, 0.0))
}

/// Exact Galerkin solve on the box, or direct division when E2h vanishes.
pub fn solve_scalar(p: &HomologicalProblem) -> Result<ScalarSolution> {
    p.validate()?;
    let m = p.modes();
    let size = m.len();
    if is_zero(&p.e2h) {
        let coeffs = (0..size)
            .map(|i| if p.b.coeffs[i] == Complex64::new(0.0, 0.0) { p.b.coeffs[i] } else { p.b.coeffs[i] / p.divisor(i) })
            .collect();
        let chi = TorusFunction { modes: m, coeffs };
        return Ok(ScalarSolution { sampled_residual: p.pointwise_residual(&chi), galerkin_residual: 0.0, chi });
    }
    let modes: Vec<Vec<i32>> = (0..size).map(|i| m.mode(i)).collect();
    let mat = DMatrix::from_fn(size, size, |r, c| {
        let diff: Vec<i32> = modes[r].iter().zip(&modes[c]).map(|(a, b)| a - b).collect();
        let mut v = p.e2h.coeff(&diff);
        if r == c {
            v += p.divisor(r);
        }
        v
    });
    let rhs = DMatrix::from_column_slice(size, 1, &p.b.coeffs);
    let sol = mat.clone().lu().solve(&rhs).ok_or(Error::Singular)?;
    if sol.iter().any(|v| !v.is_finite()) {
        return Err(Error::Singular);
    }
    let galerkin_residual = max_abs(&(&mat * &sol - &rhs));
    let chi = TorusFunction { modes: m, coeffs: sol.iter().cloned().collect() };
    Ok(ScalarSolution { sampled_residual: p.pointwise_residual(&chi), galerkin_residual, chi })
}

/// A^- = diag(lambda_i + mu_i(phi)) with mu_i of zero mean.
#[derive(Debug, Clone)]
pub struct NormalForm {
    pub lambdas: Vec<f64>,
    pub mus: Vec<TorusFunction>,
}

impl NormalForm {
    pub fn constant(lambdas: Vec<f64>, modes: ModeSet) -> Self {
        let mus = vec![TorusFunction::zeros(modes); lambdas.len()];
        Self { lambdas, mus }
    }

    pub fn dim(&self) -> usize {
        self.lambdas.len()
    }

    pub fn as_matrix(&self, modes: ModeSet) -> QPMatrix {
        let mut q = QPMatrix::zeros(self.dim(), modes);
        for (i, l) in self.lambdas.iter().enumerate() {
            q.blocks[modes.zero()][(i, i)] += Complex64::new(*l, 0.0);
            for (k, c) in self.mus[i].coeffs.iter().enumerate() {
                if let Some(idx) = modes.index(&self.mus[i].modes.mode(k)) {
                    q.blocks[idx][(i, i)] += c;
                }
            }
        }
        q
    }
}

#[derive(Debug, Clone)]
pub struct GeneratorOptions {
    pub divisor_floor: f64,
    /// divisors below floor * warn_factor are reported as warnings
    pub warn_factor: f64,
    /// class parameters used for the order assumption E1^theta >= C0 E2
    pub beta: f64,
    pub iota: f64,
    pub s: f64,
}

impl Default for GeneratorOptions {
    fn default() -> Self {
        Self { divisor_floor: DEFAULT_DIVISOR_FLOOR, warn_factor: 1e4, beta: 0.0, iota: 4.0 / 3.0, s: 0.0 }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct DivisorWarning {
    pub i: usize,
    pub j: usize,
    pub mode: Vec<i32>,
    pub divisor: f64,
    /// 1 / divisor, the amplification of that mode
    pub conditioning: f64,
}

#[derive(Debug, Clone)]
pub struct GeneratorSolution {
    pub b: QPMatrix,
    /// max entry of (B + B^*) / 2 before projection
    pub projection_residual: f64,
    /// strip norm of [A, B] - i dB/dt + P - diag P after projection
    pub homological_residual: f64,
    pub min_divisor: f64,
    /// 2 beta / (iota - 1)
    pub theta: f64,
    /// min over pairs of |lambda_i - lambda_j|^theta / (||mu_i - mu_j||_s + 1)
    pub c0: f64,
    pub warnings: Vec<DivisorWarning>,
}

/// Solve [A, B] - i dB/dt + (P - diag P) = 0 for B with zero diagonal.
pub fn solve_generator(a: &NormalForm, p: &QPMatrix, omega: &[f64], opts: &GeneratorOptions) -> Result<GeneratorSolution> {
    let n = a.dim();
    let modes = p.modes;
    if p.dim != n || a.mus.iter().any(|m| m.modes != modes) || omega.len() != modes.n_freq {
        return Err(Error::Dimension(format!("normal form of size {n} vs perturbation of size {}", p.dim)));
    }
    for w in a.lambdas.windows(2) {
        if w[0] == w[1] {
            return Err(Error::InvalidInput(format!("repeated eigenvalue {}", w[0])));
        }
    }
    let pairs: Vec<(usize, usize)> = (0..n).flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j))).collect();

    let mut resonant = Vec::new();
    let mut warnings = Vec::new();
    let mut min_div = f64::INFINITY;
    for &(i, j) in &pairs {
        let e1 = a.lambdas[i] - a.lambdas[j];
        for k in 0..modes.len() {
            let d = (modes.dot(k, omega) + e1).abs();
            min_div = min_div.min(d);
            if d < opts.divisor_floor {
                resonant.push((i + 1, j + 1, modes.mode(k)));
            } else if d < opts.divisor_floor * opts.warn_factor && i < j {
                warnings.push(DivisorWarning { i: i + 1, j: j + 1, mode: modes.mode(k), divisor: d, conditioning: 1.0 / d });
            }
        }
    }
    if !resonant.is_empty() {
        return Err(Error::Resonance(resonant));
    }

    let solved: Vec<(usize, usize, TorusFunction)> = pairs
        .par_iter()
        .map(|&(i, j)| {
            let rhs = p.entry(i, j);
            let chi = if rhs.coeffs.iter().all(|c| c.norm() == 0.0) {
                TorusFunction::zeros(modes)
            } else {
                let prob = HomologicalProblem {
                    omega: omega.to_vec(),
                    e1: a.lambdas[i] - a.lambdas[j],
                    e2h: a.mus[i].sub(&a.mus[j]),
                    b: TorusFunction { modes, coeffs: rhs.coeffs.iter().map(|c| -c).collect() },
                    divisor_floor: opts.divisor_floor,
                };
                solve_scalar(&prob)?.chi
            };
            Ok((i, j, chi))
        })
        .collect::<Result<_>>()?;

    let mut raw = QPMatrix::zeros(n, modes);
    for (i, j, chi) in solved {
        for (k, c) in chi.coeffs.into_iter().enumerate() {
            raw.blocks[k][(i, j)] = c;
        }
    }
    let projection_residual = raw.add(&raw.adjoint())?.max_entry() * 0.5;
    let b = raw.anti_hermitian_part();

    let am = a.as_matrix(modes);
    let comm = qp_product(&am, &b)?.sub(&qp_product(&b, &am)?)?;
    let dt = b.time_derivative(omega).scale(Complex64::new(0.0, -1.0));
    let resid = comm.add(&dt)?.add(&p.without_diagonal())?;
    let homological_residual = resid.strip_norm(ClassNorm::Beta { beta: opts.beta }, opts.s);

    let theta = 2.0 * opts.beta / (opts.iota - 1.0);
    let c0 = pairs
        .iter()
        .filter(|(i, j)| i < j)
        .map(|&(i, j)| (a.lambdas[i] - a.lambdas[j]).abs().powf(theta) / (a.mus[i].sub(&a.mus[j]).strip_norm(opts.s) + 1.0))
        .fold(f64::INFINITY, f64::min);

    Ok(GeneratorSolution { b, projection_residual, homological_residual, min_divisor: min_div, theta, c0, warnings })
}
