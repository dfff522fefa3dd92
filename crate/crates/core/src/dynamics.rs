//! Direct propagation of i x' = (A + P(omega t)) x against the reduced diagonal flow.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matclass::{ModeSet, QPMatrix, TorusFunction};

/// Allowed |‖x(T)‖ - ‖x(0)‖| before the step size is rejected.
pub const DRIFT_TOL: f64 = 1e-6;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<Vec<Complex64>>,
    pub sobolev_s: Vec<f64>,
    /// norms[t][k] = ‖x(t)‖_{s_k}
    pub norms: Vec<Vec<f64>>,
    pub drift: f64,
}

/// ‖x‖_s with ‖x‖_s^2 = sum_j j^s |x_j|^2.
pub fn sobolev_norm(x: &[Complex64], s: f64) -> f64 {
    x.iter().enumerate().map(|(j, v)| ((j + 1) as f64).powf(s) * v.norm_sqr()).sum::<f64>().sqrt()
}

fn l2(x: &[Complex64]) -> f64 {
    sobolev_norm(x, 0.0)
}

fn trajectory(times: Vec<f64>, states: Vec<Vec<Complex64>>, sobolev_s: &[f64], drift: f64) -> Trajectory {
    let norms = states.iter().map(|x| sobolev_s.iter().map(|&s| sobolev_norm(x, s)).collect()).collect();
    Trajectory { times, states, sobolev_s: sobolev_s.to_vec(), norms, drift }
}

/// Equispaced sample instants 0, T/m, ..., T.
pub fn sample_times(t_end: f64, m: usize) -> Vec<f64> {
    (0..=m).map(|k| t_end * k as f64 / m as f64).collect()
}

/// Largest step the direct integrator accepts.
pub fn max_step(lambdas: &[f64], p: &QPMatrix) -> f64 {
    let lmax = lambdas.iter().fold(0.0f64, |m, l| m.max(l.abs()));
    let pb: f64 = p.blocks.iter().map(|b| b.norm()).sum();
    0.1 / (lmax + pb).max(1e-300)
}

struct Generator<'a> {
    lambdas: &'a [f64],
    blocks: Vec<(Vec<i32>, DMatrix<Complex64>)>,
    omega: &'a [f64],
}

impl Generator<'_> {
    /// -i e^{i Lambda t} P(omega t) e^{-i Lambda t} y
    fn apply(&self, t: f64, y: &DVector<Complex64>) -> DVector<Complex64> {
        let w = DVector::from_iterator(y.len(), y.iter().zip(self.lambdas).map(|(v, l)| v * Complex64::from_polar(1.0, -l * t)));
        let mut out = DVector::zeros(y.len());
        for (mode, b) in &self.blocks {
            let ph: f64 = mode.iter().zip(self.omega).map(|(&k, o)| k as f64 * o).sum::<f64>() * t;
            out.gemv(Complex64::from_polar(1.0, ph), b, &w, Complex64::new(1.0, 0.0));
        }
        for (o, l) in out.iter_mut().zip(self.lambdas) {
            *o *= Complex64::new(0.0, -1.0) * Complex64::from_polar(1.0, l * t);
        }
        out
    }
}

/// Fourth-order Runge-Kutta in the interaction picture y = e^{i Lambda t} x, no renormalization.
#[allow(clippy::too_many_arguments)]
pub fn evolve_direct(
    lambdas: &[f64],
    p: &QPMatrix,
    eps: f64,
    omega: &[f64],
    x0: &[Complex64],
    times: &[f64],
    dt: f64,
    sobolev_s: &[f64],
) -> Result<Trajectory> {
    let n = lambdas.len();
    if p.dim != n || x0.len() != n || omega.len() != p.modes.n_freq {
        return Err(Error::Dimension(format!("{n} eigenvalues, {}x{} perturbation, state of length {}", p.dim, p.dim, x0.len())));
    }
    if times.len() < 2 || times.windows(2).any(|w| (w[1] - w[0]) * (times[1] - times[0]) <= 0.0) {
        return Err(Error::InvalidInput("sample times must be strictly monotone".into()));
    }
    let scaled = p.scale(Complex64::new(eps, 0.0));
    let limit = max_step(lambdas, &scaled);
    if !(dt > 0.0) || dt > limit * (1.0 + 1e-12) {
        return Err(Error::StepSize { drift: f64::NAN, suggested_dt: limit });
    }
    let gen = Generator {
        lambdas,
        blocks: (0..scaled.blocks.len())
            .filter(|&i| scaled.blocks[i].iter().any(|z| z.norm() > 0.0))
            .map(|i| (scaled.modes.mode(i), scaled.blocks[i].clone()))
            .collect(),
        omega,
    };
    let to_x = |t: f64, y: &DVector<Complex64>| -> Vec<Complex64> {
        y.iter().zip(lambdas).map(|(v, l)| v * Complex64::from_polar(1.0, -l * t)).collect()
    };
    let t0 = times[0];
    let mut y = DVector::from_iterator(n, x0.iter().zip(lambdas).map(|(v, l)| v * Complex64::from_polar(1.0, l * t0)));
    let mut t = t0;
    let mut states = vec![x0.to_vec()];
    for &target in &times[1..] {
        let span = target - t;
        let steps = (span.abs() / dt).ceil().max(1.0) as usize;
        let h = span / steps as f64;
        for k in 0..steps {
            let tk = t + h * k as f64;
            let k1 = gen.apply(tk, &y);
            let k2 = gen.apply(tk + 0.5 * h, &(&y + &k1 * Complex64::new(0.5 * h, 0.0)));
            let k3 = gen.apply(tk + 0.5 * h, &(&y + &k2 * Complex64::new(0.5 * h, 0.0)));
            let k4 = gen.apply(tk + h, &(&y + &k3 * Complex64::new(h, 0.0)));
            y += (k1 + k2 * Complex64::new(2.0, 0.0) + k3 * Complex64::new(2.0, 0.0) + k4) * Complex64::new(h / 6.0, 0.0);
        }
        t = target;
        states.push(to_x(t, &y));
    }
    let n0 = l2(x0);
    let drift = states.iter().map(|x| (l2(x) - n0).abs()).fold(0.0, f64::max);
    if drift > DRIFT_TOL {
        return Err(Error::StepSize { drift, suggested_dt: 0.5 * dt * (DRIFT_TOL / drift).powf(0.25) });
    }
    Ok(trajectory(times.to_vec(), states, sobolev_s, drift))
}

/// Phase Phi(t) = sum_{l != 0} mu(l) (e^{i<l,omega>t} - 1) / (i<l,omega>).
fn phase(mu: &TorusFunction, omega: &[f64], t: f64) -> Result<f64> {
    let mut acc = Complex64::default();
    for (k, c) in mu.coeffs.iter().enumerate() {
        if k == mu.modes.zero() || c.norm() == 0.0 {
            continue;
        }
        let w = mu.modes.dot(k, omega);
        if w == 0.0 {
            return Err(Error::ResonantPhase(mu.modes.mode(k)));
        }
        acc += c * (Complex64::from_polar(1.0, w * t) - 1.0) / Complex64::new(0.0, w);
    }
    Ok(acc.re)
}

/// Closed-form solution of i y' = (lambda + mu(omega t)) y, mode by mode.
pub fn evolve_reduced(
    lambdas_inf: &[f64],
    mus_inf: &[TorusFunction],
    omega: &[f64],
    y0: &[Complex64],
    times: &[f64],
    sobolev_s: &[f64],
) -> Result<Trajectory> {
    let n = lambdas_inf.len();
    if mus_inf.len() != n || y0.len() != n {
        return Err(Error::Dimension(format!("{n} eigenvalues, {} phases, state of length {}", mus_inf.len(), y0.len())));
    }
    for m in mus_inf {
        if m.mean().norm() > 1e-14 {
            return Err(Error::InvalidInput(format!("phase function has mean {}", m.mean())));
        }
    }
    let states = times
        .iter()
        .map(|&t| {
            (0..n)
                .map(|j| Ok(y0[j] * Complex64::from_polar(1.0, -lambdas_inf[j] * t - phase(&mus_inf[j], omega, t)?)))
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(trajectory(times.to_vec(), states, sobolev_s, 0.0))
}

/// y(0) = U(0)^{-1} x(0).
pub fn conjugated_start(u: &QPMatrix, x0: &[Complex64]) -> Result<Vec<Complex64>> {
    let u0 = u.at(&vec![0.0; u.modes.n_freq]);
    let lu = u0.lu();
    lu.solve(&DVector::from_column_slice(x0)).map(|v| v.iter().cloned().collect()).ok_or(Error::Singular)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SobolevBound {
    pub s: f64,
    /// sup_t ‖x(t)‖_s / ‖x(0)‖_s
    pub sup_ratio: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FlowComparison {
    pub max_deviation: f64,
    pub deviations: Vec<f64>,
    pub sobolev: Vec<SobolevBound>,
}

/// ‖x(t) - U(omega t) y(t)‖ over a shared time grid.
pub fn compare_flows(direct: &Trajectory, reduced: &Trajectory, u_total: &QPMatrix, omega: &[f64]) -> Result<FlowComparison> {
    if direct.times != reduced.times {
        return Err(Error::GridMismatch);
    }
    let deviations: Vec<f64> = direct
        .times
        .iter()
        .zip(direct.states.iter().zip(&reduced.states))
        .map(|(&t, (x, y))| {
            let phi: Vec<f64> = omega.iter().map(|w| w * t).collect();
            let uy = u_total.at(&phi) * DVector::from_column_slice(y);
            x.iter().zip(uy.iter()).map(|(a, b)| (a - b).norm_sqr()).sum::<f64>().sqrt()
        })
        .collect();
    let sobolev = direct
        .sobolev_s
        .iter()
        .enumerate()
        .map(|(k, &s)| {
            let n0 = direct.norms[0][k];
            SobolevBound { s, sup_ratio: direct.norms.iter().map(|v| v[k] / n0).fold(0.0, f64::max) }
        })
        .collect();
    Ok(FlowComparison { max_deviation: deviations.iter().cloned().fold(0.0, f64::max), deviations, sobolev })
}

/// Unit vector e_j (1-based).
pub fn basis_state(n: usize, j: usize) -> Result<Vec<Complex64>> {
    if j == 0 || j > n {
        return Err(Error::InvalidInput(format!("index {j} outside 1..={n}")));
    }
    let mut x = vec![Complex64::default(); n];
    x[j - 1] = Complex64::new(1.0, 0.0);
    Ok(x)
}

/// A constant perturbation on a one-mode box, handy for small systems.
pub fn constant_perturbation(m: DMatrix<Complex64>, n_freq: usize) -> Result<QPMatrix> {
    Ok(QPMatrix::constant(m, ModeSet::new(n_freq, 0)?))
}

#[cfg(test)]
mod tests {
    use super::*;

    const S: [f64; 2] = [1.0, 2.0];

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn lambdas() -> Vec<f64> {
        vec![1.0, 2.7, 4.9]
    }

    fn cos_perturbation(amp: f64) -> QPMatrix {
        let modes = ModeSet::new(1, 1).unwrap();
        let mut q = QPMatrix::zeros(3, modes);
        let m = DMatrix::from_row_slice(3, 3, &[0.0, 1.0, 0.2, 1.0, 0.0, 0.5, 0.2, 0.5, 0.0]).map(|v| c(0.5 * amp * v, 0.0));
        *q.block_mut(&[1]).unwrap() = m.clone();
        *q.block_mut(&[-1]).unwrap() = m;
        q
    }

    fn normalized(v: Vec<Complex64>) -> Vec<Complex64> {
        let n = l2(&v);
        v.into_iter().map(|z| z / n).collect()
    }

    #[test]
    fn unperturbed_flow_is_diagonal() {
        let l = lambdas();
        let x0 = normalized(vec![c(1.0, 0.0), c(0.0, 1.0), c(0.5, 0.5)]);
        let times = sample_times(20.0, 10);
        let tr = evolve_direct(&l, &cos_perturbation(1.0), 0.0, &[0.7], &x0, &times, 1e-2, &S).unwrap();
        for (t, x) in times.iter().zip(&tr.states) {
            for j in 0..3 {
                assert!((x[j] - x0[j] * Complex64::from_polar(1.0, -l[j] * t)).norm() < 1e-12);
            }
        }
    }

    #[test]
    fn norm_is_conserved() {
        let x0 = normalized(vec![c(1.0, 0.0), c(0.3, 0.0), c(0.0, -0.2)]);
        let times = sample_times(100.0, 50);
        let tr = evolve_direct(&lambdas(), &cos_perturbation(0.3), 1.0, &[0.618], &x0, &times, 0.01, &S).unwrap();
        assert!(tr.drift < 1e-6);
        assert_eq!(tr.norms.len(), times.len());
    }

    #[test]
    fn constant_perturbation_matches_exponential() {
        let l = [1.0, 2.5];
        let p = DMatrix::from_row_slice(2, 2, &[0.3, 0.7, 0.7, -0.2]);
        let eps = 0.1;
        let q = constant_perturbation(p.map(|v| c(v, 0.0)), 1).unwrap();
        let x0 = normalized(vec![c(0.6, 0.1), c(-0.3, 0.7)]);
        let times = sample_times(10.0, 5);
        let tr = evolve_direct(&l, &q, eps, &[0.5], &x0, &times, 1e-3, &[]).unwrap();
        let h = DMatrix::from_diagonal(&nalgebra::DVector::from_column_slice(&l)) + p * eps;
        let eig = nalgebra::SymmetricEigen::new(h);
        for (t, x) in times.iter().zip(&tr.states) {
            let v = eig.eigenvectors.map(|r| c(r, 0.0));
            let ph = DMatrix::from_diagonal(&eig.eigenvalues.map(|e| Complex64::from_polar(1.0, -e * t)));
            let exact = &v * ph * v.transpose() * DVector::from_column_slice(&x0);
            for j in 0..2 {
                assert!((x[j] - exact[j]).norm() < 1e-8, "t = {t}");
            }
        }
    }

    #[test]
    fn step_size_gate() {
        let x0 = basis_state(3, 1).unwrap();
        let times = sample_times(1.0, 1);
        match evolve_direct(&lambdas(), &cos_perturbation(1.0), 1.0, &[0.5], &x0, &times, 1.0, &S) {
            Err(Error::StepSize { suggested_dt, .. }) => assert!(suggested_dt < 0.1 / 4.9),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn time_reversal_returns_start() {
        let l = lambdas();
        let x0 = normalized(vec![c(1.0, 0.0), c(0.3, 0.0), c(0.0, -0.2)]);
        let q = cos_perturbation(0.2);
        let fw = evolve_direct(&l, &q, 1.0, &[0.618], &x0, &[0.0, 50.0], 0.01, &[]).unwrap();
        let back = evolve_direct(&l, &q, 1.0, &[0.618], &fw.states[1], &[50.0, 0.0], 0.01, &[]).unwrap();
        // integrator error of one leg, from halving the step
        let fine = evolve_direct(&l, &q, 1.0, &[0.618], &x0, &[0.0, 50.0], 0.005, &[]).unwrap();
        let err: f64 = fw.states[1].iter().zip(&fine.states[1]).map(|(a, b)| (a - b).norm_sqr()).sum::<f64>().sqrt() * 16.0 / 15.0;
        let ret: f64 = back.states[1].iter().zip(&x0).map(|(a, b)| (a - b).norm_sqr()).sum::<f64>().sqrt();
        assert!(ret <= 2.0 * err.max(1e-14), "return {ret}, leg error {err}");
    }

    #[test]
    fn reduced_flow_closed_form() {
        let modes = ModeSet::new(1, 2).unwrap();
        let mut mu = TorusFunction::zeros(modes);
        let cc = c(0.3, 0.1);
        mu.set(&[1], cc).unwrap();
        mu.set(&[-1], cc.conj()).unwrap();
        let om = 0.7;
        let y0 = vec![c(0.6, 0.0), c(0.0, 0.8)];
        let times = sample_times(30.0, 60);
        let tr = evolve_reduced(&[1.0, 2.0], &[mu.clone(), TorusFunction::zeros(modes)], &[om], &y0, &times, &S).unwrap();
        for (t, y) in times.iter().zip(&tr.states) {
            let single = cc * (Complex64::from_polar(1.0, om * t) - 1.0) / c(0.0, om);
            let phi = 2.0 * single.re;
            assert!((y[0] - y0[0] * Complex64::from_polar(1.0, -t - phi)).norm() < 1e-13);
            assert!((y[1] - y0[1] * Complex64::from_polar(1.0, -2.0 * t)).norm() < 1e-13);
            assert!((y[0].norm() - 0.6).abs() < 1e-14);
        }
        // reduced flow solves i y' = (lambda + mu) y
        let h = 1e-5;
        let t = 3.3;
        let tr = evolve_reduced(&[1.0], &[mu.clone()], &[om], &[c(1.0, 0.0)], &[t - h, t, t + h], &[]).unwrap();
        let d = (tr.states[2][0] - tr.states[0][0]) / (2.0 * h);
        let rhs = (1.0 + mu.at(&[om * t]).re) * tr.states[1][0];
        assert!((c(0.0, 1.0) * d - rhs).norm() < 1e-8);
    }

    #[test]
    fn resonant_phase_rejected() {
        let modes = ModeSet::new(2, 1).unwrap();
        let mut mu = TorusFunction::zeros(modes);
        mu.set(&[1, -1], c(0.1, 0.0)).unwrap();
        mu.set(&[-1, 1], c(0.1, 0.0)).unwrap();
        let r = evolve_reduced(&[1.0], &[mu], &[0.5, 0.5], &[c(1.0, 0.0)], &[0.0, 1.0], &[]);
        assert!(matches!(r, Err(Error::ResonantPhase(_))));
    }

    #[test]
    fn sobolev_norm_of_unit_vector() {
        let e4 = basis_state(6, 4).unwrap();
        assert_eq!(sobolev_norm(&e4, 2.0), 4.0);
        assert_eq!(sobolev_norm(&e4, 0.0), 1.0);
    }

    #[test]
    fn identity_conjugation_has_zero_deviation() {
        let l = lambdas();
        let x0 = basis_state(3, 2).unwrap();
        let times = sample_times(5.0, 10);
        let q = cos_perturbation(1.0);
        let d = evolve_direct(&l, &q, 0.0, &[0.618], &x0, &times, 0.01, &S).unwrap();
        let u = QPMatrix::identity(3, q.modes);
        let y0 = conjugated_start(&u, &x0).unwrap();
        let mus = vec![TorusFunction::zeros(q.modes); 3];
        let r = evolve_reduced(&l, &mus, &[0.618], &y0, &times, &S).unwrap();
        let cmp = compare_flows(&d, &r, &u, &[0.618]).unwrap();
        assert!(cmp.max_deviation < 1e-13);
        assert!((cmp.sobolev[0].sup_ratio - 1.0).abs() < 1e-14);
        let shifted = evolve_reduced(&l, &mus, &[0.618], &y0, &sample_times(5.0, 11), &S).unwrap();
        assert!(matches!(compare_flows(&d, &shifted, &u, &[0.618]), Err(Error::GridMismatch)));
    }
}
