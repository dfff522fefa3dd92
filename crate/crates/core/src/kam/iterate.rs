//! One reduction step and the iteration built from it.

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::assemble::Problem;
use super::schedule::{gap_constant, IterationSchedule, LevelConstants, LevelPlan};
use crate::error::{Error, Result};
use crate::homological::{solve_generator, torus_samples, GeneratorOptions, NormalForm};
use crate::matclass::{max_abs, qp_exp, qp_product, weighted_op_norm, ClassNorm, ModeSet, QPMatrix, TorusFunction};

const I: Complex64 = Complex64::new(0.0, 1.0);

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct KamState {
    pub level: usize,
    pub lambdas: Vec<f64>,
    pub mus: Vec<TorusFunction>,
    pub p: QPMatrix,
    pub s: f64,
    pub constants: LevelConstants,
    pub omega: Vec<f64>,
    /// generators B^1..B^l
    #[serde(skip)]
    pub history: Vec<QPMatrix>,
}

impl KamState {
    pub fn initial(problem: &Problem, omega: &[f64], s0: f64, constants: LevelConstants) -> Result<Self> {
        let modes = problem.p0.modes;
        if omega.len() != modes.n_freq {
            return Err(Error::Dimension(format!("omega has {} entries, torus dimension {}", omega.len(), modes.n_freq)));
        }
        Ok(Self {
            level: 0,
            lambdas: problem.lambdas.clone(),
            mus: vec![TorusFunction::zeros(modes); problem.dim()],
            p: problem.p0.clone(),
            s: s0,
            constants,
            omega: omega.to_vec(),
            history: Vec::new(),
        })
    }

    pub fn modes(&self) -> ModeSet {
        self.p.modes
    }

    pub fn normal_form(&self) -> NormalForm {
        NormalForm { lambdas: self.lambdas.clone(), mus: self.mus.clone() }
    }

    pub fn dim(&self) -> usize {
        self.lambdas.len()
    }
}

#[derive(Debug, Clone)]
pub struct StepOptions {
    pub generator: GeneratorOptions,
    pub norm: ClassNorm,
}

impl StepOptions {
    pub fn with_beta(beta: f64) -> Self {
        Self { generator: GeneratorOptions { beta, ..GeneratorOptions::default() }, norm: ClassNorm::Beta { beta } }
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct StepReport {
    pub norm_before: f64,
    pub norm_after: f64,
    pub norm_b: f64,
    pub min_divisor: f64,
    /// |P+| / |P-|^2
    pub contraction: f64,
    /// |P+| / |P-|, above 1 means the step made things worse
    pub growth: f64,
    /// asymmetry of P+ before it is symmetrized
    pub hermitian_defect: f64,
    pub homological_residual: f64,
    /// |lambda+ - lambda-| <= |P-| i^{2 beta} for all i
    pub drift_ok: bool,
    pub divisor_warnings: usize,
}

/// Q_ij (right_j - left_i + shift_j), i.e. Q diag(right + shift) - diag(left) Q without cancellation.
fn diag_sandwich(q: &QPMatrix, left: &[f64], right: &[f64], shift: &[f64]) -> QPMatrix {
    let mut out = q.clone();
    for b in out.blocks.iter_mut() {
        for j in 0..b.ncols() {
            for i in 0..b.nrows() {
                b[(i, j)] *= right[j] - left[i] + shift[j];
            }
        }
    }
    out
}

fn mu_matrix(mus: &[TorusFunction], modes: ModeSet) -> QPMatrix {
    NormalForm { lambdas: vec![0.0; mus.len()], mus: mus.to_vec() }.as_matrix(modes)
}

fn class_beta(norm: ClassNorm) -> f64 {
    match norm {
        ClassNorm::Beta { beta } | ClassNorm::BetaPlus { beta, .. } => beta,
    }
}

/// Conjugate by e^B where B solves the homological equation, absorbing the diagonal of P.
pub fn kam_step(state: &KamState, sigma: f64, opts: &StepOptions) -> Result<(KamState, StepReport)> {
    let modes = state.modes();
    let n = state.dim();
    let norm_before = state.p.strip_norm(opts.norm, state.s);
    let mut next = state.clone();
    next.level += 1;
    next.s = state.s - 2.0 * sigma;
    if state.p.max_entry() == 0.0 {
        next.history.push(QPMatrix::zeros(n, modes));
        let r = StepReport {
            norm_before,
            norm_after: 0.0,
            norm_b: 0.0,
            min_divisor: f64::NAN,
            contraction: 0.0,
            growth: 0.0,
            hermitian_defect: 0.0,
            homological_residual: 0.0,
            drift_ok: true,
            divisor_warnings: 0,
        };
        return Ok((next, r));
    }

    let gopts = GeneratorOptions { s: state.s, ..opts.generator.clone() };
    let gen = solve_generator(&state.normal_form(), &state.p, &state.omega, &gopts)?;
    let b = gen.b;

    // new normal form
    let diag = state.p.diagonal();
    let shifts: Vec<f64> = diag.iter().map(|d| d.mean().re).collect();
    let lambdas: Vec<f64> = state.lambdas.iter().zip(&shifts).map(|(l, m)| l + m).collect();
    let mut mus = state.mus.clone();
    for i in 0..n {
        let d = diag[i].without_mean();
        mus[i] = TorusFunction { modes, coeffs: mus[i].coeffs.iter().zip(&d.coeffs).map(|(a, b)| a + b).collect() };
    }

    // P+ = e^{-B} ( H e^B - e^B A+ - i d/dt e^B ) with H = A- + P-, constant parts as an exact commutator
    let e = qp_exp(&b)?;
    let e_inv = qp_exp(&b.scale(Complex64::new(-1.0, 0.0)))?;
    let comm = diag_sandwich(&e, &state.lambdas, &state.lambdas, &shifts);
    let rest_left = mu_matrix(&state.mus, modes).add(&state.p)?;
    let rest_right = mu_matrix(&mus, modes);
    let k = qp_product(&rest_left, &e)?
        .sub(&qp_product(&e, &rest_right)?)?
        .sub(&comm)?
        .sub(&e.time_derivative(&state.omega).scale(I))?;
    let raw = qp_product(&e_inv, &k)?;
    let hermitian_defect = raw.hermitian_defect();
    let p_new = raw.add(&raw.adjoint())?.scale(Complex64::new(0.5, 0.0));

    let norm_after = p_new.strip_norm(opts.norm, next.s);
    let beta = class_beta(opts.norm);
    let drift_ok = (0..n).all(|i| (lambdas[i] - state.lambdas[i]).abs() <= norm_before * ((i + 1) as f64).powf(2.0 * beta) * (1.0 + 1e-12));
    let report = StepReport {
        norm_before,
        norm_after,
        norm_b: b.strip_norm(opts.norm, state.s),
        min_divisor: gen.min_divisor,
        contraction: norm_after / (norm_before * norm_before),
        growth: norm_after / norm_before,
        hermitian_defect,
        homological_residual: gen.homological_residual,
        drift_ok,
        divisor_warnings: gen.warnings.len(),
    };
    next.lambdas = lambdas;
    next.mus = mus;
    next.p = p_new;
    next.history.push(b);
    Ok((next, report))
}

/// Level-0 small-divisor screen on omega.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MelnikovScreen {
    pub gamma: f64,
    pub tau: f64,
    pub k_screen: u32,
    pub iota: f64,
}

/// All k in Z^n with |k|_inf <= kmax, as vectors.
pub(crate) fn lattice_box(n: usize, kmax: u32) -> Vec<Vec<i32>> {
    let side = 2 * kmax as usize + 1;
    (0..side.pow(n as u32))
        .map(|mut idx| {
            (0..n)
                .map(|_| {
                    let d = (idx % side) as i32 - kmax as i32;
                    idx /= side;
                    d
                })
                .collect()
        })
        .collect()
}

pub(crate) fn l1(k: &[i32]) -> f64 {
    k.iter().map(|v| v.unsigned_abs() as f64).sum()
}

pub(crate) fn dot(k: &[i32], omega: &[f64]) -> f64 {
    k.iter().zip(omega).map(|(&a, b)| a as f64 * b).sum()
}

impl MelnikovScreen {
    /// First mode violating either family, if any.
    pub fn check(&self, lambdas: &[f64], omega: &[f64]) -> Option<Vec<i32>> {
        for k in lattice_box(omega.len(), self.k_screen) {
            let nk = l1(&k);
            let d = dot(&k, omega);
            if nk > 0.0 && d.abs() < self.gamma / nk.powf(self.tau) {
                return Some(k);
            }
            for i in 0..lambdas.len() {
                for j in 0..lambdas.len() {
                    if i == j {
                        continue;
                    }
                    let w = ((i + 1) as f64).powf(self.iota) - ((j + 1) as f64).powf(self.iota);
                    if (lambdas[i] - lambdas[j] + d).abs() < self.gamma * w.abs() / (1.0 + nk.powf(self.tau)) {
                        return Some(k);
                    }
                }
            }
        }
        None
    }
}

#[derive(Debug, Clone)]
pub struct RunOptions {
    pub omega: Vec<f64>,
    pub screen: MelnikovScreen,
    pub step: StepOptions,
    /// real phi samples for the pointwise checks
    pub phi_samples: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LevelRecord {
    pub l: usize,
    pub eps_l: f64,
    #[serde(rename = "norm_Pl")]
    pub norm_pl: f64,
    pub s_l: f64,
    pub min_divisor: Option<f64>,
    pub norm_b: Option<f64>,
    pub contraction: Option<f64>,
    pub hermitian_defect: f64,
    pub homological_residual: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StopReason {
    Converged,
    StripExhausted,
    LevelLimit,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunResult {
    pub levels: Vec<LevelRecord>,
    pub plan: Vec<LevelPlan>,
    pub stop: StopReason,
    pub final_state: KamState,
    pub lambdas0: Vec<f64>,
    pub lambdas_inf: Vec<f64>,
    pub mus_inf: Vec<TorusFunction>,
    #[serde(rename = "U_total")]
    pub u_total: QPMatrix,
    /// max entry of U A_inf + i dU/dt - (A0 + P0) U at sampled phi
    #[serde(rename = "residual_236")]
    pub residual: f64,
    /// max over sampled phi of the l^2 operator norm of U - I
    #[serde(rename = "U_deviation")]
    pub u_deviation: f64,
    /// max over sampled phi of max |U^* U - I|
    pub unitarity_defect: f64,
    /// norm level below which contraction is limited by rounding
    pub floor: f64,
    pub warnings: Vec<String>,
}

/// Norm level where rounding in the conjugation dominates.
pub fn rounding_floor(lambdas: &[f64]) -> f64 {
    64.0 * f64::EPSILON * lambdas.iter().fold(1.0f64, |m, l| m.max(l.abs()))
}

/// Rounding level of one conjugation step, relative to the norm of its input.
pub const STEP_ROUNDING: f64 = 1e3 * f64::EPSILON;

/// ln|P^{l+1}| / ln|P^l| for each step with 0 < |P^l| < 1; an output below the step's
/// rounding level is replaced by that level, so the ratios are lower bounds.
pub fn contraction_ratios(levels: &[LevelRecord]) -> Vec<f64> {
    levels
        .windows(2)
        .take_while(|w| w[0].norm_pl > 0.0 && w[0].norm_pl < 1.0)
        .map(|w| w[1].norm_pl.max(STEP_ROUNDING * w[0].norm_pl).ln() / w[0].norm_pl.ln())
        .collect()
}

pub fn run_iteration(problem: &Problem, schedule: &IterationSchedule, opts: &RunOptions) -> Result<RunResult> {
    schedule.validate()?;
    let modes = problem.p0.modes;
    if let Some(k) = opts.screen.check(&problem.lambdas, &opts.omega) {
        return Err(Error::MelnikovScreen { k });
    }
    let c_lambda = gap_constant(&problem.lambdas, opts.screen.iota);
    let plan = schedule.plan(c_lambda, modes.n_freq);
    let mut warnings = Vec::new();
    for p in &plan {
        if !p.violations.is_empty() {
            let v: String = p.violations.iter().collect();
            warnings.push(format!("level {}: schedule conditions ({v}) fail", p.l));
        }
    }

    let mut state = KamState::initial(problem, &opts.omega, schedule.s0, plan[0].constants)?;
    let n = problem.dim();
    let mut u = QPMatrix::identity(n, modes);
    let mut levels = vec![LevelRecord {
        l: 0,
        eps_l: plan[0].constants.eps,
        norm_pl: state.p.strip_norm(opts.step.norm, state.s),
        s_l: state.s,
        min_divisor: None,
        norm_b: None,
        contraction: None,
        hermitian_defect: state.p.hermitian_defect(),
        homological_residual: None,
    }];
    let mut increases = 0;
    let stop = loop {
        let norm = levels.last().unwrap().norm_pl;
        if norm < schedule.stop_tol || norm == 0.0 {
            break StopReason::Converged;
        }
        if state.s <= schedule.s0 / 2.0 + 1e-15 && state.level > 0 {
            break StopReason::StripExhausted;
        }
        if state.level >= schedule.l_max {
            break StopReason::LevelLimit;
        }
        let next_plan = &plan[state.level + 1];
        let (mut next, rep) = kam_step(&state, next_plan.sigma, &opts.step).map_err(|e| e.in_stage("kam-step"))?;
        next.constants = next_plan.constants;
        u = qp_product(&u, &qp_exp(next.history.last().unwrap())?)?;
        if rep.growth > 1.0 {
            increases += 1;
            warnings.push(format!("level {}: perturbation grew by {:.3}", next.level, rep.growth));
            if increases >= 2 {
                return Err(Error::Divergence(next.level - 1, next.level));
            }
        } else {
            increases = 0;
        }
        if !rep.drift_ok {
            warnings.push(format!("level {}: eigenvalue drift exceeds |P| i^(2 beta)", next.level));
        }
        levels.push(LevelRecord {
            l: next.level,
            eps_l: next_plan.constants.eps,
            norm_pl: rep.norm_after,
            s_l: next.s,
            min_divisor: Some(rep.min_divisor),
            norm_b: Some(rep.norm_b),
            contraction: Some(rep.contraction),
            hermitian_defect: rep.hermitian_defect,
            homological_residual: Some(rep.homological_residual),
        });
        state = next;
    };

    let samples = torus_samples(modes.n_freq, opts.phi_samples.max(1));
    let residual = reducibility_residual(&u, &state.lambdas, &state.mus, problem, &opts.omega, &samples)?;
    let mut u_deviation: f64 = 0.0;
    let mut unitarity_defect: f64 = 0.0;
    for phi in &samples {
        let m = u.at(phi);
        let id = DMatrix::<Complex64>::identity(n, n);
        u_deviation = u_deviation.max(weighted_op_norm(&(&m - &id), 0.0, 0.0)?);
        unitarity_defect = unitarity_defect.max(max_abs(&(m.adjoint() * &m - id)));
    }
    Ok(RunResult {
        levels,
        plan,
        stop,
        lambdas0: problem.lambdas.clone(),
        lambdas_inf: state.lambdas.clone(),
        mus_inf: state.mus.clone(),
        u_total: u,
        residual,
        u_deviation,
        unitarity_defect,
        floor: rounding_floor(&problem.lambdas),
        warnings,
        final_state: state,
    })
}

/// max over phi samples of max |U A_inf + i dU/dt - (A0 + P0) U|.
pub fn reducibility_residual(
    u: &QPMatrix,
    lambdas_inf: &[f64],
    mus_inf: &[TorusFunction],
    problem: &Problem,
    omega: &[f64],
    phi_samples: &[Vec<f64>],
) -> Result<f64> {
    let modes = u.modes;
    let r = diag_sandwich(u, &problem.lambdas, lambdas_inf, &vec![0.0; lambdas_inf.len()])
        .add(&qp_product(u, &mu_matrix(mus_inf, modes))?)?
        .add(&u.time_derivative(omega).scale(I))?
        .sub(&qp_product(&problem.p0, u)?)?;
    Ok(phi_samples.iter().map(|phi| max_abs(&r.at(phi))).fold(0.0, f64::max))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kam::assemble::Problem;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn golden() -> Vec<f64> {
        vec![(5f64.sqrt() - 1.0) / 2.0]
    }

    fn quartic_like(n: usize) -> Vec<f64> {
        (1..=n).map(|j| 1.376 * (j as f64 - 0.5).powf(4.0 / 3.0)).collect()
    }

    fn random_problem(seed: u64, n: usize, k_phi: usize, eps: f64, beta: f64) -> Problem {
        let modes = ModeSet::new(1, k_phi).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut q = QPMatrix::zeros(n, modes);
        for l in [-1, 1] {
            *q.block_mut(&[l]).unwrap() =
                DMatrix::from_fn(n, n, |_, _| Complex64::new(rng.gen::<f64>() - 0.5, rng.gen::<f64>() - 0.5));
        }
        let h = q.add(&q.adjoint()).unwrap();
        let norm = h.strip_norm(ClassNorm::Beta { beta }, 0.0);
        Problem::from_parts(quartic_like(n), h.scale(Complex64::new(eps / norm, 0.0)), beta).unwrap()
    }

    fn options(beta: f64) -> RunOptions {
        RunOptions {
            omega: golden(),
            screen: MelnikovScreen { gamma: 1e-4, tau: 8.0, k_screen: 4, iota: 4.0 / 3.0 },
            step: StepOptions::with_beta(beta),
            phi_samples: 16,
        }
    }

    fn schedule(eps0: f64, stop_tol: f64) -> IterationSchedule {
        IterationSchedule::calibrated(eps0, 0.5, 1e-4, 8.0, 9.0, 8, stop_tol).unwrap()
    }

    fn state(p: &Problem) -> KamState {
        let c = LevelConstants { eps: 1e-3, gamma: 0.0, c_lambda: 1.0, c_omega: 0.0, c_mu: 0.0, k: 0.0 };
        KamState::initial(p, &golden(), 0.5, c).unwrap()
    }

    #[test]
    fn zero_perturbation_step_is_identity() {
        let p = random_problem(1, 6, 3, 0.0, 0.0);
        let s = state(&p);
        let (next, rep) = kam_step(&s, 0.01, &StepOptions::with_beta(0.0)).unwrap();
        assert_eq!(next.level, 1);
        assert_eq!(next.lambdas, s.lambdas);
        assert_eq!(next.p, s.p);
        assert_eq!(rep.norm_after, 0.0);
        assert!((next.s - 0.48).abs() < 1e-15);
    }

    #[test]
    fn constant_diagonal_is_absorbed() {
        let modes = ModeSet::new(1, 2).unwrap();
        let d = [0.1, -0.2, 0.05];
        let pm = QPMatrix::constant(DMatrix::from_fn(3, 3, |i, j| if i == j { Complex64::new(d[i], 0.0) } else { Complex64::default() }), modes);
        let p = Problem::from_parts(vec![1.0, 3.0, 6.0], pm, 0.0).unwrap();
        let (next, _) = kam_step(&state(&p), 0.01, &StepOptions::with_beta(0.0)).unwrap();
        for i in 0..3 {
            assert!((next.lambdas[i] - p.lambdas[i] - d[i]).abs() < 1e-15);
            assert!(next.mus[i].coeffs.iter().all(|c| c.norm() == 0.0));
        }
        assert_eq!(next.p.max_entry(), 0.0);
    }

    #[test]
    fn one_step_is_quadratic() {
        let beta = 5.0 / 42.0;
        let p = random_problem(7, 20, 6, 1e-3, beta);
        let (next, rep) = kam_step(&state(&p), 0.02, &StepOptions::with_beta(beta)).unwrap();
        assert!(rep.contraction < 1e3, "c = {}", rep.contraction);
        assert!(rep.norm_after / rep.norm_before.powf(4.0 / 3.0) < 1.0);
        assert!(rep.hermitian_defect < 1e-9);
        assert!(rep.drift_ok);
        assert!(next.mus.iter().all(|m| m.mean() == Complex64::default()));
        assert!(next.p.hermitian_defect() == 0.0);
    }

    #[test]
    fn zero_eps_run_returns_immediately() {
        let p = random_problem(2, 8, 3, 0.0, 0.0);
        let r = run_iteration(&p, &schedule(0.0, 1e-12), &options(0.0)).unwrap();
        assert_eq!(r.levels.len(), 1);
        assert_eq!(r.stop, StopReason::Converged);
        assert_eq!(r.lambdas_inf, p.lambdas);
        assert_eq!(r.u_total, QPMatrix::identity(8, p.p0.modes));
        assert_eq!(r.residual, 0.0);
        assert_eq!(r.u_deviation, 0.0);
    }

    #[test]
    fn converged_run_satisfies_conjugacy() {
        let beta = 5.0 / 42.0;
        let p = random_problem(3, 16, 8, 1e-3, beta);
        let r = run_iteration(&p, &schedule(1e-3, 1e-13), &options(beta)).unwrap();
        assert_eq!(r.stop, StopReason::Converged);
        assert!(r.residual < 1e-10, "{}", r.residual);
        assert!(r.unitarity_defect < 1e-10);
        assert!(r.u_deviation > 0.0 && r.u_deviation < 1e-1);
        for (i, (a, b)) in r.lambdas_inf.iter().zip(&r.lambdas0).enumerate() {
            assert!((a - b).abs() <= 2e-3 * ((i + 1) as f64).powf(2.0 * beta), "{i}");
        }
        for l in &r.levels {
            assert!(l.hermitian_defect < 1e-9);
        }
        for m in &r.mus_inf {
            assert_eq!(m.mean(), Complex64::default());
        }
        let norms: Vec<f64> = r.levels.iter().map(|l| l.norm_pl).collect();
        assert!(norms.windows(2).all(|w| w[1] < w[0]), "{norms:?}");
        let ratios = contraction_ratios(&r.levels);
        assert!(ratios.len() >= 2 && ratios.iter().all(|&q| q > 1.25), "{ratios:?}");
    }

    #[test]
    fn level_one_residual_tracks_remaining_perturbation() {
        let beta = 0.0;
        let p = random_problem(4, 12, 8, 1e-3, beta);
        let s0 = state(&p);
        let (s1, rep) = kam_step(&s0, 0.02, &StepOptions::with_beta(beta)).unwrap();
        let e1 = qp_exp(&s1.history[0]).unwrap();
        let samples = torus_samples(1, 32);
        let r = reducibility_residual(&e1, &s1.lambdas, &s1.mus, &p, &golden(), &samples).unwrap();
        let p1 = s1.p.strip_norm(ClassNorm::Beta { beta: 0.0 }, 0.0);
        assert!(r > 0.1 * p1 && r < 1.5 * p1, "residual {r} vs |P1| {p1} ({})", rep.norm_after);
    }

    #[test]
    fn screen_rejects_resonant_frequency() {
        let p = random_problem(5, 6, 3, 1e-3, 0.0);
        let mut o = options(0.0);
        // lambda_2 - lambda_1 = 1 * omega exactly
        o.omega = vec![p.lambdas[1] - p.lambdas[0]];
        assert!(matches!(run_iteration(&p, &schedule(1e-3, 1e-12), &o), Err(Error::MelnikovScreen { .. })));
    }

    #[test]
    fn large_perturbation_diverges() {
        let p = random_problem(6, 10, 6, 3.0, 0.0);
        let mut o = options(0.0);
        o.screen.gamma = 0.0;
        let r = run_iteration(&p, &IterationSchedule::calibrated(0.5, 0.5, 0.0, 8.0, 9.0, 8, 1e-12).unwrap(), &o);
        assert!(r.is_err(), "{:?}", r.map(|r| r.levels.iter().map(|l| l.norm_pl).collect::<Vec<_>>()));
    }

    #[test]
    fn ratios_use_rounding_level() {
        let rec = |l: usize, v: f64| LevelRecord {
            l,
            eps_l: 0.0,
            norm_pl: v,
            s_l: 0.5,
            min_divisor: None,
            norm_b: None,
            contraction: None,
            hermitian_defect: 0.0,
            homological_residual: None,
        };
        let r = contraction_ratios(&[rec(0, 1e-3), rec(1, 1e-6), rec(2, 0.0)]);
        assert!((r[0] - 2.0).abs() < 1e-12);
        let floor = (STEP_ROUNDING * 1e-6f64).ln() / 1e-6f64.ln();
        assert!((r[1] - floor).abs() < 1e-12);
        assert!(contraction_ratios(&[rec(0, 2.0), rec(1, 1.0)]).is_empty());
    }

    #[test]
    fn report_round_trip() {
        let p = random_problem(8, 5, 2, 1e-3, 0.0);
        let r = run_iteration(&p, &schedule(1e-3, 1e-12), &options(0.0)).unwrap();
        let s = serde_json::to_string(&r).unwrap();
        let back: RunResult = serde_json::from_str(&s).unwrap();
        assert_eq!(back.u_total, r.u_total);
        assert_eq!(back.lambdas_inf, r.lambdas_inf);
        assert!(s.contains("\"norm_Pl\"") && s.contains("\"U_deviation\""));
    }
}
