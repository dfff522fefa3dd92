//! Experiment configuration, the end-to-end pipeline and its reports.

use std::io::Write;
use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::dynamics::{basis_state, compare_flows, conjugated_start, evolve_direct, evolve_reduced, max_step, sample_times, FlowComparison, SobolevBound};
use crate::error::{Error, Result};
use crate::kam::{
    a3_exponent, assemble_problem, gap_constant, midpoint_grid, resonance_filter, run_iteration, Assembly, FilterParams,
    IterationSchedule, MelnikovScreen, PerturbationSpec, Problem, RunOptions, RunResult, StepOptions,
};
use crate::potential::{Potential, PotentialSpec};
use crate::spectrum::{solve_spectrum_extrapolated, weyl_fit, Grid, WeylFit};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ThresholdBranch {
    /// ell - 2/3
    First,
    /// (sqrt(4 ell^2 - 2 ell + 1) - 1) / 2
    Second,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Threshold {
    pub ell: f64,
    pub value: f64,
    pub branch: ThresholdBranch,
}

/// Upper limit on mu for a given ell, with the branch that attains it.
pub fn threshold(ell: f64) -> Result<Threshold> {
    if !(ell > 1.0) || !ell.is_finite() {
        return Err(Error::InvalidInput(format!("threshold needs ell > 1, got {ell}")));
    }
    let first = ell - 2.0 / 3.0;
    let second = ((4.0 * ell * ell - 2.0 * ell + 1.0).sqrt() - 1.0) / 2.0;
    let branch = if ell < 4.0 / 3.0 { ThresholdBranch::First } else { ThresholdBranch::Second };
    Ok(Threshold { ell, value: first.min(second), branch })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PerturbationConfig {
    #[serde(rename = "W")]
    pub w: PerturbationSpec,
    pub mu: f64,
    pub eps: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScheduleConfig {
    pub s0: f64,
    pub gamma0: f64,
    pub tau: f64,
    pub l_max: usize,
    pub stop_tol: f64,
    /// Fourier cutoff of the level-0 small-divisor screen
    pub k_screen: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OmegaGrid {
    /// points per side of the midpoint grid on [0,1]^n
    pub points: usize,
    pub gamma: f64,
    pub k_max: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DynamicsConfig {
    /// initial state e_{x0}
    pub x0: usize,
    /// horizon in basic periods 2 pi / omega_1
    pub periods: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dt: Option<f64>,
    pub samples: usize,
    pub sobolev_s: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub schema_version: u32,
    pub potential: PotentialSpec,
    pub grid: Grid,
    #[serde(rename = "N")]
    pub n: usize,
    #[serde(rename = "J")]
    pub j: usize,
    #[serde(rename = "K_phi")]
    pub k_phi: usize,
    pub n_freq: usize,
    pub perturbation: PerturbationConfig,
    pub schedule: ScheduleConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub omega: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub omega_grid: Option<OmegaGrid>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dynamics: Option<DynamicsConfig>,
    /// recorded only; the pipeline draws no random numbers
    #[serde(default)]
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
}

impl ExperimentConfig {
    /// Quartic oscillator, sin(x) cos(phi) perturbation, golden-mean frequency.
    pub fn example() -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            potential: PotentialSpec::monomial(2.0),
            grid: Grid { half_width: 8.0, n_pts: 6401 },
            n: 12,
            j: 24,
            k_phi: 6,
            n_freq: 1,
            perturbation: PerturbationConfig { w: PerturbationSpec::sine_cosine(1), mu: 1.0, eps: 1e-3 },
            schedule: ScheduleConfig { s0: 0.5, gamma0: 1e-3, tau: 8.0, l_max: 8, stop_tol: 1e-12, k_screen: 6 },
            omega: Some(vec![(5f64.sqrt() - 1.0) / 2.0]),
            omega_grid: None,
            dynamics: Some(DynamicsConfig { x0: 1, periods: 20.0, dt: None, samples: 200, sobolev_s: vec![1.0, 2.0] }),
            seed: 0,
            output_dir: None,
        }
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let c: Self = serde_json::from_str(s)?;
        c.validate()?;
        Ok(c)
    }

    /// Canonical text: pretty JSON with a trailing newline.
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)? + "\n")
    }

    pub fn iota(&self) -> f64 {
        2.0 * self.potential.ell / (self.potential.ell + 1.0)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidInput(m));
        if self.schema_version != SCHEMA_VERSION {
            return bad(format!("schema_version {} unsupported (expected {SCHEMA_VERSION})", self.schema_version));
        }
        Potential::new(self.potential.clone())?;
        self.grid.validate()?;
        let t = threshold(self.potential.ell)?;
        let mu = self.perturbation.mu;
        if !(mu >= 0.0 && mu < t.value) {
            return bad(format!("mu = {mu} must lie in [0, {:.6}) ({:?} branch)", t.value, t.branch));
        }
        let eps = self.perturbation.eps;
        if !(0.0..1.0).contains(&eps) {
            return bad(format!("eps = {eps} outside [0, 1)"));
        }
        if self.n == 0 || self.n > self.j {
            return bad(format!("need 1 <= N <= J, got N = {}, J = {}", self.n, self.j));
        }
        if self.n_freq == 0 || self.n_freq > 3 {
            return bad(format!("n_freq = {} outside 1..=3", self.n_freq));
        }
        self.perturbation.w.validate(self.n_freq)?;
        match (&self.omega, &self.omega_grid) {
            (Some(o), None) => {
                if o.len() != self.n_freq || o.iter().any(|v| !v.is_finite()) {
                    return bad(format!("omega needs {} finite entries", self.n_freq));
                }
            }
            (None, Some(g)) => {
                if g.points == 0 || !(g.gamma >= 0.0) {
                    return bad("omega_grid needs points >= 1 and gamma >= 0".into());
                }
            }
            _ => return bad("give exactly one of omega and omega_grid".into()),
        }
        let s = &self.schedule;
        IterationSchedule::calibrated(eps, s.s0, s.gamma0, s.tau, 1.0, s.l_max, s.stop_tol)?;
        if let Some(d) = &self.dynamics {
            if d.x0 == 0 || d.x0 > self.n || !(d.periods > 0.0) || d.samples == 0 {
                return bad("dynamics needs 1 <= x0 <= N, periods > 0 and samples >= 1".into());
            }
            if d.dt.is_some_and(|v| !(v > 0.0)) || d.sobolev_s.iter().any(|v| !v.is_finite()) {
                return bad("dynamics dt must be positive and sobolev_s finite".into());
            }
        }
        Ok(())
    }
}

/// Run report of the iteration; carries everything the dynamics stage needs.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct KamReport {
    pub omega: Vec<f64>,
    pub problem: Problem,
    pub schedule: IterationSchedule,
    #[serde(flatten)]
    pub run: RunResult,
}

impl KamReport {
    pub fn from_json(s: &str) -> Result<Self> {
        let r: Self = serde_json::from_str(s)?;
        let n = r.problem.dim();
        if r.omega.len() != r.problem.p0.modes.n_freq
            || r.run.u_total.dim != n
            || r.run.u_total.modes != r.problem.p0.modes
            || r.run.lambdas_inf.len() != n
            || r.run.mus_inf.len() != n
            || r.run.mus_inf.iter().any(|m| m.modes.n_freq != r.omega.len() || m.coeffs.len() != m.modes.len())
        {
            return Err(Error::Dimension("run report pieces disagree in size".into()));
        }
        Ok(r)
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct SpectrumSummary {
    pub lambdas: Vec<f64>,
    pub weyl: Option<WeylFit>,
    pub orthonormality_defect: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct MeasureSummary {
    pub excluded_fraction: f64,
    pub accepted: usize,
    pub grid_points: usize,
    pub critical_gamma_of_choice: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct DynamicsSummary {
    pub horizon: f64,
    pub dt: f64,
    pub drift: f64,
    pub max_deviation: f64,
    pub sobolev: Vec<SobolevBound>,
}

#[derive(Debug, Clone, Serialize)]
pub struct ExperimentReport {
    pub schema_version: u32,
    pub config: ExperimentConfig,
    pub threshold: Threshold,
    pub spectrum: SpectrumSummary,
    pub c_lambda: f64,
    pub measure: Option<MeasureSummary>,
    pub kam: KamReport,
    pub dynamics: Option<DynamicsSummary>,
}

/// Dynamics of one run: direct flow of A0 + P0 against U(omega t) applied to the reduced flow.
pub struct DynamicsOutcome {
    pub times: Vec<f64>,
    pub dt: f64,
    pub drift: f64,
    pub comparison: FlowComparison,
    pub norms: Vec<Vec<f64>>,
}

pub fn run_dynamics(report: &KamReport, x0: usize, periods: f64, dt: Option<f64>, samples: usize, sobolev_s: &[f64]) -> Result<DynamicsOutcome> {
    let n = report.problem.dim();
    let x = basis_state(n, x0)?;
    let w = report.omega[0].abs();
    if w == 0.0 {
        return Err(Error::InvalidInput("omega_1 = 0 has no period".into()));
    }
    let horizon = periods * std::f64::consts::TAU / w;
    let times = sample_times(horizon, samples);
    let dt = dt.unwrap_or_else(|| max_step(&report.problem.lambdas, &report.problem.p0));
    let direct = evolve_direct(&report.problem.lambdas, &report.problem.p0, 1.0, &report.omega, &x, &times, dt, sobolev_s)?;
    let y0 = conjugated_start(&report.run.u_total, &x)?;
    let reduced = evolve_reduced(&report.run.lambdas_inf, &report.run.mus_inf, &report.omega, &y0, &times, sobolev_s)?;
    let comparison = compare_flows(&direct, &reduced, &report.run.u_total, &report.omega)?;
    Ok(DynamicsOutcome { times, dt, drift: direct.drift, comparison, norms: direct.norms })
}

/// Iteration on an assembled problem at a fixed frequency.
pub fn run_kam(problem: Problem, omega: Vec<f64>, sc: &ScheduleConfig, eps: f64, iota: f64) -> Result<KamReport> {
    let a3 = a3_exponent(omega.len(), sc.tau, problem.beta, iota)?;
    let schedule = IterationSchedule::calibrated(eps, sc.s0, sc.gamma0, sc.tau, a3, sc.l_max, sc.stop_tol)?;
    let opts = RunOptions {
        omega: omega.clone(),
        screen: MelnikovScreen { gamma: sc.gamma0, tau: sc.tau, k_screen: sc.k_screen, iota },
        step: StepOptions::with_beta(problem.beta),
        phi_samples: 32,
    };
    let run = run_iteration(&problem, &schedule, &opts)?;
    Ok(KamReport { omega, problem, schedule, run })
}

pub fn run(config: &ExperimentConfig) -> Result<ExperimentReport> {
    config.validate()?;
    let iota = config.iota();
    let pot = Potential::new(config.potential.clone()).map_err(|e| e.in_stage("potential"))?;
    let basis = solve_spectrum_extrapolated(&pot, &config.grid, config.j).map_err(|e| e.in_stage("spectrum"))?;
    let weyl = if config.j >= 20 { weyl_fit(&basis, config.j / 2, config.j).ok() } else { None };
    let spectrum = SpectrumSummary {
        lambdas: basis.lambdas[..config.n].to_vec(),
        weyl,
        orthonormality_defect: basis.orthonormality_defect(),
    };
    let pc = &config.perturbation;
    let assembly = Assembly { ell: pot.ell(), mu: pc.mu, eps: pc.eps, n: config.n, n_freq: config.n_freq, k_phi: config.k_phi };
    let problem = assemble_problem(&basis, &pc.w, &assembly).map_err(|e| e.in_stage("assemble"))?;

    let (omega, measure) = match (&config.omega, &config.omega_grid) {
        (Some(o), _) => (o.clone(), None),
        (None, Some(g)) => {
            let grid = midpoint_grid(config.n_freq, g.points);
            let params = FilterParams { gamma: g.gamma, tau: config.schedule.tau, k_max: g.k_max, iota };
            let m = resonance_filter(&problem.lambdas, &grid, &params).map_err(|e| e.in_stage("measure"))?;
            // the accepted point farthest from exclusion
            let best = *m.accepted.iter().max_by(|&&a, &&b| m.critical_gamma[a].total_cmp(&m.critical_gamma[b]).then(b.cmp(&a))).expect("nonempty");
            let summary = MeasureSummary {
                excluded_fraction: m.excluded_fraction,
                accepted: m.accepted.len(),
                grid_points: m.grid_points,
                critical_gamma_of_choice: m.critical_gamma[best],
            };
            (grid[best].clone(), Some(summary))
        }
        (None, None) => unreachable!("validated"),
    };
    let c_lambda = gap_constant(&problem.lambdas, iota);
    let kam = run_kam(problem, omega, &config.schedule, pc.eps, iota).map_err(|e| e.in_stage("kam"))?;

    let dynamics = match &config.dynamics {
        Some(d) => {
            let out = run_dynamics(&kam, d.x0, d.periods, d.dt, d.samples, &d.sobolev_s).map_err(|e| e.in_stage("dynamics"))?;
            Some(DynamicsSummary {
                horizon: *out.times.last().unwrap(),
                dt: out.dt,
                drift: out.drift,
                max_deviation: out.comparison.max_deviation,
                sobolev: out.comparison.sobolev,
            })
        }
        None => None,
    };
    let report = ExperimentReport {
        schema_version: SCHEMA_VERSION,
        config: config.clone(),
        threshold: threshold(pot.ell())?,
        spectrum,
        c_lambda,
        measure,
        kam,
        dynamics,
    };
    if let Some(dir) = &config.output_dir {
        write_outputs(&report, &basis, dir).map_err(|e| e.in_stage("output"))?;
    }
    Ok(report)
}

fn write_outputs(report: &ExperimentReport, basis: &crate::spectrum::SpectralBasis, dir: &std::path::Path) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    std::fs::write(dir.join("report.json"), serde_json::to_string_pretty(report)? + "\n")?;
    basis.write_eigenvalues_csv(std::fs::File::create(dir.join("eigenvalues.csv"))?)?;
    write_levels_csv(&report.kam.run, std::fs::File::create(dir.join("levels.csv"))?)?;
    Ok(())
}

pub fn write_levels_csv<W: Write>(run: &RunResult, w: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["l", "eps_l", "norm_Pl", "s_l", "min_divisor", "contraction", "hermitian_defect"])?;
    let opt = |v: Option<f64>| v.map(|x| format!("{x:e}")).unwrap_or_default();
    for l in &run.levels {
        out.write_record([
            l.l.to_string(),
            format!("{:e}", l.eps_l),
            format!("{:e}", l.norm_pl),
            format!("{}", l.s_l),
            opt(l.min_divisor),
            opt(l.contraction),
            format!("{:e}", l.hermitian_defect),
        ])?;
    }
    out.flush()?;
    Ok(())
}

pub fn write_measure_csv<W: Write>(grid: &[Vec<f64>], report: &crate::kam::MeasureReport, w: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    let n = grid.first().map(|o| o.len()).unwrap_or(0);
    let mut header: Vec<String> = (1..=n).map(|k| format!("omega_{k}")).collect();
    header.extend(["accepted".to_string(), "critical_gamma".to_string()]);
    out.write_record(&header)?;
    for (i, o) in grid.iter().enumerate() {
        let mut row: Vec<String> = o.iter().map(|v| v.to_string()).collect();
        row.push(report.is_accepted(i).to_string());
        row.push(format!("{:e}", report.critical_gamma[i]));
        out.write_record(&row)?;
    }
    out.flush()?;
    Ok(())
}

pub fn write_dynamics_csv<W: Write>(d: &DynamicsOutcome, sobolev_s: &[f64], w: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    let mut header = vec!["t".to_string(), "deviation".to_string()];
    header.extend(sobolev_s.iter().map(|s| format!("norm_{s}")));
    out.write_record(&header)?;
    for (k, t) in d.times.iter().enumerate() {
        let mut row = vec![t.to_string(), format!("{:e}", d.comparison.deviations[k])];
        row.extend(d.norms[k].iter().map(|v| v.to_string()));
        out.write_record(&row)?;
    }
    out.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn threshold_values() {
        let t = threshold(2.0).unwrap();
        assert!((t.value - (13f64.sqrt() - 1.0) / 2.0).abs() < 1e-15);
        assert!((t.value - 1.30278).abs() < 1e-5);
        assert_eq!(t.branch, ThresholdBranch::Second);
        let t = threshold(1.2).unwrap();
        assert!((t.value - 0.533333333333).abs() < 1e-10);
        assert_eq!(t.branch, ThresholdBranch::First);
        assert!(threshold(1.0).is_err());
        assert!(threshold(f64::NAN).is_err());
    }

    #[test]
    fn branches_meet_at_switch() {
        let ell = 4.0 / 3.0;
        let first = ell - 2.0 / 3.0;
        let second = ((4.0 * ell * ell - 2.0 * ell + 1.0f64).sqrt() - 1.0) / 2.0;
        assert!((first - second).abs() < 1e-12);
        assert!((threshold(ell).unwrap().value - 2.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn mu_above_threshold_rejected() {
        let mut c = ExperimentConfig::example();
        c.perturbation.mu = 1.4;
        let e = ExperimentConfig::from_json(&c.to_json().unwrap()).unwrap_err();
        assert!(e.to_string().contains("1.302"), "{e}");
    }

    #[test]
    fn canonical_config_round_trip() {
        let text = ExperimentConfig::example().to_json().unwrap();
        let back = ExperimentConfig::from_json(&text).unwrap();
        assert_eq!(back.to_json().unwrap(), text);
        assert!(text.contains("\"schema_version\": 1"));
    }

    #[test]
    fn config_rejections() {
        let mut c = ExperimentConfig::example();
        c.schema_version = 2;
        assert!(c.validate().is_err());
        let mut c = ExperimentConfig::example();
        c.omega_grid = Some(OmegaGrid { points: 10, gamma: 0.01, k_max: 5 });
        assert!(c.validate().is_err());
        let mut c = ExperimentConfig::example();
        c.n = 30;
        assert!(c.validate().is_err());
        assert!(ExperimentConfig::from_json(r#"{"schema_version":1}"#).is_err());
    }

    proptest! {
        #[test]
        fn threshold_above_ell_minus_three_quarters(ell in 4.0f64 / 3.0..20.0) {
            prop_assert!(threshold(ell).unwrap().value >= ell - 0.75);
        }

        #[test]
        fn threshold_is_min_of_branches(ell in 1.0001f64..10.0) {
            let t = threshold(ell).unwrap();
            let first = ell - 2.0 / 3.0;
            prop_assert!(t.value <= first + 1e-15);
            prop_assert_eq!(t.branch == ThresholdBranch::First, (first - t.value).abs() < 1e-12 && ell < 4.0 / 3.0);
        }
    }
}
