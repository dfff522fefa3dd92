use std::fs::File;
use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use serde_json::json;

use kamred::harness::{self, ExperimentConfig, KamReport, ScheduleConfig};
use kamred::kam::{assemble_problem, midpoint_grid, resonance_filter, Assembly, FilterParams, PerturbationSpec};
use kamred::langer::langer_error_law;
use kamred::oscint::{exponent_fit, scan, WeightSpec};
use kamred::potential::{Potential, PotentialSpec};
use kamred::spectrum::{solve_spectrum_extrapolated, weyl_fit, Grid, SpectralBasis};
use kamred::{Error, Result};

#[derive(Parser)]
#[command(name = "kamred", version, about = "Reducibility numerics for quasi-periodically perturbed anharmonic oscillators")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Basis {
    /// exponent l of V(x) = |x|^{2l}
    #[arg(long, default_value_t = 2.0)]
    ell: f64,
    /// potential as JSON; overrides --ell
    #[arg(long)]
    potential: Option<PathBuf>,
    /// half width of the grid
    #[arg(long = "L", default_value_t = 8.0)]
    half_width: f64,
    #[arg(long, default_value_t = 6401)]
    npts: usize,
    /// eigenpairs to compute
    #[arg(long = "J", default_value_t = 48)]
    j: usize,
}

impl Basis {
    fn potential(&self) -> Result<Potential> {
        match &self.potential {
            Some(p) => PotentialSpec::from_json(&std::fs::read_to_string(p)?),
            None => Potential::new(PotentialSpec::monomial(self.ell)),
        }
    }

    fn solve(&self) -> Result<(Potential, SpectralBasis)> {
        let pot = self.potential()?;
        let basis = solve_spectrum_extrapolated(&pot, &Grid::new(self.half_width, self.npts)?, self.j)?;
        Ok((pot, basis))
    }
}

#[derive(Subcommand)]
enum Command {
    /// Eigenvalues of -d^2/dx^2 + V and the Weyl fit
    Spectrum {
        #[command(flatten)]
        basis: Basis,
        /// eigenvalue table
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// Langer approximation error against the turning point
    LangerCheck {
        #[command(flatten)]
        basis: Basis,
        #[arg(long, value_delimiter = ',', default_values_t = [4usize, 8, 16, 32])]
        ns: Vec<usize>,
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// Oscillatory matrix elements and their decay
    OscintScan {
        #[command(flatten)]
        basis: Basis,
        #[arg(long, default_value_t = 1.0)]
        mu: f64,
        #[arg(long, default_value_t = 1.0)]
        k: f64,
        #[arg(long, default_value_t = 10)]
        n_from: usize,
        #[arg(long, default_value_t = 40)]
        n_to: usize,
        #[arg(long, value_delimiter = ',', default_values_t = [0usize, 1, 2])]
        offsets: Vec<usize>,
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// Reduction iteration for sin(x) cos(phi_1) (or a perturbation file)
    KamRun {
        #[command(flatten)]
        basis: Basis,
        #[command(flatten)]
        kam: KamArgs,
        /// JSON run report (stdout if absent)
        #[arg(long)]
        report: Option<PathBuf>,
        /// per-level table
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// Grid frequencies passing both small-divisor families
    Measure {
        #[command(flatten)]
        basis: Basis,
        #[arg(long = "N", default_value_t = 20)]
        n: usize,
        #[arg(long, default_value_t = 1)]
        n_freq: usize,
        #[arg(long, default_value_t = 1000)]
        grid: usize,
        #[arg(long, default_value_t = 0.01)]
        gamma: f64,
        #[arg(long, default_value_t = 8.0)]
        tau: f64,
        #[arg(long, default_value_t = 30)]
        kmax: u32,
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// Direct flow against the conjugated reduced flow of a saved run
    Dynamics {
        #[arg(long)]
        from_run: PathBuf,
        /// initial state e_{x0}
        #[arg(long, default_value_t = 1)]
        x0: usize,
        /// horizon in basic periods
        #[arg(long = "T", default_value_t = 1000.0)]
        periods: f64,
        #[arg(long)]
        dt: Option<f64>,
        #[arg(long, default_value_t = 1000)]
        samples: usize,
        #[arg(long, value_delimiter = ',', default_values_t = [1.0f64, 2.0])]
        sobolev_s: Vec<f64>,
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// Full pipeline from a config file
    Run {
        #[arg(required_unless_present = "example")]
        config: Option<PathBuf>,
        /// print the example config instead of running
        #[arg(long)]
        example: bool,
    },
    /// Upper limit on mu for a given l
    Threshold {
        #[arg(long)]
        ell: f64,
    },
}

#[derive(Args, Clone)]
struct KamArgs {
    #[arg(long, default_value_t = 1.0)]
    mu: f64,
    #[arg(long, default_value_t = 1e-3)]
    eps: f64,
    #[arg(long = "N", default_value_t = 20)]
    n: usize,
    #[arg(long, default_value_t = 1)]
    n_freq: usize,
    #[arg(long, default_value_t = 6)]
    kphi: usize,
    /// comma-separated frequency vector
    #[arg(long, value_delimiter = ',', conflicts_with = "omega_grid")]
    omega: Vec<f64>,
    /// choose omega from a midpoint grid with this many points per side
    #[arg(long)]
    omega_grid: Option<usize>,
    #[arg(long, default_value_t = 1e-3)]
    gamma: f64,
    #[arg(long, default_value_t = 8.0)]
    tau: f64,
    #[arg(long, default_value_t = 1e-12)]
    stop_tol: f64,
    #[arg(long, default_value_t = 8)]
    lmax: usize,
    /// perturbation as JSON; default sin(x) cos(phi_1)
    #[arg(long)]
    perturbation: Option<PathBuf>,
}

fn sink(path: &Option<PathBuf>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(File::create(p)?),
        None => Box::new(std::io::sink()),
    })
}

fn print<T: Serialize>(v: &T) -> Result<()> {
    println!("{}", serde_json::to_string_pretty(v)?);
    Ok(())
}

fn kam_run(basis_args: &Basis, k: &KamArgs) -> Result<KamReport> {
    let (pot, basis) = basis_args.solve()?;
    let w = match &k.perturbation {
        Some(p) => serde_json::from_str::<PerturbationSpec>(&std::fs::read_to_string(p)?)?,
        None => PerturbationSpec::sine_cosine(k.n_freq),
    };
    let a = Assembly { ell: pot.ell(), mu: k.mu, eps: k.eps, n: k.n, n_freq: k.n_freq, k_phi: k.kphi };
    let problem = assemble_problem(&basis, &w, &a).map_err(|e| e.in_stage("assemble"))?;
    let iota = 2.0 * pot.ell() / (pot.ell() + 1.0);
    let omega = match k.omega_grid {
        Some(m) => {
            let grid = midpoint_grid(k.n_freq, m);
            let params = FilterParams { gamma: k.gamma, tau: k.tau, k_max: k.kphi as u32, iota };
            let r = resonance_filter(&problem.lambdas, &grid, &params).map_err(|e| e.in_stage("measure"))?;
            let best = r.accepted.iter().max_by(|&&a, &&b| r.critical_gamma[a].total_cmp(&r.critical_gamma[b]).then(b.cmp(&a)));
            grid[*best.expect("nonempty")].clone()
        }
        None if k.omega.is_empty() => {
            let mut o = vec![(5f64.sqrt() - 1.0) / 2.0];
            o.extend((1..k.n_freq).map(|d| (2.0 + d as f64).sqrt().fract()));
            o
        }
        None => k.omega.clone(),
    };
    let sc = ScheduleConfig { s0: 0.5, gamma0: k.gamma, tau: k.tau, l_max: k.lmax, stop_tol: k.stop_tol, k_screen: k.kphi as u32 };
    harness::run_kam(problem, omega, &sc, k.eps, iota).map_err(|e| e.in_stage("kam"))
}

fn execute(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Spectrum { basis, csv } => {
            let (_, b) = basis.solve()?;
            b.write_eigenvalues_csv(sink(&csv)?)?;
            let weyl = weyl_fit(&b, (b.len() / 2).max(1), b.len()).ok();
            print(&json!({ "lambdas": b.lambdas, "weyl": weyl, "orthonormality_defect": b.orthonormality_defect() }))
        }
        Command::LangerCheck { basis, ns, csv } => {
            let (pot, b) = basis.solve()?;
            let law = langer_error_law(&pot, &b, &ns)?;
            law.write_csv(sink(&csv)?)?;
            print(&law)
        }
        Command::OscintScan { basis, mu, k, n_from, n_to, offsets, csv } => {
            let (pot, b) = basis.solve()?;
            let f = WeightSpec::bracket(mu);
            let s = scan(&f, k, pot.ell(), &b, n_from..=n_to, &offsets)?;
            s.write_csv(sink(&csv)?)?;
            let fit = exponent_fit(&f, k, &b, n_from..=n_to)?;
            print(&json!({ "exponent_fit": fit, "c_fit": s.c_fit, "envelope_growth": s.envelope_growth }))
        }
        Command::KamRun { basis, kam, report, csv } => {
            let r = kam_run(&basis, &kam)?;
            harness::write_levels_csv(&r.run, sink(&csv)?)?;
            match report {
                Some(p) => std::fs::write(p, serde_json::to_string(&r)?)?,
                None => println!("{}", serde_json::to_string(&r)?),
            }
            Ok(())
        }
        Command::Measure { basis, n, n_freq, grid, gamma, tau, kmax, csv } => {
            let (pot, b) = basis.solve()?;
            if n > b.len() {
                return Err(Error::Truncation { found: b.len(), wanted: n });
            }
            let iota = 2.0 * pot.ell() / (pot.ell() + 1.0);
            let g = midpoint_grid(n_freq, grid);
            let r = resonance_filter(&b.lambdas[..n], &g, &FilterParams { gamma, tau, k_max: kmax, iota })?;
            harness::write_measure_csv(&g, &r, sink(&csv)?)?;
            print(&json!({ "excluded_fraction": r.excluded_fraction, "accepted": r.accepted.len(), "grid_points": r.grid_points }))
        }
        Command::Dynamics { from_run, x0, periods, dt, samples, sobolev_s, csv } => {
            let r = KamReport::from_json(&std::fs::read_to_string(from_run)?)?;
            let d = harness::run_dynamics(&r, x0, periods, dt, samples, &sobolev_s)?;
            harness::write_dynamics_csv(&d, &sobolev_s, sink(&csv)?)?;
            print(&json!({ "dt": d.dt, "drift": d.drift, "max_deviation": d.comparison.max_deviation, "sobolev": d.comparison.sobolev }))
        }
        Command::Run { config, example } => {
            if example {
                print!("{}", ExperimentConfig::example().to_json()?);
                return Ok(());
            }
            let path = config.ok_or_else(|| Error::InvalidInput("config path missing".into()))?;
            let c = ExperimentConfig::from_json(&std::fs::read_to_string(path)?)?;
            print(&harness::run(&c)?)
        }
        Command::Threshold { ell } => print(&harness::threshold(ell)?),
    }
}

fn main() -> ExitCode {
    match execute(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let stage = match &e {
                Error::Stage { stage, .. } => Some(*stage),
                _ => None,
            };
            let inner = match &e {
                Error::Stage { source, .. } => source.kind(),
                other => other.kind(),
            };
            eprintln!("{}", json!({ "error": inner, "stage": stage, "message": e.to_string() }));
            ExitCode::from(2)
        }
    }
}
