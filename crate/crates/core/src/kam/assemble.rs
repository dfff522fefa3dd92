//! Perturbation matrices P(phi)_ij = eps * int <x>^mu W(nu x, phi) h_i h_j dx.

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matclass::{weighted_op_norm, ClassNorm, ModeSet, QPMatrix};
use crate::oscint::{OscKernel, WeightSpec};
use crate::spectrum::SpectralBasis;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Trig {
    Sin,
    Cos,
}

impl Trig {
    fn eval(self, t: f64) -> f64 {
        match self {
            Trig::Sin => t.sin(),
            Trig::Cos => t.cos(),
        }
    }
}

/// coeff * x_part(<k, nu x>) * phi_part(<l, phi>)
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrigTerm {
    pub k: Vec<i32>,
    pub x_part: Trig,
    pub l: Vec<i32>,
    pub phi_part: Trig,
    pub coeff: f64,
}

/// |<k, nu>| >= gamma_bar / |k|^tau1 for 0 < |k|_inf <= cutoff.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DiophantineCheck {
    pub gamma_bar: f64,
    pub tau1: f64,
    pub cutoff: u32,
}

impl Default for DiophantineCheck {
    fn default() -> Self {
        Self { gamma_bar: 1e-3, tau1: 2.0, cutoff: 20 }
    }
}

fn default_true() -> bool {
    true
}

/// Finite trigonometric polynomial W(nu x, phi).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PerturbationSpec {
    pub nu: Vec<f64>,
    pub terms: Vec<TrigTerm>,
    /// reject terms even in x
    #[serde(default = "default_true")]
    pub odd_required: bool,
    #[serde(default)]
    pub diophantine: DiophantineCheck,
}

impl PerturbationSpec {
    /// sin(x) cos(phi_1) with nu = 1.
    pub fn sine_cosine(n_freq: usize) -> Self {
        let mut l = vec![0; n_freq];
        l[0] = 1;
        Self {
            nu: vec![1.0],
            terms: vec![TrigTerm { k: vec![1], x_part: Trig::Sin, l, phi_part: Trig::Cos, coeff: 1.0 }],
            odd_required: true,
            diophantine: DiophantineCheck::default(),
        }
    }

    pub fn zero(n_freq: usize) -> Self {
        Self { terms: Vec::new(), ..Self::sine_cosine(n_freq) }
    }

    pub fn eval(&self, x: f64, phi: &[f64]) -> f64 {
        self.terms
            .iter()
            .map(|t| {
                let kx: f64 = t.k.iter().zip(&self.nu).map(|(&k, n)| k as f64 * n).sum::<f64>() * x;
                let lp: f64 = t.l.iter().zip(phi).map(|(&l, p)| l as f64 * p).sum();
                t.coeff * t.x_part.eval(kx) * t.phi_part.eval(lp)
            })
            .sum()
    }

    pub fn validate(&self, n_freq: usize) -> Result<()> {
        if self.nu.is_empty() || self.nu.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("nu must be a nonempty finite vector".into()));
        }
        for (i, t) in self.terms.iter().enumerate() {
            if t.k.len() != self.nu.len() || t.l.len() != n_freq {
                return Err(Error::Dimension(format!("term {i}: k has {} entries, l has {}", t.k.len(), t.l.len())));
            }
            if !t.coeff.is_finite() {
                return Err(Error::InvalidInput(format!("term {i}: coefficient not finite")));
            }
            if self.odd_required && t.x_part == Trig::Cos && t.coeff != 0.0 {
                return Err(Error::NotOdd(i));
            }
        }
        self.check_diophantine()
    }

    fn check_diophantine(&self) -> Result<()> {
        let d = self.nu.len();
        let c = self.diophantine.cutoff as i32;
        let side = (2 * c + 1) as usize;
        let mut k = vec![0i32; d];
        for idx in 0..side.pow(d as u32) {
            let mut r = idx;
            for v in k.iter_mut() {
                *v = (r % side) as i32 - c;
                r /= side;
            }
            let norm: i32 = k.iter().map(|v| v.abs()).sum();
            if norm == 0 {
                continue;
            }
            let dot: f64 = k.iter().zip(&self.nu).map(|(&a, b)| a as f64 * b).sum();
            if dot.abs() < self.diophantine.gamma_bar / (norm as f64).powf(self.diophantine.tau1) {
                return Err(Error::NotDiophantine(k));
            }
        }
        Ok(())
    }
}

/// beta of the class containing P, zero below the lower mu threshold.
pub fn beta_exponent(mu: f64, ell: f64) -> Result<f64> {
    if ell <= 1.0 || mu < 0.0 {
        return Err(Error::InvalidInput(format!("need ell > 1 and mu >= 0, got ell = {ell}, mu = {mu}")));
    }
    let upper = (ell - 2.0 / 3.0).min(((4.0 * ell * ell - 2.0 * ell + 1.0).sqrt() - 1.0) / 2.0);
    if mu >= upper {
        return Err(Error::InvalidInput(format!("mu = {mu} not below {upper}")));
    }
    let lower = (1.0f64 / 3.0).min(((ell * ell + 2.0).sqrt() - ell) / 2.0);
    if mu < lower {
        return Ok(0.0);
    }
    let m = (1.0f64 / 3.0).min((mu + 1.0) / (2.0 * mu + 2.0 * ell + 1.0));
    Ok(((mu - m) / (2.0 * (ell + 1.0))).max(0.0))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Assembly {
    pub ell: f64,
    pub mu: f64,
    pub eps: f64,
    pub n: usize,
    pub n_freq: usize,
    pub k_phi: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Problem {
    pub lambdas: Vec<f64>,
    pub p0: QPMatrix,
    pub beta: f64,
    /// strip norm of P0 at s = 0 in the beta class
    pub p0_norm: f64,
    /// max over modes of |P0(l)| as a map l^2 -> l^2_{-2 delta}, delta = ell/(ell+1)
    pub b3_surrogate: Option<f64>,
}

impl Problem {
    /// A0 with the given perturbation and no spectrum behind it.
    pub fn from_parts(lambdas: Vec<f64>, p0: QPMatrix, beta: f64) -> Result<Self> {
        if p0.dim != lambdas.len() {
            return Err(Error::Dimension(format!("{} eigenvalues vs {}x{} perturbation", lambdas.len(), p0.dim, p0.dim)));
        }
        let p0_norm = p0.strip_norm(ClassNorm::Beta { beta }, 0.0);
        Ok(Self { lambdas, p0, beta, p0_norm, b3_surrogate: None })
    }

    pub fn dim(&self) -> usize {
        self.lambdas.len()
    }
}

pub fn assemble_problem(basis: &SpectralBasis, w: &PerturbationSpec, a: &Assembly) -> Result<Problem> {
    w.validate(a.n_freq)?;
    if a.n == 0 || a.n > basis.len() {
        return Err(Error::Truncation { found: basis.len(), wanted: a.n });
    }
    if !a.eps.is_finite() {
        return Err(Error::InvalidInput("eps not finite".into()));
    }
    let beta = beta_exponent(a.mu, a.ell)?;
    let modes = ModeSet::new(a.n_freq, a.k_phi)?;
    let kernel = OscKernel::new(&WeightSpec::bracket(a.mu), basis)?;
    let mut p0 = QPMatrix::zeros(a.n, modes);
    for t in &w.terms {
        if t.coeff == 0.0 || a.eps == 0.0 {
            continue;
        }
        if t.l.iter().any(|v| v.unsigned_abs() as usize > a.k_phi) {
            return Err(Error::Dimension(format!("mode {:?} outside |l| <= {}", t.l, a.k_phi)));
        }
        let kappa: f64 = t.k.iter().zip(&w.nu).map(|(&k, n)| k as f64 * n).sum();
        let m = kernel.matrix(kappa, a.n)?;
        let real: DMatrix<f64> = match t.x_part {
            Trig::Sin => m.map(|z| z.im),
            Trig::Cos => m.map(|z| z.re),
        };
        let real = real * (a.eps * t.coeff);
        let neg: Vec<i32> = t.l.iter().map(|v| -v).collect();
        let (cp, cm) = match t.phi_part {
            Trig::Cos => (Complex64::new(0.5, 0.0), Complex64::new(0.5, 0.0)),
            Trig::Sin => (Complex64::new(0.0, -0.5), Complex64::new(0.0, 0.5)),
        };
        if t.l.iter().all(|&v| v == 0) {
            if t.phi_part == Trig::Cos {
                *p0.block_mut(&t.l)? += real.map(|v| Complex64::new(v, 0.0));
            }
            continue;
        }
        *p0.block_mut(&t.l)? += real.map(|v| cp * v);
        *p0.block_mut(&neg)? += real.map(|v| cm * v);
    }
    let delta = a.ell / (a.ell + 1.0);
    let mut b3: f64 = 0.0;
    for b in &p0.blocks {
        if b.iter().any(|z| z.norm() > 0.0) {
            b3 = b3.max(weighted_op_norm(b, 0.0, -2.0 * delta)?);
        }
    }
    let lambdas = basis.lambdas[..a.n].to_vec();
    let mut prob = Problem::from_parts(lambdas, p0, beta)?;
    prob.b3_surrogate = Some(b3);
    Ok(prob)
}
