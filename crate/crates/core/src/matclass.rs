//! Truncated weighted matrix classes and quasi-periodic matrix functions on the torus.

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Finite section of an infinite matrix; entry (i-1, j-1) holds A_i^j.
pub type TruncatedMatrix = DMatrix<Complex64>;

const ZERO: Complex64 = Complex64::new(0.0, 0.0);

/// sup |A_i^j| (ij)^{-beta}.
pub fn norm_beta(a: &TruncatedMatrix, beta: f64) -> f64 {
    let mut m: f64 = 0.0;
    for j in 0..a.ncols() {
        for i in 0..a.nrows() {
            let v = a[(i, j)].norm();
            if v > 0.0 {
                m = m.max(v * (((i + 1) * (j + 1)) as f64).powf(-beta));
            }
        }
    }
    m
}

fn plus_weight(i: usize, j: usize, beta: f64, iota: f64) -> f64 {
    let (fi, fj) = (i as f64, j as f64);
    (fi * fj).powf(-beta) * (1.0 + (fi - fj).abs()) * (fi.powf(iota - 1.0) + fj.powf(iota - 1.0))
}

/// sup |A_i^j| (ij)^{-beta} (1 + |i-j|) (i^{iota-1} + j^{iota-1}).
pub fn norm_beta_plus(a: &TruncatedMatrix, beta: f64, iota: f64) -> f64 {
    let mut m: f64 = 0.0;
    for j in 0..a.ncols() {
        for i in 0..a.nrows() {
            let v = a[(i, j)].norm();
            if v > 0.0 {
                m = m.max(v * plus_weight(i + 1, j + 1, beta, iota));
            }
        }
    }
    m
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "class", rename_all = "kebab-case")]
pub enum ClassNorm {
    Beta { beta: f64 },
    BetaPlus { beta: f64, iota: f64 },
}

impl ClassNorm {
    pub fn of(&self, a: &TruncatedMatrix) -> f64 {
        match *self {
            ClassNorm::Beta { beta } => norm_beta(a, beta),
            ClassNorm::BetaPlus { beta, iota } => norm_beta_plus(a, beta, iota),
        }
    }
}

/// Largest singular value of the map l^2_source -> l^2_target with weights j^s.
pub fn weighted_op_norm(a: &TruncatedMatrix, source: f64, target: f64) -> Result<f64> {
    let (r, c) = a.shape();
    if r == 0 || c == 0 {
        return Ok(0.0);
    }
    let m = DMatrix::from_fn(r, c, |i, j| a[(i, j)] * ((i + 1) as f64).powf(0.5 * target) * ((j + 1) as f64).powf(-0.5 * source));
    let mh = m.adjoint();
    let mut v = DMatrix::from_fn(c, 1, |j, _| Complex64::new(1.0 + 0.1 * (j as f64).sin(), 0.05 * (j as f64).cos()));
    let mut prev = 0.0;
    for it in 0..20000 {
        let w = &mh * (&m * &v);
        let nw = w.norm();
        let nv = v.norm();
        if nw == 0.0 {
            return Ok(0.0);
        }
        // Rayleigh quotient of M*M
        let rq = (v.adjoint() * &w)[(0, 0)].re / (nv * nv);
        if it > 0 && (rq - prev).abs() <= 1e-8 * rq.abs() * 1e-2 {
            return Ok(rq.max(0.0).sqrt());
        }
        prev = rq;
        v = w.unscale(nw);
    }
    Err(Error::IterationLimit(20000))
}

/// Fourier modes l in Z^n with |l|_inf <= k_phi.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModeSet {
    pub n_freq: usize,
    pub k_phi: usize,
}

impl ModeSet {
    pub fn new(n_freq: usize, k_phi: usize) -> Result<Self> {
        if n_freq == 0 {
            return Err(Error::InvalidInput("torus dimension must be at least 1".into()));
        }
        Ok(Self { n_freq, k_phi })
    }

    fn side(&self) -> usize {
        2 * self.k_phi + 1
    }

    pub fn len(&self) -> usize {
        self.side().pow(self.n_freq as u32)
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn mode(&self, mut idx: usize) -> Vec<i32> {
        let s = self.side();
        (0..self.n_freq)
            .map(|_| {
                let d = (idx % s) as i32 - self.k_phi as i32;
                idx /= s;
                d
            })
            .collect()
    }

    pub fn index(&self, l: &[i32]) -> Option<usize> {
        if l.len() != self.n_freq {
            return None;
        }
        let k = self.k_phi as i32;
        let mut idx = 0;
        for &d in l.iter().rev() {
            if d.abs() > k {
                return None;
            }
            idx = idx * self.side() + (d + k) as usize;
        }
        Some(idx)
    }

    pub fn zero(&self) -> usize {
        (self.len() - 1) / 2
    }

    /// Index of -l; the layout is symmetric so this is a reflection.
    pub fn neg(&self, idx: usize) -> usize {
        self.len() - 1 - idx
    }

    /// l^1 length |l|.
    pub fn l1(&self, idx: usize) -> f64 {
        self.mode(idx).iter().map(|d| d.unsigned_abs() as f64).sum()
    }

    pub fn dot(&self, idx: usize, omega: &[f64]) -> f64 {
        self.mode(idx).iter().zip(omega).map(|(&d, w)| d as f64 * w).sum()
    }

    fn phase(&self, idx: usize, phi: &[f64]) -> Complex64 {
        Complex64::from_polar(1.0, self.dot(idx, phi))
    }

    /// Index of l1 + l2 if it stays in the box.
    fn sum_index(&self, a: usize, b: usize) -> Option<usize> {
        let s = self.side();
        let k = self.k_phi as i64;
        let (mut a, mut b) = (a, b);
        let mut idx = 0usize;
        let mut mul = 1usize;
        for _ in 0..self.n_freq {
            let d = (a % s) as i64 + (b % s) as i64 - 2 * k;
            if d.abs() > k {
                return None;
            }
            idx += (d + k) as usize * mul;
            mul *= s;
            a /= s;
            b /= s;
        }
        Some(idx)
    }
}

/// Scalar function on the torus, truncated Fourier series.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TorusFunction {
    pub modes: ModeSet,
    pub coeffs: Vec<Complex64>,
}

impl TorusFunction {
    pub fn zeros(modes: ModeSet) -> Self {
        Self { modes, coeffs: vec![ZERO; modes.len()] }
    }

    pub fn constant(modes: ModeSet, c: Complex64) -> Self {
        let mut f = Self::zeros(modes);
        f.coeffs[modes.zero()] = c;
        f
    }

    pub fn coeff(&self, l: &[i32]) -> Complex64 {
        self.modes.index(l).map_or(ZERO, |i| self.coeffs[i])
    }

    pub fn set(&mut self, l: &[i32], c: Complex64) -> Result<()> {
        let i = self.modes.index(l).ok_or_else(|| Error::Dimension(format!("mode {l:?} outside the box")))?;
        self.coeffs[i] = c;
        Ok(())
    }

    pub fn at(&self, phi: &[f64]) -> Complex64 {
        self.coeffs.iter().enumerate().filter(|(_, c)| **c != ZERO).map(|(i, c)| c * self.modes.phase(i, phi)).sum()
    }

    pub fn mean(&self) -> Complex64 {
        self.coeffs[self.modes.zero()]
    }

    pub fn without_mean(&self) -> Self {
        let mut f = self.clone();
        f.coeffs[self.modes.zero()] = ZERO;
        f
    }

    /// Largest |c(-l) - conj c(l)|; zero for functions real on real phi.
    pub fn reality_defect(&self) -> f64 {
        (0..self.coeffs.len())
            .map(|i| (self.coeffs[self.modes.neg(i)] - self.coeffs[i].conj()).norm())
            .fold(0.0, f64::max)
    }

    /// sum e^{|l| s} |c(l)|
    pub fn strip_norm(&self, s: f64) -> f64 {
        self.coeffs.iter().enumerate().map(|(i, c)| (self.modes.l1(i) * s).exp() * c.norm()).sum()
    }

    /// d/dt f(omega t) in Fourier: mode l times i <l, omega>.
    pub fn time_derivative(&self, omega: &[f64]) -> Self {
        let mut f = self.clone();
        for (i, c) in f.coeffs.iter_mut().enumerate() {
            *c *= Complex64::new(0.0, self.modes.dot(i, omega));
        }
        f
    }

    pub fn sub(&self, other: &Self) -> Self {
        Self { modes: self.modes, coeffs: self.coeffs.iter().zip(&other.coeffs).map(|(a, b)| a - b).collect() }
    }
}

/// Matrix function on the torus, block per Fourier mode.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(into = "QPMatrixData", try_from = "QPMatrixData")]
pub struct QPMatrix {
    pub modes: ModeSet,
    pub dim: usize,
    pub blocks: Vec<TruncatedMatrix>,
}

/// Serialized form: blocks in mode order, entries row-major as [re, im].
#[derive(Serialize, Deserialize)]
struct QPMatrixData {
    modes: ModeSet,
    dim: usize,
    blocks: Vec<Vec<Complex64>>,
}

impl From<QPMatrix> for QPMatrixData {
    fn from(q: QPMatrix) -> Self {
        let blocks = q.blocks.iter().map(|b| b.transpose().iter().cloned().collect()).collect();
        Self { modes: q.modes, dim: q.dim, blocks }
    }
}

impl TryFrom<QPMatrixData> for QPMatrix {
    type Error = Error;

    fn try_from(d: QPMatrixData) -> Result<Self> {
        if d.blocks.len() != d.modes.len() || d.blocks.iter().any(|b| b.len() != d.dim * d.dim) {
            return Err(Error::Dimension(format!("{} blocks of size {}", d.blocks.len(), d.dim)));
        }
        let blocks = d.blocks.iter().map(|b| DMatrix::from_row_slice(d.dim, d.dim, b)).collect();
        Ok(Self { modes: d.modes, dim: d.dim, blocks })
    }
}

fn is_zero(m: &TruncatedMatrix) -> bool {
    m.iter().all(|v| *v == ZERO)
}

/// max column sum, an algebra norm used for scaling
fn one_norm(m: &TruncatedMatrix) -> f64 {
    m.column_iter().map(|c| c.iter().map(|v| v.norm()).sum::<f64>()).fold(0.0, f64::max)
}

/// Largest entry modulus.
pub fn max_abs(m: &TruncatedMatrix) -> f64 {
    m.iter().map(|v| v.norm()).fold(0.0, f64::max)
}

impl QPMatrix {
    pub fn zeros(dim: usize, modes: ModeSet) -> Self {
        Self { modes, dim, blocks: vec![DMatrix::zeros(dim, dim); modes.len()] }
    }

    pub fn identity(dim: usize, modes: ModeSet) -> Self {
        Self::constant(DMatrix::identity(dim, dim), modes)
    }

    pub fn constant(m: TruncatedMatrix, modes: ModeSet) -> Self {
        let mut q = Self::zeros(m.nrows(), modes);
        q.blocks[modes.zero()] = m;
        q
    }

    pub fn block(&self, l: &[i32]) -> Option<&TruncatedMatrix> {
        self.modes.index(l).map(|i| &self.blocks[i])
    }

    pub fn block_mut(&mut self, l: &[i32]) -> Result<&mut TruncatedMatrix> {
        let i = self.modes.index(l).ok_or_else(|| Error::Dimension(format!("mode {l:?} outside the box")))?;
        Ok(&mut self.blocks[i])
    }

    pub fn at(&self, phi: &[f64]) -> TruncatedMatrix {
        let mut out = DMatrix::zeros(self.dim, self.dim);
        for (i, b) in self.blocks.iter().enumerate() {
            if !is_zero(b) {
                out += b * self.modes.phase(i, phi);
            }
        }
        out
    }

    /// Pointwise adjoint for real phi: block(l) -> block(-l)^*.
    pub fn adjoint(&self) -> Self {
        let blocks = (0..self.blocks.len()).map(|i| self.blocks[self.modes.neg(i)].adjoint()).collect();
        Self { modes: self.modes, dim: self.dim, blocks }
    }

    pub fn scale(&self, c: Complex64) -> Self {
        Self { modes: self.modes, dim: self.dim, blocks: self.blocks.iter().map(|b| b * c).collect() }
    }

    fn check_same(&self, other: &Self) -> Result<()> {
        if self.dim != other.dim || self.modes != other.modes {
            return Err(Error::Dimension(format!(
                "{}x{} on {:?} vs {}x{} on {:?}",
                self.dim, self.dim, self.modes, other.dim, other.dim, other.modes
            )));
        }
        Ok(())
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        self.check_same(other)?;
        let blocks = self.blocks.iter().zip(&other.blocks).map(|(a, b)| a + b).collect();
        Ok(Self { modes: self.modes, dim: self.dim, blocks })
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.add(&other.scale(Complex64::new(-1.0, 0.0)))
    }

    /// Largest entry of Q(-l) - Q(l)^*, zero for Hermitian-for-real-phi.
    pub fn hermitian_defect(&self) -> f64 {
        self.sub(&self.adjoint()).map(|d| d.max_entry()).unwrap_or(f64::INFINITY)
    }

    pub fn anti_hermitian_part(&self) -> Self {
        self.sub(&self.adjoint()).expect("same shape").scale(Complex64::new(0.5, 0.0))
    }

    pub fn max_entry(&self) -> f64 {
        self.blocks.iter().map(max_abs).fold(0.0, f64::max)
    }

    /// sum_l e^{|l| s} |Q(l)| in the chosen class norm.
    pub fn strip_norm(&self, norm: ClassNorm, s: f64) -> f64 {
        strip_norm(self, norm, s)
    }

    /// Mode l multiplied by i <l, omega>.
    pub fn time_derivative(&self, omega: &[f64]) -> Self {
        let blocks = self
            .blocks
            .iter()
            .enumerate()
            .map(|(i, b)| b * Complex64::new(0.0, self.modes.dot(i, omega)))
            .collect();
        Self { modes: self.modes, dim: self.dim, blocks }
    }

    /// Diagonal entries as torus functions, one per row.
    pub fn diagonal(&self) -> Vec<TorusFunction> {
        (0..self.dim)
            .map(|i| TorusFunction { modes: self.modes, coeffs: self.blocks.iter().map(|b| b[(i, i)]).collect() })
            .collect()
    }

    pub fn without_diagonal(&self) -> Self {
        let mut q = self.clone();
        for b in q.blocks.iter_mut() {
            b.fill_diagonal(ZERO);
        }
        q
    }

    pub fn entry(&self, i: usize, j: usize) -> TorusFunction {
        TorusFunction { modes: self.modes, coeffs: self.blocks.iter().map(|b| b[(i, j)]).collect() }
    }

    /// Same function on a larger or smaller mode box; modes outside are dropped.
    pub fn with_cutoff(&self, k_phi: usize) -> Self {
        let modes = ModeSet { n_freq: self.modes.n_freq, k_phi };
        let mut q = Self::zeros(self.dim, modes);
        for (i, b) in self.blocks.iter().enumerate() {
            if let Some(j) = modes.index(&self.modes.mode(i)) {
                q.blocks[j] = b.clone();
            }
        }
        q
    }

    fn algebra_norm(&self) -> f64 {
        self.blocks.iter().map(one_norm).sum()
    }
}

/// Fourier majorant of the strip norm.
pub fn strip_norm(q: &QPMatrix, norm: ClassNorm, s: f64) -> f64 {
    q.blocks
        .iter()
        .enumerate()
        .filter(|(_, b)| !is_zero(b))
        .map(|(i, b)| (q.modes.l1(i) * s).exp() * norm.of(b))
        .sum()
}

/// Convolution product truncated to the common box, with the Frobenius mass of dropped pairs.
pub fn qp_product_with_tail(a: &QPMatrix, b: &QPMatrix) -> Result<(QPMatrix, f64)> {
    a.check_same(b)?;
    let modes = a.modes;
    let nz_a: Vec<usize> = (0..a.blocks.len()).filter(|&i| !is_zero(&a.blocks[i])).collect();
    let nz_b: Vec<usize> = (0..b.blocks.len()).filter(|&i| !is_zero(&b.blocks[i])).collect();
    let mut buckets: Vec<Vec<(usize, usize)>> = vec![Vec::new(); modes.len()];
    let mut tail = 0.0;
    for &i in &nz_a {
        for &j in &nz_b {
            match modes.sum_index(i, j) {
                Some(k) => buckets[k].push((i, j)),
                None => tail += a.blocks[i].norm() * b.blocks[j].norm(),
            }
        }
    }
    let blocks = buckets
        .par_iter()
        .map(|pairs| {
            let mut acc = DMatrix::zeros(a.dim, a.dim);
            for &(i, j) in pairs {
                acc.gemm(Complex64::new(1.0, 0.0), &a.blocks[i], &b.blocks[j], Complex64::new(1.0, 0.0));
            }
            acc
        })
        .collect();
    Ok((QPMatrix { modes, dim: a.dim, blocks }, tail))
}

pub fn qp_product(a: &QPMatrix, b: &QPMatrix) -> Result<QPMatrix> {
    qp_product_with_tail(a, b).map(|(q, _)| q)
}

/// e^B by scaling and squaring with a Taylor core, all in the convolution algebra.
pub fn qp_exp(b: &QPMatrix) -> Result<QPMatrix> {
    let norm = b.algebra_norm();
    let squarings = if norm > 0.5 { (norm / 0.5).log2().ceil() as u32 } else { 0 };
    let scaled = b.scale(Complex64::new(0.5f64.powi(squarings as i32), 0.0));
    let mut sum = QPMatrix::identity(b.dim, b.modes);
    let mut term = QPMatrix::identity(b.dim, b.modes);
    for k in 1..=30 {
        term = qp_product(&term, &scaled)?.scale(Complex64::new(1.0 / k as f64, 0.0));
        sum = sum.add(&term)?;
        if term.algebra_norm() <= 1e-18 * sum.algebra_norm() {
            break;
        }
    }
    for _ in 0..squarings {
        sum = qp_product(&sum, &sum)?;
    }
    Ok(sum)
}

/// |k^iota - j^iota| >= (1/2)|k - j| (k^{iota-1} + j^{iota-1}), with rounding slack.
pub fn power_gap_holds(k: u32, j: u32, iota: f64) -> bool {
    let (k, j) = (k as f64, j as f64);
    let lhs = (k.powf(iota) - j.powf(iota)).abs();
    let rhs = 0.5 * (k - j).abs() * (k.powf(iota - 1.0) + j.powf(iota - 1.0));
    lhs >= rhs * (1.0 - 1e-12)
}

/// First (k, j) with k, j <= max violating the power gap, if any.
pub fn power_gap_violation(max: u32, iota: f64) -> Option<(u32, u32)> {
    (1..=max).flat_map(|k| (1..=max).map(move |j| (k, j))).find(|&(k, j)| !power_gap_holds(k, j, iota))
}

/// Random matrix with |A|_beta <= 1 (or |A|_beta^+ <= 1 when `plus`).
pub fn random_class_matrix<R: Rng>(rng: &mut R, n: usize, beta: f64, iota: f64, plus: bool) -> TruncatedMatrix {
    DMatrix::from_fn(n, n, |i, j| {
        let r: f64 = rng.gen::<f64>().sqrt();
        let t: f64 = rng.gen::<f64>() * std::f64::consts::TAU;
        let cap = if plus {
            1.0 / plus_weight(i + 1, j + 1, beta, iota)
        } else {
            (((i + 1) * (j + 1)) as f64).powf(beta)
        };
        Complex64::from_polar(r * cap, t)
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct AlgebraReport {
    pub trials: usize,
    pub n: usize,
    pub beta: f64,
    pub iota: f64,
    /// fitted C in |AB|_beta <= C |A|_beta |B|_beta^+ (and with the factors swapped)
    pub c_mixed: f64,
    /// fitted C in |AB|_beta^+ <= C |A|_beta^+ |B|_beta^+
    pub c_plus: f64,
    /// fitted C in ||A||_{B(l^2_s)} <= C |A|_beta^+, per tested s
    pub c_operator: Vec<(f64, f64)>,
    pub power_gap_violation: Option<(u32, u32)>,
    pub failures: Vec<String>,
}

impl AlgebraReport {
    pub fn passed(&self) -> bool {
        self.failures.is_empty()
    }
}

/// Random-trial check of the product and operator-norm inequalities, plus the exhaustive power gap.
pub fn verify_algebra(trials: usize, n: usize, beta: f64, iota: f64, seed: u64, cap: f64) -> Result<AlgebraReport> {
    if !(beta >= 0.0 && 2.0 * beta < iota - 1.0) {
        return Err(Error::InvalidInput(format!("need 0 <= 2 beta < iota - 1, got beta = {beta}, iota = {iota}")));
    }
    let s_max = 2.0 * iota - 2.0 * beta - 1.0;
    let ss = [0.0, 0.5 * s_max];
    let ratios: Vec<[f64; 5]> = (0..trials)
        .into_par_iter()
        .map(|t| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(t as u64));
            let a = random_class_matrix(&mut rng, n, beta, iota, false);
            let ap = random_class_matrix(&mut rng, n, beta, iota, true);
            let bp = random_class_matrix(&mut rng, n, beta, iota, true);
            let na = norm_beta(&a, beta);
            let (nap, nbp) = (norm_beta_plus(&ap, beta, iota), norm_beta_plus(&bp, beta, iota));
            let mixed = (norm_beta(&(&a * &bp), beta) / (na * nbp)).max(norm_beta(&(&bp * &a), beta) / (na * nbp));
            let plus = norm_beta_plus(&(&ap * &bp), beta, iota) / (nap * nbp);
            let op0 = weighted_op_norm(&ap, ss[0], ss[0])? / nap;
            let op1 = weighted_op_norm(&ap, ss[1], ss[1])? / nap;
            Ok([mixed, plus, op0, op1, 0.0])
        })
        .collect::<Result<_>>()?;
    let fold = |k: usize| ratios.iter().map(|r| r[k]).fold(0.0, f64::max);
    let mut report = AlgebraReport {
        trials,
        n,
        beta,
        iota,
        c_mixed: fold(0),
        c_plus: fold(1),
        c_operator: vec![(ss[0], fold(2)), (ss[1], fold(3))],
        power_gap_violation: power_gap_violation(200, iota),
        failures: Vec::new(),
    };
    if report.c_mixed > cap {
        report.failures.push(format!("mixed product constant {} exceeds {cap}", report.c_mixed));
    }
    if report.c_plus > cap {
        report.failures.push(format!("plus product constant {} exceeds {cap}", report.c_plus));
    }
    for &(s, c) in &report.c_operator {
        if c > cap {
            report.failures.push(format!("operator constant {c} at s = {s} exceeds {cap}"));
        }
    }
    if let Some((k, j)) = report.power_gap_violation {
        report.failures.push(format!("power gap fails at k = {k}, j = {j}"));
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::Rng;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn random_qp(rng: &mut ChaCha8Rng, dim: usize, modes: ModeSet, decay: f64, anti: bool) -> QPMatrix {
        let mut q = QPMatrix::zeros(dim, modes);
        for i in 0..modes.len() {
            let w = (-decay * modes.l1(i)).exp();
            q.blocks[i] = DMatrix::from_fn(dim, dim, |_, _| c(rng.gen::<f64>() - 0.5, rng.gen::<f64>() - 0.5) * w);
        }
        if anti {
            q.anti_hermitian_part()
        } else {
            q
        }
    }

    #[test]
    fn beta_norm_examples() {
        let id: TruncatedMatrix = DMatrix::identity(8, 8);
        assert_eq!(norm_beta(&id, 0.7), 1.0);
        let mut a = DMatrix::zeros(4, 4);
        a[(1, 2)] = c(6.0, 0.0);
        assert!((norm_beta(&a, 0.5) - 6f64.sqrt()).abs() < 1e-14);
        assert_eq!(norm_beta(&DMatrix::zeros(5, 5), 0.3), 0.0);
        assert!((norm_beta_plus(&id, 0.0, 4.0 / 3.0) - 4.0).abs() < 1e-12);
        let mut b = DMatrix::zeros(3, 3);
        b[(0, 1)] = c(1.0, 0.0);
        assert!((norm_beta_plus(&b, 0.0, 4.0 / 3.0) - 2.0 * (1.0 + 2f64.cbrt())).abs() < 1e-12);
        assert_eq!(norm_beta_plus(&DMatrix::zeros(3, 3), 0.1, 1.5), 0.0);
    }

    #[test]
    fn strip_norm_examples() {
        let modes = ModeSet::new(1, 3).unwrap();
        let mut q = QPMatrix::zeros(2, modes);
        assert_eq!(strip_norm(&q, ClassNorm::Beta { beta: 0.0 }, 0.5), 0.0);
        let mut blk = DMatrix::zeros(2, 2);
        blk[(0, 0)] = c(1.0, 0.0);
        *q.block_mut(&[1]).unwrap() = blk.clone();
        *q.block_mut(&[-1]).unwrap() = blk.clone();
        assert!((strip_norm(&q, ClassNorm::Beta { beta: 0.0 }, 0.5) - 2.0 * 0.5f64.exp()).abs() < 1e-14);
        let k = QPMatrix::constant(blk.scale(3.0).map(|v| v), modes);
        assert_eq!(strip_norm(&k, ClassNorm::Beta { beta: 0.0 }, 7.0), 3.0);
    }

    #[test]
    fn operator_norm_examples() {
        let d = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![c(1.0, 0.0), c(-3.0, 0.0), c(0.0, 2.0)]));
        assert!((weighted_op_norm(&d, 0.7, 0.7).unwrap() - 3.0).abs() < 1e-7);
        let mut a = DMatrix::zeros(5, 5);
        a[(2, 3)] = c(1.0, 0.0);
        let (s, t) = (0.8, -0.4);
        let want = 3f64.powf(t / 2.0) * 4f64.powf(-s / 2.0);
        assert!((weighted_op_norm(&a, s, t).unwrap() - want).abs() < 1e-10);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..5 {
            let m = random_class_matrix(&mut rng, 12, 0.1, 1.3, false);
            let svd = m.clone().svd(false, false).singular_values[0];
            assert!((weighted_op_norm(&m, 0.0, 0.0).unwrap() - svd).abs() < 1e-7 * svd);
        }
    }

    #[test]
    fn power_gap_examples() {
        assert!(power_gap_holds(4, 1, 4.0 / 3.0));
        let lhs = 4f64.powf(4.0 / 3.0) - 1.0;
        let rhs = 1.5 * (4f64.cbrt() + 1.0);
        assert!((lhs - 5.3496).abs() < 1e-4 && (rhs - 3.881).abs() < 1e-3);
        assert!(power_gap_holds(7, 7, 1.5));
        for iota in [1.2, 4.0 / 3.0, 1.5] {
            assert_eq!(power_gap_violation(200, iota), None);
        }
    }

    #[test]
    fn random_products_obey_one_constant() {
        let r = verify_algebra(200, 32, 5.0 / 42.0, 4.0 / 3.0, 11, 10.0).unwrap();
        assert!(r.passed(), "{r:?}");
        assert!(verify_algebra(1, 4, 0.3, 1.4, 0, 10.0).is_err());
    }

    #[test]
    fn exp_of_zero_and_of_constants() {
        let modes = ModeSet::new(1, 2).unwrap();
        assert_eq!(qp_exp(&QPMatrix::zeros(3, modes)).unwrap(), QPMatrix::identity(3, modes));
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let b = random_qp(&mut rng, 4, ModeSet::new(1, 0).unwrap(), 0.0, true).scale(c(3.0, 0.0));
        let e = qp_exp(&b).unwrap().with_cutoff(2);
        let dense = b.blocks[0].clone().exp();
        assert!(max_abs(&(&e.blocks[modes.zero()] - dense)) < 1e-10);
        assert!(e.with_cutoff(0).with_cutoff(2) == e);
    }

    #[test]
    fn exp_is_unitary_and_invertible() {
        let modes = ModeSet::new(1, 12).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let b = random_qp(&mut rng, 6, modes, 4.0, true);
        let e = qp_exp(&b).unwrap();
        let einv = qp_exp(&b.scale(c(-1.0, 0.0))).unwrap();
        let id: TruncatedMatrix = DMatrix::identity(6, 6);
        for k in 0..16 {
            let phi = [std::f64::consts::TAU * k as f64 / 16.0];
            let u = e.at(&phi);
            assert!(max_abs(&(u.adjoint() * &u - &id)) < 1e-9);
            assert!(max_abs(&(u * einv.at(&phi) - &id)) < 1e-9);
        }
    }

    #[test]
    fn exp_minus_identity_is_controlled() {
        let modes = ModeSet::new(1, 10).unwrap();
        let (beta, iota, s) = (5.0 / 42.0, 4.0 / 3.0, 0.2);
        let norm = ClassNorm::BetaPlus { beta, iota };
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let mut c_fit: f64 = 0.0;
        for t in 0..40 {
            let b = random_qp(&mut rng, 10, modes, 3.0, true);
            let nb = strip_norm(&b, norm, s);
            let b = b.scale(c(0.02 * (1 + t % 5) as f64 / nb, 0.0));
            let nb = strip_norm(&b, norm, s);
            let d = qp_exp(&b).unwrap().sub(&QPMatrix::identity(10, modes)).unwrap();
            c_fit = c_fit.max((strip_norm(&d, norm, s) / nb).ln() / nb);
        }
        assert!(c_fit < 50.0, "{c_fit}");
    }

    #[test]
    fn strip_norm_is_submultiplicative() {
        let modes = ModeSet::new(2, 3).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let a = random_qp(&mut rng, 5, modes, 1.0, false);
        let b = random_qp(&mut rng, 5, modes, 1.0, false);
        let (p, tail) = qp_product_with_tail(&a, &b).unwrap();
        assert!(tail > 0.0);
        let norm = ClassNorm::Beta { beta: 0.0 };
        // for beta = 0 the entry sup norm is not submultiplicative; compare with the dimension factor
        assert!(strip_norm(&p, norm, 0.3) <= 5.0 * strip_norm(&a, norm, 0.3) * strip_norm(&b, norm, 0.3));
        let full = qp_product(&a.with_cutoff(6), &b.with_cutoff(6)).unwrap().with_cutoff(3);
        assert!((p.sub(&full).unwrap()).max_entry() < 1e-12);
    }

    #[test]
    fn product_matches_pointwise_product_when_nothing_is_dropped() {
        let small = ModeSet::new(1, 2).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let a = random_qp(&mut rng, 3, small, 0.5, false).with_cutoff(4);
        let b = random_qp(&mut rng, 3, small, 0.5, false).with_cutoff(4);
        let (p, tail) = qp_product_with_tail(&a, &b).unwrap();
        assert_eq!(tail, 0.0);
        for phi in [0.0, 0.7, 2.9] {
            assert!(max_abs(&(p.at(&[phi]) - a.at(&[phi]) * b.at(&[phi]))) < 1e-12);
        }
        assert!(qp_product(&a, &QPMatrix::zeros(4, small)).is_err());
    }

    #[test]
    fn qp_matrix_json_round_trip() {
        let modes = ModeSet::new(2, 1).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let q = random_qp(&mut rng, 3, modes, 0.3, false);
        let back: QPMatrix = serde_json::from_str(&serde_json::to_string(&q).unwrap()).unwrap();
        assert_eq!(back, q);
        let bad = r#"{"modes":{"n_freq":1,"k_phi":0},"dim":2,"blocks":[[[1.0,0.0]]]}"#;
        assert!(serde_json::from_str::<QPMatrix>(bad).is_err());
    }

    #[test]
    fn torus_function_basics() {
        let modes = ModeSet::new(1, 3).unwrap();
        let mut f = TorusFunction::zeros(modes);
        f.set(&[1], c(0.5, 0.0)).unwrap();
        f.set(&[-1], c(0.5, 0.0)).unwrap();
        assert!((f.at(&[0.3]).re - 0.3f64.cos()).abs() < 1e-15);
        assert_eq!(f.reality_defect(), 0.0);
        assert!((f.strip_norm(1.0) - 1f64.exp()).abs() < 1e-14);
        let d = f.time_derivative(&[2.0]);
        assert!((d.at(&[0.3]).re + 2.0 * 0.3f64.sin()).abs() < 1e-14);
        assert!(f.set(&[4], c(1.0, 0.0)).is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(48))]
        #[test]
        fn mode_index_round_trips(n in 1usize..4, k in 0usize..5, seed in 0u64..1000) {
            let modes = ModeSet::new(n, k).unwrap();
            let idx = (seed as usize) % modes.len();
            let l = modes.mode(idx);
            prop_assert_eq!(modes.index(&l), Some(idx));
            let neg: Vec<i32> = l.iter().map(|d| -d).collect();
            prop_assert_eq!(modes.index(&neg), Some(modes.neg(idx)));
        }

        #[test]
        fn norms_grow_with_truncation(n in 2usize..12, beta in 0.0f64..0.5, iota in 1.05f64..2.0, seed in 0u64..100) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let big = random_class_matrix(&mut rng, n + 3, beta, iota, false);
            let small = big.view((0, 0), (n, n)).into_owned();
            prop_assert!(norm_beta(&small, beta) <= norm_beta(&big, beta));
            prop_assert!(norm_beta_plus(&small, beta, iota) <= norm_beta_plus(&big, beta, iota));
        }

        #[test]
        fn exp_times_inverse_is_identity(seed in 0u64..200, scale in 0.1f64..3.0) {
            let modes = ModeSet::new(1, 10).unwrap();
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let b = random_qp(&mut rng, 4, modes, 5.0, false).scale(c(scale, 0.0));
            let p = qp_product(&qp_exp(&b).unwrap(), &qp_exp(&b.scale(c(-1.0, 0.0))).unwrap()).unwrap();
            let id: TruncatedMatrix = DMatrix::identity(4, 4);
            for k in 0..16 {
                let phi = [std::f64::consts::TAU * k as f64 / 16.0];
                prop_assert!(max_abs(&(p.at(&phi) - &id)) < 1e-9);
            }
        }
    }
}
