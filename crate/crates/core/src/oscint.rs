//! Oscillatory matrix elements  int f(x) e^{ikx} h_m h_n dx  and their decay in the eigenvalues.

use std::io::Write;

use nalgebra::DMatrix;
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numeric::{power_law_fit, GaussRule};
use crate::spectrum::{Grid, SpectralBasis};

/// Largest allowed |k| h.
pub const RESOLUTION: f64 = 0.3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum WeightForm {
    /// <x>^mu = (1 + x^2)^{mu/2}
    JapaneseBracket,
    /// Values and derivative sampled on a specific grid.
    Sampled { grid: Grid, values: Vec<f64>, derivs: Vec<f64> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightSpec {
    pub mu: f64,
    pub form: WeightForm,
}

impl WeightSpec {
    pub fn bracket(mu: f64) -> Self {
        Self { mu, form: WeightForm::JapaneseBracket }
    }

    /// f at the nodes of `grid`.
    pub fn values_on(&self, grid: &Grid) -> Result<Vec<f64>> {
        match &self.form {
            WeightForm::JapaneseBracket => Ok(grid.points().iter().map(|x| (1.0 + x * x).powf(0.5 * self.mu)).collect()),
            WeightForm::Sampled { grid: g, values, .. } => {
                if g != grid || values.len() != grid.n_pts {
                    return Err(Error::GridMismatch);
                }
                Ok(values.clone())
            }
        }
    }

    fn derivs_on(&self, grid: &Grid) -> Result<Vec<f64>> {
        match &self.form {
            WeightForm::JapaneseBracket => Ok(grid
                .points()
                .iter()
                .map(|x| self.mu * x * (1.0 + x * x).powf(0.5 * self.mu - 1.0))
                .collect()),
            WeightForm::Sampled { grid: g, derivs, .. } => {
                if g != grid || derivs.len() != grid.n_pts {
                    return Err(Error::GridMismatch);
                }
                Ok(derivs.clone())
            }
        }
    }

    /// Smallest C2 with |f| <= C2 |x|^mu and |f'| <= C2 |x|^{mu-1} on |x| >= r0.
    pub fn growth_constant(&self, grid: &Grid, r0: f64) -> Result<f64> {
        if !(r0 > 0.0) {
            return Err(Error::InvalidInput(format!("R0 must be positive, got {r0}")));
        }
        let f = self.values_on(grid)?;
        let df = self.derivs_on(grid)?;
        let c2 = grid
            .points()
            .iter()
            .enumerate()
            .filter(|(_, x)| x.abs() >= r0)
            .map(|(i, x)| {
                let a = x.abs();
                (f[i].abs() / a.powf(self.mu)).max(df[i].abs() / a.powf(self.mu - 1.0))
            })
            .fold(0.0, f64::max);
        if !c2.is_finite() {
            return Err(Error::AssumptionViolated { item: "weight growth".into(), x: r0 });
        }
        Ok(c2)
    }
}

/// Weight sampled once on a basis grid; evaluates many elements cheaply.
pub struct OscKernel<'a> {
    basis: &'a SpectralBasis,
    weight: Vec<f64>,
}

impl<'a> OscKernel<'a> {
    pub fn new(f: &WeightSpec, basis: &'a SpectralBasis) -> Result<Self> {
        Ok(Self { basis, weight: f.values_on(&basis.grid)? })
    }

    fn check(&self, k: f64, m: usize, n: usize) -> Result<()> {
        let g = self.basis.grid;
        if k.abs() * g.h() > RESOLUTION {
            return Err(Error::UnderResolved { kh: k.abs() * g.h(), required_h: RESOLUTION / k.abs() });
        }
        for j in [m, n] {
            if j == 0 || j > self.basis.len() {
                return Err(Error::InvalidInput(format!("index {j} outside basis 1..={}", self.basis.len())));
            }
        }
        Ok(())
    }

    fn sum(&self, k: f64, m: usize, n: usize, stride: usize) -> Complex64 {
        let g = self.basis.grid;
        let (hm, hn) = (self.basis.eigfun(m), self.basis.eigfun(n));
        // eigenfunctions vanish at both ends, so the trapezoid is a plain sum
        let s: Complex64 = (0..g.n_pts)
            .step_by(stride)
            .map(|i| Complex64::from_polar(self.weight[i] * hm[i] * hn[i], k * g.x(i)))
            .sum();
        s * g.h() * stride as f64
    }

    pub fn element(&self, k: f64, m: usize, n: usize) -> Result<Complex64> {
        self.check(k, m, n)?;
        Ok(self.sum(k, m, n, 1))
    }

    /// Element and its change when only every other node is used.
    pub fn element_checked(&self, k: f64, m: usize, n: usize) -> Result<(Complex64, f64)> {
        self.check(2.0 * k, m, n)?;
        let full = self.sum(k, m, n, 1);
        Ok((full, (full - self.sum(k, m, n, 2)).norm()))
    }

    /// All elements with 1 <= m, n <= size.
    pub fn matrix(&self, k: f64, size: usize) -> Result<DMatrix<Complex64>> {
        self.check(k, size, size)?;
        let rows: Vec<Vec<Complex64>> = (1..=size)
            .into_par_iter()
            .map(|m| (1..=size).map(|n| if n < m { Complex64::default() } else { self.sum(k, m, n, 1) }).collect())
            .collect();
        Ok(DMatrix::from_fn(size, size, |i, j| if j >= i { rows[i][j] } else { rows[j][i] }))
    }
}

pub fn matrix_element(f: &WeightSpec, k: f64, m: usize, n: usize, basis: &SpectralBasis) -> Result<Complex64> {
    OscKernel::new(f, basis)?.element(k, m, n)
}

/// Exponent E of (lambda_m lambda_n) in the k != 0 decay bound.
pub fn decay_exponent(mu: f64, ell: f64) -> f64 {
    let gain = (1.0f64 / 3.0).min((mu + 1.0) / (2.0 * mu + 2.0 * ell + 1.0));
    (mu - gain) / (4.0 * ell)
}

/// (|k| v |k|^{-1}) (lambda_m lambda_n)^E, without the unquantified constant.
pub fn decay_bound(mu: f64, ell: f64, k: f64, lambda_m: f64, lambda_n: f64) -> Result<f64> {
    if k == 0.0 {
        return Err(Error::ZeroFrequency);
    }
    if !(mu >= 0.0) {
        return Err(Error::InvalidInput(format!("decay bound needs mu >= 0, got {mu}")));
    }
    Ok(k.abs().max(1.0 / k.abs()) * (lambda_m * lambda_n).powf(decay_exponent(mu, ell)))
}

/// (lambda_m lambda_n)^{mu/(4 l)}, the k = 0 bound (proved for 0 <= mu < l - 1).
pub fn zero_frequency_bound(mu: f64, ell: f64, lambda_m: f64, lambda_n: f64) -> Result<f64> {
    if !(mu >= 0.0) {
        return Err(Error::InvalidInput(format!("zero-frequency bound needs mu >= 0, got {mu}")));
    }
    Ok((lambda_m * lambda_n).powf(mu / (4.0 * ell)))
}

/// Either bound, picked by whether k vanishes.
pub fn bound_for(mu: f64, ell: f64, k: f64, lambda_m: f64, lambda_n: f64) -> Result<f64> {
    if k == 0.0 {
        zero_frequency_bound(mu, ell, lambda_m, lambda_n)
    } else {
        decay_bound(mu, ell, k, lambda_m, lambda_n)
    }
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct ExponentFit {
    pub e_fit: f64,
    pub c_fit: f64,
}

/// Fit |<h_n, f e^{ikx} h_n>| = C (lambda_n^2)^E over the diagonal window.
pub fn exponent_fit(f: &WeightSpec, k: f64, basis: &SpectralBasis, diag: std::ops::RangeInclusive<usize>) -> Result<ExponentFit> {
    let ns: Vec<usize> = diag.collect();
    if ns.len() < 10 {
        return Err(Error::InvalidInput(format!("diagonal window has {} points, need 10", ns.len())));
    }
    let kern = OscKernel::new(f, basis)?;
    let abs: Vec<f64> = ns.par_iter().map(|&n| kern.element(k, n, n).map(|v| v.norm())).collect::<Result<_>>()?;
    let largest = abs.iter().cloned().fold(0.0, f64::max);
    if largest < 1e-13 {
        return Err(Error::DegenerateFit(largest));
    }
    let (xs, ys): (Vec<f64>, Vec<f64>) = ns
        .iter()
        .zip(&abs)
        .filter(|(_, a)| **a >= 1e-13)
        .map(|(&n, &a)| (basis.lambda(n).powi(2), a))
        .unzip();
    if xs.len() < 2 {
        return Err(Error::DegenerateFit(largest));
    }
    let (e_fit, c_fit) = power_law_fit(&xs, &ys);
    Ok(ExponentFit { e_fit, c_fit })
}

#[derive(Debug, Clone, Serialize)]
pub struct ScanRow {
    pub m: usize,
    pub n: usize,
    pub k: f64,
    pub re: f64,
    pub im: f64,
    pub abs: f64,
    pub bound: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct Scan {
    pub rows: Vec<ScanRow>,
    /// max |element| / bound over the scan
    pub c_fit: f64,
    /// max ratio |element| / bound on the upper half of the n window over the max on the lower half
    pub envelope_growth: f64,
}

impl Scan {
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        wr.write_record(["m", "n", "k", "re", "im", "abs", "bound"])?;
        for r in &self.rows {
            wr.write_record([
                r.m.to_string(),
                r.n.to_string(),
                r.k.to_string(),
                format!("{:.12e}", r.re),
                format!("{:.12e}", r.im),
                format!("{:.12e}", r.abs),
                format!("{:.12e}", r.bound),
            ])?;
        }
        wr.flush()?;
        Ok(())
    }
}

/// Elements on the lines (n - d, n) for each offset d, with their bounds.
pub fn scan(f: &WeightSpec, k: f64, ell: f64, basis: &SpectralBasis, ns: std::ops::RangeInclusive<usize>, offsets: &[usize]) -> Result<Scan> {
    let kern = OscKernel::new(f, basis)?;
    let pairs: Vec<(usize, usize)> = ns
        .flat_map(|n| offsets.iter().filter(move |&&d| d < n).map(move |&d| (n - d, n)))
        .collect();
    let rows: Vec<ScanRow> = pairs
        .par_iter()
        .map(|&(m, n)| {
            let v = kern.element(k, m, n)?;
            let bound = if f.mu >= 0.0 { bound_for(f.mu, ell, k, basis.lambda(m), basis.lambda(n))? } else { 1.0 };
            Ok(ScanRow { m, n, k, re: v.re, im: v.im, abs: v.norm(), bound })
        })
        .collect::<Result<_>>()?;
    let c_fit = rows.iter().map(|r| r.abs / r.bound).fold(0.0, f64::max);
    // the elements oscillate in n, so compare envelopes rather than fitting a slope
    let mid = rows.iter().map(|r| r.n).sum::<usize>() as f64 / rows.len().max(1) as f64;
    let half_max = |upper: bool| {
        rows.iter()
            .filter(|r| (r.n as f64 > mid) == upper)
            .map(|r| r.abs / r.bound)
            .fold(0.0, f64::max)
    };
    let envelope_growth = half_max(true) / half_max(false);
    Ok(Scan { rows, c_fit, envelope_growth })
}

/// int_0^1 e^{i lambda x} dx by panel Gauss-Legendre with ~4 panels per wavelength.
pub fn model_oscillatory_integral(lambda: f64) -> Complex64 {
    let rule = GaussRule::new(16);
    let panels = ((lambda.abs() / std::f64::consts::PI).ceil() as usize).max(1) * 2;
    (0..panels)
        .map(|p| {
            let a = p as f64 / panels as f64;
            let b = (p + 1) as f64 / panels as f64;
            Complex64::new(rule.integrate(a, b, |x| (lambda * x).cos()), rule.integrate(a, b, |x| (lambda * x).sin()))
        })
        .sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::potential::{Potential, PotentialSpec};
    use crate::spectrum::solve_spectrum_extrapolated;
    use proptest::prelude::*;
    use std::sync::OnceLock;

    fn basis() -> &'static SpectralBasis {
        static B: OnceLock<SpectralBasis> = OnceLock::new();
        B.get_or_init(|| {
            let v = Potential::new(PotentialSpec::monomial(2.0)).unwrap();
            solve_spectrum_extrapolated(&v, &Grid::new(8.0, 6401).unwrap(), 64).unwrap()
        })
    }

    /// Composite Simpson on the same samples, as an independent quadrature.
    fn simpson(f: &WeightSpec, k: f64, m: usize, n: usize) -> Complex64 {
        let b = basis();
        let g = b.grid;
        let w = f.values_on(&g).unwrap();
        let s: Complex64 = (0..g.n_pts)
            .map(|i| {
                let c = if i == 0 || i == g.n_pts - 1 { 1.0 } else if i % 2 == 1 { 4.0 } else { 2.0 };
                c * Complex64::from_polar(w[i] * b.eigfun(m)[i] * b.eigfun(n)[i], k * g.x(i))
            })
            .sum();
        s * g.h() / 3.0
    }

    #[test]
    fn unit_weight_reproduces_orthonormality() {
        let one = WeightSpec::bracket(0.0);
        let b = basis();
        assert!((matrix_element(&one, 0.0, 7, 7, b).unwrap() - 1.0).norm() < 1e-10);
        assert!(matrix_element(&one, 0.0, 7, 12, b).unwrap().norm() < 1e-8);
        assert!(matrix_element(&one, 0.0, 7, 8, b).unwrap().norm() < 1e-12);
    }

    #[test]
    fn agrees_with_simpson_and_is_grid_stable() {
        let f = WeightSpec::bracket(1.0);
        let kern = OscKernel::new(&f, basis()).unwrap();
        let (v, drift) = kern.element_checked(1.0, 30, 30).unwrap();
        assert!((v - simpson(&f, 1.0, 30, 30)).norm() < 1e-7);
        assert!(drift < 1e-8, "{drift}");
    }

    #[test]
    fn fast_oscillation_is_refused() {
        let err = matrix_element(&WeightSpec::bracket(1.0), 200.0, 1, 1, basis()).unwrap_err();
        match err {
            Error::UnderResolved { kh, required_h } => assert!(kh > RESOLUTION && required_h < basis().grid.h()),
            e => panic!("{e}"),
        }
    }

    #[test]
    fn exponent_examples() {
        assert!((decay_exponent(1.0, 2.0) - 5.0 / 56.0).abs() < 1e-15);
        assert!((decay_exponent(0.0, 2.0) + 1.0 / 40.0).abs() < 1e-15);
        assert!((decay_exponent(2.0, 2.0) - 5.0 / 24.0).abs() < 1e-15);
        assert!(matches!(decay_bound(1.0, 2.0, 0.0, 1.0, 1.0), Err(Error::ZeroFrequency)));
        assert_eq!(decay_bound(0.0, 2.0, 0.5, 1.0, 1.0).unwrap(), 2.0);
        assert!((zero_frequency_bound(1.0, 2.0, 16.0, 16.0).unwrap() - 2.0).abs() < 1e-15);
    }

    #[test]
    fn fitted_exponents_respect_the_bounds() {
        let b = basis();
        let e = exponent_fit(&WeightSpec::bracket(1.0), 1.0, b, 20..=60).unwrap();
        assert!(e.e_fit <= 5.0 / 56.0 + 0.05, "{e:?}");
        let e0 = exponent_fit(&WeightSpec::bracket(0.0), 1.0, b, 20..=60).unwrap();
        assert!(e0.e_fit <= 0.0, "{e0:?}");
        let z = exponent_fit(&WeightSpec::bracket(1.0), 0.0, b, 20..=60).unwrap();
        assert!(z.e_fit <= 1.0 / 8.0 + 0.05, "{z:?}");
    }

    #[test]
    fn vanishing_elements_give_degenerate_fit() {
        let z = WeightSpec {
            mu: 0.0,
            form: WeightForm::Sampled { grid: basis().grid, values: vec![0.0; basis().grid.n_pts], derivs: vec![0.0; basis().grid.n_pts] },
        };
        assert!(matches!(exponent_fit(&z, 1.0, basis(), 1..=10), Err(Error::DegenerateFit(_))));
    }

    #[test]
    fn sampled_weight_must_match_grid() {
        let g = Grid::new(8.0, 101).unwrap();
        let f = WeightSpec { mu: 0.0, form: WeightForm::Sampled { grid: g, values: vec![1.0; 101], derivs: vec![0.0; 101] } };
        assert!(matches!(matrix_element(&f, 0.0, 1, 1, basis()), Err(Error::GridMismatch)));
        assert_eq!(f.growth_constant(&g, 1.0).unwrap(), 1.0);
        // sqrt(1 + x^-2) is largest at the first node past |x| = 1
        let x1 = g.points().into_iter().filter(|x| *x >= 1.0).fold(f64::INFINITY, f64::min);
        let c2 = WeightSpec::bracket(1.0).growth_constant(&g, 1.0).unwrap();
        assert!((c2 - (1.0 + x1.powi(-2)).sqrt()).abs() < 1e-12);
    }

    #[test]
    fn off_diagonal_scan_has_one_constant() {
        let b = basis();
        for d in [0usize, 1, 2, 5] {
            let s = scan(&WeightSpec::bracket(1.0), 1.0, 2.0, b, 20..=60, &[d]).unwrap();
            assert!(s.rows.iter().all(|r| r.abs <= s.c_fit * r.bound * (1.0 + 1e-12)));
            assert!(s.envelope_growth < 2.0, "d = {d}: {}", s.envelope_growth);
        }
        let s = scan(&WeightSpec::bracket(1.0), 1.0, 2.0, b, 20..=22, &[0, 1, 2, 5]).unwrap();
        let mut out = Vec::new();
        s.write_csv(&mut out).unwrap();
        let text = String::from_utf8(out).unwrap();
        assert!(text.starts_with("m,n,k,re,im,abs,bound\n"));
        assert_eq!(text.lines().count(), 13);
    }

    #[test]
    fn negative_mu_elements_stay_bounded() {
        let s = scan(&WeightSpec::bracket(-0.5), 1.0, 2.0, basis(), 10..=60, &[0, 1]).unwrap();
        assert!(s.rows.iter().all(|r| r.abs <= 1.0));
    }

    #[test]
    fn model_integral_obeys_first_derivative_bound() {
        for lambda in [10.0, 100.0, 1000.0] {
            let v = model_oscillatory_integral(lambda);
            let exact = Complex64::new(lambda.sin(), 1.0 - lambda.cos()) / lambda;
            assert!((v - exact).norm() < 1e-12);
            assert!(v.norm() * lambda <= 2.01);
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]
        #[test]
        fn hermitian_symmetry(m in 1usize..40, n in 1usize..40, k in -3.0f64..3.0, mu in 0.0f64..2.0) {
            let kern = OscKernel::new(&WeightSpec::bracket(mu), basis()).unwrap();
            let a = kern.element(k, m, n).unwrap();
            let b = kern.element(-k, n, m).unwrap().conj();
            prop_assert!((a - b).norm() <= 1e-10 * (1.0 + a.norm()));
        }

        #[test]
        fn matrix_matches_elements(k in -2.0f64..2.0, m in 1usize..6, n in 1usize..6) {
            let kern = OscKernel::new(&WeightSpec::bracket(1.0), basis()).unwrap();
            let mat = kern.matrix(k, 6).unwrap();
            prop_assert!((mat[(m - 1, n - 1)] - kern.element(k, m, n).unwrap()).norm() < 1e-14);
        }
    }
}
