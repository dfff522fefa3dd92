//! Even polynomial-type potentials V(x) = |x|^{2l} (c0 + sum_j c_j |x|^{-2j}).

use nalgebra::{Matrix4, Vector4};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numeric::GaussRule;

/// How V is continued inside [-R0, R0].
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum InnerProfile {
    /// Even polynomial a0 + a1 x^2 + a2 x^4 + a3 x^6 matching V..V''' at R0.
    #[default]
    EvenPolyC3,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PotentialSpec {
    pub ell: f64,
    pub c0: f64,
    #[serde(default)]
    pub w: Vec<f64>,
    #[serde(rename = "R0", default)]
    pub r0: f64,
    #[serde(default)]
    pub inner: InnerProfile,
}

impl PotentialSpec {
    pub fn monomial(ell: f64) -> Self {
        Self {
            ell,
            c0: 1.0,
            w: Vec::new(),
            r0: 0.0,
            inner: InnerProfile::EvenPolyC3,
        }
    }

    pub fn from_json(s: &str) -> Result<Potential> {
        let spec: PotentialSpec = serde_json::from_str(s)?;
        Potential::new(spec)
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct AssumptionReport {
    pub c1_fit: f64,
    pub d1_fit: f64,
    pub d2_fit: f64,
    pub convexity_ok: bool,
    pub scaling_ok: bool,
    pub r_tilde: f64,
}

/// A validated potential with its derived radii.
#[derive(Debug, Clone)]
pub struct Potential {
    spec: PotentialSpec,
    blend: [f64; 4],
    r_tilde: f64,
    threshold: f64,
}

fn falling(p: f64, k: u32) -> f64 {
    (0..k).map(|i| p - i as f64).product()
}

impl Potential {
    pub fn new(spec: PotentialSpec) -> Result<Self> {
        if !(spec.ell.is_finite() && spec.ell > 1.0) {
            return Err(Error::InvalidInput(format!("ell = {} must exceed 1", spec.ell)));
        }
        if !(spec.c0.is_finite() && spec.c0 > 0.0) {
            return Err(Error::InvalidInput(format!("c0 = {} must be positive", spec.c0)));
        }
        if !(spec.r0.is_finite() && spec.r0 >= 0.0) {
            return Err(Error::InvalidInput(format!("R0 = {} must be >= 0", spec.r0)));
        }
        if spec.w.iter().any(|c| !c.is_finite()) {
            return Err(Error::InvalidInput("w coefficients must be finite".into()));
        }
        if !spec.w.is_empty() && spec.r0 <= 0.0 {
            return Err(Error::InvalidInput("a nonzero w needs R0 > 0".into()));
        }
        if spec.w.len() > 16 {
            return Err(Error::InvalidInput("at most 16 w coefficients".into()));
        }
        let mut pot = Self {
            spec,
            blend: [0.0; 4],
            r_tilde: 0.0,
            threshold: 0.0,
        };
        if pot.spec.r0 > 0.0 {
            pot.blend = pot.fit_blend()?;
        }
        pot.check_nonnegative()?;
        pot.r_tilde = pot.find_r_tilde();
        pot.threshold = pot.find_threshold()?;
        Ok(pot)
    }

    pub fn spec(&self) -> &PotentialSpec {
        &self.spec
    }

    pub fn ell(&self) -> f64 {
        self.spec.ell
    }

    /// Coefficients of the inner even polynomial in x^0, x^2, x^4, x^6.
    pub fn blend(&self) -> [f64; 4] {
        self.blend
    }

    pub fn r_tilde(&self) -> f64 {
        self.r_tilde
    }

    /// Threshold radius R: V <= xV' beyond R/2 and V < V(R) on [0, R).
    pub fn threshold_radius(&self) -> f64 {
        self.threshold
    }

    pub fn v_threshold(&self) -> f64 {
        self.value(self.threshold)
    }

    fn outer(&self, x: f64, order: u32) -> f64 {
        let a = x.abs();
        let sgn = if order % 2 == 1 { x.signum() } else { 1.0 };
        let p0 = 2.0 * self.spec.ell;
        let mut v = self.spec.c0 * falling(p0, order) * a.powf(p0 - order as f64);
        for (j, c) in self.spec.w.iter().enumerate() {
            let p = p0 - 2.0 * (j as f64 + 1.0);
            v += c * falling(p, order) * a.powf(p - order as f64);
        }
        if x == 0.0 && order % 2 == 1 {
            0.0
        } else {
            sgn * v
        }
    }

    fn inner(&self, x: f64, order: u32) -> f64 {
        let mut v = 0.0;
        for (m, b) in self.blend.iter().enumerate() {
            let p = 2 * m as u32;
            if order <= p {
                v += b * falling(p as f64, order) * x.powi((p - order) as i32);
            }
        }
        v
    }

    /// V^{(order)}(x) for order 0..=3.
    pub fn eval(&self, x: f64, order: u32) -> Result<f64> {
        if order > 3 {
            return Err(Error::UnsupportedDerivative(order));
        }
        Ok(self.eval_unchecked(x, order))
    }

    fn eval_unchecked(&self, x: f64, order: u32) -> f64 {
        if x.abs() >= self.spec.r0 {
            self.outer(x, order)
        } else {
            self.inner(x, order)
        }
    }

    pub fn value(&self, x: f64) -> f64 {
        self.eval_unchecked(x, 0)
    }

    pub fn deriv(&self, x: f64) -> f64 {
        self.eval_unchecked(x, 1)
    }

    fn fit_blend(&self) -> Result<[f64; 4]> {
        let r = self.spec.r0;
        let mut m = Matrix4::zeros();
        let mut rhs = Vector4::zeros();
        for k in 0..4u32 {
            for col in 0..4usize {
                let p = 2 * col as u32;
                if k <= p {
                    m[(k as usize, col)] = falling(p as f64, k) * r.powi((p - k) as i32);
                }
            }
            rhs[k as usize] = self.outer(r, k);
        }
        let sol = m
            .lu()
            .solve(&rhs)
            .ok_or_else(|| Error::InvalidInput("inner blend system is singular".into()))?;
        Ok([sol[0], sol[1], sol[2], sol[3]])
    }

    fn check_nonnegative(&self) -> Result<()> {
        let span = 64.0 * self.spec.r0.max(1.0);
        for i in 0..=4000 {
            let x = span * (i as f64 / 4000.0).powi(2);
            if self.value(x) < 0.0 {
                return Err(Error::AssumptionViolated {
                    item: "nonnegativity".into(),
                    x,
                });
            }
        }
        Ok(())
    }

    fn find_r_tilde(&self) -> f64 {
        let r0 = self.spec.r0;
        if r0 == 0.0 {
            return 0.0;
        }
        let target = self.value(r0) / r0;
        let g = |x: f64| self.deriv(x) - target;
        if g(r0) >= 0.0 {
            return r0;
        }
        let mut lo = r0;
        let mut hi = 2.0 * r0;
        while g(hi) < 0.0 {
            lo = hi;
            hi *= 2.0;
        }
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if g(mid) >= 0.0 {
                hi = mid;
            } else {
                lo = mid;
            }
            if hi - lo <= 1e-15 * hi {
                break;
            }
        }
        hi
    }

    fn threshold_ok(&self, r: f64) -> bool {
        let vr = self.value(r);
        let m = 400;
        let tail_ok = (0..=m).all(|i| {
            let x = 0.5 * r * 128f64.powf(i as f64 / m as f64);
            self.value(x) <= x * self.deriv(x) * (1.0 + 1e-12)
        });
        let inner_ok = (0..m).all(|i| self.value(r * i as f64 / m as f64) < vr);
        tail_ok && inner_ok
    }

    fn find_threshold(&self) -> Result<f64> {
        let start = (2.0 * self.r_tilde).max(1.0);
        let step = 1e-3 * start;
        for k in 0..20_000 {
            let r = start + step * k as f64;
            if self.threshold_ok(r) {
                return Ok(r);
            }
        }
        Err(Error::InvalidInput(
            "no threshold radius found within 21 R~".into(),
        ))
    }

    /// Tightest assumption constants over `grid` (points with |x| >= R0).
    pub fn verify_assumptions(&self, grid: &[f64]) -> Result<AssumptionReport> {
        if grid.is_empty() {
            return Err(Error::InvalidInput("empty grid".into()));
        }
        if grid.windows(2).any(|w| w[0] > w[1]) {
            return Err(Error::InvalidInput("grid must be sorted".into()));
        }
        if let Some(&x) = grid.iter().find(|x| x.abs() < self.spec.r0 || !x.is_finite()) {
            return Err(Error::InvalidInput(format!("grid point {x} inside R0")));
        }
        let p = 2.0 * self.spec.ell;
        let mut c1: f64 = 0.0;
        let mut d1 = f64::INFINITY;
        let mut d2: f64 = 0.0;
        for &x in grid {
            if x == 0.0 {
                continue;
            }
            let v: [f64; 4] = std::array::from_fn(|k| self.eval_unchecked(x, k as u32));
            for j in 1..4 {
                if v[j - 1] != 0.0 {
                    c1 = c1.max((x * v[j]).abs() / v[j - 1].abs());
                } else if v[j] != 0.0 {
                    return Err(Error::AssumptionViolated {
                        item: format!("C1 bound for derivative {j}"),
                        x,
                    });
                }
            }
            let ratio = v[0] / x.abs().powf(p);
            d1 = d1.min(ratio);
            d2 = d2.max(ratio);
            if v[2] < 0.0 {
                return Err(Error::AssumptionViolated {
                    item: "convexity".into(),
                    x,
                });
            }
        }
        self.check_scaling(&[0.5, 0.75], grid, c1)?;
        Ok(AssumptionReport {
            c1_fit: c1,
            d1_fit: d1,
            d2_fit: d2,
            convexity_ok: true,
            scaling_ok: true,
            r_tilde: self.r_tilde,
        })
    }

    /// theta^{C1} V(x) <= V(theta x) <= theta V(x) wherever theta |x| >= R~.
    pub fn check_scaling(&self, thetas: &[f64], grid: &[f64], c1: f64) -> Result<()> {
        for &theta in thetas {
            for &x in grid {
                if theta * x.abs() < self.r_tilde || x == 0.0 {
                    continue;
                }
                let vx = self.value(x);
                let vt = self.value(theta * x);
                let slack = 1e-12 * vx;
                if theta.powf(c1) * vx > vt + slack || vt > theta * vx + slack {
                    return Err(Error::AssumptionViolated {
                        item: format!("scaling bound at theta = {theta}"),
                        x,
                    });
                }
            }
        }
        Ok(())
    }

    /// The root X >= R/2 of V(X) = lambda, for lambda >= V(R).
    pub fn turning_point(&self, lambda: f64) -> Result<f64> {
        let v_r = self.v_threshold();
        if !(lambda >= v_r) {
            return Err(Error::NoTurningPoint { lambda, v_r });
        }
        Ok(self.outermost_root(lambda, 0.5 * self.threshold))
    }

    /// Root of V = lambda on [lo, inf), assuming V increasing there.
    fn outermost_root(&self, lambda: f64, lo: f64) -> f64 {
        let mut lo = lo;
        let mut hi = lo.max(1.0);
        while self.value(hi) < lambda {
            lo = hi;
            hi *= 2.0;
        }
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if self.value(mid) < lambda {
                lo = mid;
            } else {
                hi = mid;
            }
            if hi - lo <= 1e-6 * hi {
                break;
            }
        }
        let mut x = 0.5 * (lo + hi);
        for _ in 0..50 {
            let d = self.deriv(x);
            if d <= 0.0 {
                break;
            }
            let step = (self.value(x) - lambda) / d;
            let next = (x - step).clamp(lo, hi);
            let done = (next - x).abs() <= 1e-15 * x;
            x = next;
            if done {
                break;
            }
        }
        x
    }

    /// Classical action on the positive half line: int_0^X sqrt(lambda - V).
    pub fn half_action(&self, lambda: f64) -> f64 {
        if lambda <= self.value(0.0) {
            return 0.0;
        }
        let x_turn = self.outermost_root(lambda, 0.0);
        let rule = GaussRule::new(20);
        let umax = x_turn.sqrt();
        let panels = 16;
        (0..panels)
            .map(|p| {
                let a = umax * p as f64 / panels as f64;
                let b = umax * (p + 1) as f64 / panels as f64;
                rule.integrate(a, b, |u| 2.0 * u * (lambda - self.value(x_turn - u * u)).max(0.0).sqrt())
            })
            .sum()
    }

    /// Bohr-Sommerfeld estimate of lambda_j: 2 int_0^X sqrt(lambda - V) = pi (j - 1/2).
    pub fn eigenvalue_estimate(&self, j: usize) -> f64 {
        let target = 0.5 * std::f64::consts::PI * (j as f64 - 0.5);
        let mut lo = self.value(0.0);
        let mut hi = lo + 1.0;
        while self.half_action(hi) < target {
            lo = hi;
            hi *= 2.0;
        }
        for _ in 0..100 {
            let mid = 0.5 * (lo + hi);
            if self.half_action(mid) < target {
                lo = mid;
            } else {
                hi = mid;
            }
            if hi - lo <= 1e-10 * hi {
                break;
            }
        }
        0.5 * (lo + hi)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn quartic() -> Potential {
        Potential::new(PotentialSpec::monomial(2.0)).unwrap()
    }

    fn with_w(w: Vec<f64>, r0: f64) -> Result<Potential> {
        Potential::new(PotentialSpec {
            ell: 2.0,
            c0: 1.0,
            w,
            r0,
            inner: InnerProfile::EvenPolyC3,
        })
    }

    #[test]
    fn quartic_values() {
        let v = quartic();
        assert_eq!(v.eval(2.0, 0).unwrap(), 16.0);
        assert_eq!(v.eval(-2.0, 1).unwrap(), -32.0);
        assert!(matches!(v.eval(1.0, 4), Err(Error::UnsupportedDerivative(4))));
    }

    #[test]
    fn correction_term_adds_to_leading_power() {
        let v = with_w(vec![0.5], 1.0).unwrap();
        assert!((v.eval(2.0, 0).unwrap() - 18.0).abs() < 1e-13);
    }

    #[test]
    fn blend_reproduces_quartic_inside_r0() {
        let v = with_w(vec![], 1.5).unwrap();
        let b = v.blend();
        assert!(b[0].abs() < 1e-12 && b[1].abs() < 1e-12 && b[3].abs() < 1e-12);
        assert!((b[2] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn blend_is_c3_at_r0() {
        let v = with_w(vec![0.5, 0.3, 0.2], 1.2).unwrap();
        for k in 0..4 {
            let a = v.eval(1.2 - 1e-12, k).unwrap();
            let b = v.eval(1.2, k).unwrap();
            assert!((a - b).abs() < 1e-9 * b.abs().max(1.0), "order {k}: {a} vs {b}");
        }
    }

    #[test]
    fn quartic_assumptions() {
        let v = quartic();
        let grid: Vec<f64> = (0..=90).map(|i| 1.0 + 0.1 * i as f64).collect();
        let rep = v.verify_assumptions(&grid).unwrap();
        assert!((rep.c1_fit - 4.0).abs() < 1e-10);
        assert!((rep.d1_fit - 1.0).abs() < 1e-12 && (rep.d2_fit - 1.0).abs() < 1e-12);
        assert!(rep.convexity_ok && rep.scaling_ok);
    }

    #[test]
    fn half_scaling_at_four_hits_lower_bound() {
        let v = quartic();
        let (vx, vt) = (v.value(4.0), v.value(2.0));
        assert_eq!(vt, 16.0);
        assert_eq!(0.5f64.powi(4) * vx, 16.0);
        assert!(vt <= 0.5 * vx);
    }

    #[test]
    fn concave_correction_is_rejected() {
        // x^4 - 8x^2 + 20 = (x^2 - 4)^2 + 4 stays positive but bends down below x = 1.15
        let v = with_w(vec![-8.0, 20.0], 1.0).unwrap();
        let grid: Vec<f64> = (0..=20).map(|i| 1.0 + 0.1 * i as f64).collect();
        match v.verify_assumptions(&grid) {
            Err(Error::AssumptionViolated { item, x }) => {
                assert_eq!(item, "convexity");
                assert!(x < 1.16);
            }
            other => panic!("expected convexity failure, got {other:?}"),
        }
    }

    #[test]
    fn quartic_threshold_and_turning_points() {
        let v = quartic();
        assert_eq!(v.threshold_radius(), 1.0);
        assert_eq!(v.v_threshold(), 1.0);
        assert!((v.turning_point(16.0).unwrap() - 2.0).abs() < 1e-14);
        // fourth root of 1.0604, computed to 20 digits with an arbitrary-precision oracle
        let x = v.turning_point(1.0604).unwrap();
        assert!((x - 1.014_769_556_573_550_4).abs() < 1e-14);
        assert!(matches!(v.turning_point(0.1), Err(Error::NoTurningPoint { .. })));
    }

    #[test]
    fn half_action_quartic() {
        // int_0^1 sqrt(1 - t^4) dt = 0.87401918476403993682
        let v = quartic();
        assert!((v.half_action(1.0) - 0.874_019_184_764_039_9).abs() < 1e-11);
    }

    #[test]
    fn bohr_sommerfeld_is_close_to_quartic_levels() {
        let v = quartic();
        assert!((v.eigenvalue_estimate(1) - 1.0604).abs() < 0.25);
        assert!((v.eigenvalue_estimate(5) - 16.2618).abs() < 0.05);
    }

    #[test]
    fn spec_json_round_trip() {
        let s = r#"{"ell":2.0,"c0":1.0,"w":[0.5],"R0":1.0,"inner":"even-poly-c3"}"#;
        let p = PotentialSpec::from_json(s).unwrap();
        assert_eq!(serde_json::to_string(p.spec()).unwrap(), s);
        assert!(PotentialSpec::from_json(r#"{"ell":0.5,"c0":1.0}"#).is_err());
        assert!(PotentialSpec::from_json(r#"{"ell":2.0,"c0":1.0,"w":[1.0]}"#).is_err());
    }

    proptest! {
        #[test]
        fn parity_of_value_and_slope(x in -20.0f64..20.0, ell in 1.1f64..3.5, c in -0.3f64..0.3) {
            let v = Potential::new(PotentialSpec { ell, c0: 1.0, w: vec![c], r0: 1.5, inner: InnerProfile::EvenPolyC3 });
            if let Ok(v) = v {
                prop_assert_eq!(v.value(x), v.value(-x));
                prop_assert_eq!(v.deriv(x), -v.deriv(-x));
                prop_assert_eq!(v.eval(x, 2).unwrap(), v.eval(-x, 2).unwrap());
            }
        }

        #[test]
        fn monomial_turning_point_inverts(ell in 1.1f64..4.0, c0 in 0.2f64..5.0, t in 0.0f64..1.0) {
            let v = Potential::new(PotentialSpec { ell, c0, w: vec![], r0: 0.0, inner: InnerProfile::EvenPolyC3 }).unwrap();
            let lambda = v.v_threshold() * (1.0 + 1e4 * t);
            let x = v.turning_point(lambda).unwrap();
            let exact = (lambda / c0).powf(1.0 / (2.0 * ell));
            prop_assert!((x - exact).abs() <= 1e-10 * exact);
        }

        #[test]
        fn monomial_assumption_constants(ell in 1.1f64..4.0, c0 in 0.2f64..5.0) {
            let v = Potential::new(PotentialSpec { ell, c0, w: vec![], r0: 0.0, inner: InnerProfile::EvenPolyC3 }).unwrap();
            let grid: Vec<f64> = (1..=50).map(|i| 0.5 * i as f64).collect();
            let rep = v.verify_assumptions(&grid).unwrap();
            prop_assert!((rep.c1_fit - 2.0 * ell).abs() < 1e-10);
            prop_assert!((rep.d1_fit - c0).abs() < 1e-10 * c0);
            prop_assert!((rep.d2_fit - c0).abs() < 1e-10 * c0);
        }

        #[test]
        fn scaling_bound_for_any_theta(theta in 0.05f64..0.99, ell in 1.1f64..3.0) {
            let v = Potential::new(PotentialSpec { ell, c0: 1.0, w: vec![], r0: 0.0, inner: InnerProfile::EvenPolyC3 }).unwrap();
            let grid: Vec<f64> = (1..=40).map(|i| 0.25 * i as f64).collect();
            let rep = v.verify_assumptions(&grid).unwrap();
            prop_assert!(v.check_scaling(&[theta], &grid, rep.c1_fit).is_ok());
        }
    }
}
