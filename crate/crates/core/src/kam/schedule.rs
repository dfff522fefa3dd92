//! Level-by-level constants of the iteration: eps_l, sigma_l, s_l, K_l, gamma_l and the gap constants.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// n + tau + theta (n + tau + 2) / (1 - theta), theta = 2 beta / (iota - 1).
pub fn a3_exponent(n_freq: usize, tau: f64, beta: f64, iota: f64) -> Result<f64> {
    let theta = 2.0 * beta / (iota - 1.0);
    if !(0.0..1.0).contains(&theta) {
        return Err(Error::InvalidInput(format!("theta = {theta} outside [0, 1)")));
    }
    let n = n_freq as f64;
    Ok(n + tau + theta * (n + tau + 2.0) / (1.0 - theta))
}

/// Largest C with |lambda_i - lambda_j| >= C |i^iota - j^iota| on the given eigenvalues.
pub fn gap_constant(lambdas: &[f64], iota: f64) -> f64 {
    let mut c = f64::MAX;
    for i in 0..lambdas.len() {
        for j in i + 1..lambdas.len() {
            let w = ((j + 1) as f64).powf(iota) - ((i + 1) as f64).powf(iota);
            c = c.min((lambdas[j] - lambdas[i]).abs() / w);
        }
    }
    c
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LevelConstants {
    pub eps: f64,
    pub gamma: f64,
    pub c_lambda: f64,
    pub c_omega: f64,
    pub c_mu: f64,
    pub k: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LevelPlan {
    pub l: usize,
    pub sigma: f64,
    pub s: f64,
    pub constants: LevelConstants,
    /// which of the per-level conditions (a)..(f) fail
    pub violations: Vec<char>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationSchedule {
    pub eps0: f64,
    pub s0: f64,
    pub gamma0: f64,
    pub k_base: f64,
    pub tau: f64,
    pub a3: f64,
    /// the free constant C in sigma_l = (3C / |ln eps_{l-1}|)^{1/a3}
    pub a3_proxy: f64,
    pub l_max: usize,
    pub stop_tol: f64,
}

impl IterationSchedule {
    /// Schedule with C chosen so that the widths lost over l_max levels sum to s0 / 2.
    pub fn calibrated(eps0: f64, s0: f64, gamma0: f64, tau: f64, a3: f64, l_max: usize, stop_tol: f64) -> Result<Self> {
        let mut sch = Self { eps0, s0, gamma0, k_base: 64.0, tau, a3, a3_proxy: 0.0, l_max, stop_tol };
        sch.validate()?;
        let sum: f64 = sch.eps_ladder().iter().take(l_max).map(|e| e.ln().abs().powf(-1.0 / a3)).sum();
        if sum > 0.0 {
            sch.a3_proxy = (s0 / (4.0 * sum)).powf(a3) / 3.0;
        }
        Ok(sch)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidInput(m));
        if !(self.s0 > 0.0 && self.s0 < 1.0) {
            return bad(format!("s0 = {} outside (0, 1)", self.s0));
        }
        if !(0.0..1.0).contains(&self.eps0) {
            return bad(format!("eps0 = {} outside [0, 1)", self.eps0));
        }
        if !(self.gamma0 >= 0.0 && self.tau > 0.0 && self.a3 > 0.0 && self.k_base >= 1.0) {
            return bad("gamma0 >= 0, tau > 0, a3 > 0 and K >= 1 required".into());
        }
        if self.l_max == 0 || !(self.stop_tol >= 0.0) {
            return bad("l_max >= 1 and stop_tol >= 0 required".into());
        }
        Ok(())
    }

    /// eps_0, eps_1, ..., eps_{l_max}.
    pub fn eps_ladder(&self) -> Vec<f64> {
        let mut e = vec![self.eps0];
        for l in 1..=self.l_max {
            e.push(e[l - 1].powf(4.0 / 3.0));
        }
        e
    }

    pub fn sigma(&self, eps_prev: f64) -> f64 {
        if eps_prev == 0.0 {
            return 0.0;
        }
        (3.0 * self.a3_proxy / eps_prev.ln().abs()).powf(1.0 / self.a3)
    }

    /// Constants for levels 0..=l_max with the per-level conditions checked.
    pub fn plan(&self, c_lambda: f64, n_freq: usize) -> Vec<LevelPlan> {
        let eps = self.eps_ladder();
        let mut out: Vec<LevelPlan> = Vec::with_capacity(self.l_max + 1);
        let c0 = LevelConstants { eps: eps[0], gamma: self.gamma0, c_lambda, c_omega: 0.0, c_mu: 0.0, k: 0.0 };
        out.push(LevelPlan { l: 0, sigma: 0.0, s: self.s0, constants: c0, violations: Vec::new() });
        for l in 1..=self.l_max {
            let prev = &out[l - 1];
            let e = eps[l - 1];
            let k = l as f64 * self.k_base;
            let sigma = self.sigma(e);
            let constants = LevelConstants {
                eps: eps[l],
                gamma: prev.constants.gamma - 2.0 * e * (1.0 + k.powf(self.tau)),
                c_lambda: prev.constants.c_lambda - 2.0 * e,
                c_omega: prev.constants.c_omega + 2.0 * e,
                c_mu: prev.constants.c_mu + 2.0 * e,
                k,
            };
            out.push(LevelPlan { l, sigma, s: prev.s - 2.0 * sigma, constants, violations: Vec::new() });
        }
        for p in out.iter_mut() {
            p.violations = self.violations(p, c_lambda, n_freq);
        }
        out
    }

    fn violations(&self, p: &LevelPlan, c_lambda: f64, n_freq: usize) -> Vec<char> {
        let c = &p.constants;
        let mut v = Vec::new();
        if !(2.0 * self.gamma0 / 3.0 <= c.gamma && c.gamma <= self.gamma0 && self.gamma0 < c_lambda / 4.0) {
            v.push('a');
        }
        if p.l > 0 && !(p.sigma > 0.0 && p.sigma < 1.0) {
            v.push('b');
        }
        if !(c.c_omega >= 0.0 && c.c_omega <= (c_lambda / (16.0 * n_freq as f64)).min(1.0)) {
            v.push('c');
        }
        if c.c_lambda < c_lambda / 2.0 {
            v.push('d');
        }
        if p.l > 0 && c.k < 2.0 {
            v.push('e');
        }
        if !(0.0..=1.0).contains(&c.eps) {
            v.push('f');
        }
        v
    }
}
