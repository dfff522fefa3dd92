//! H^{(1)}_{1/3} on the two rays a Langer phase can take: arg z = -pi and arg z = pi/2.

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::Serialize;
use statrs::function::gamma::gamma;

use crate::error::{Error, Result};

const NU: f64 = 1.0 / 3.0;

/// Radius beyond which large-argument expansions replace series and integrals.
pub const ASYMPTOTIC_RADIUS: f64 = 14.0;
/// Radius below which K_nu uses the I_{-nu} - I_nu series.
pub const K_SERIES_RADIUS: f64 = 2.0;

/// A point on one of the two supported rays, by modulus.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Ray {
    /// z = r e^{-i pi}
    Negative(f64),
    /// z = i r
    PositiveImaginary(f64),
}

impl Ray {
    /// Negative reals are read with arg z = -pi.
    pub fn classify(z: Complex64) -> Result<Ray> {
        let r = z.norm();
        let off = Error::OffRay { re: z.re, im: z.im };
        if !(r > 0.0) || !r.is_finite() {
            return Err(off);
        }
        if z.re < 0.0 && z.im.abs() <= 1e-12 * r {
            Ok(Ray::Negative(r))
        } else if z.im > 0.0 && z.re.abs() <= 1e-12 * r {
            Ok(Ray::PositiveImaginary(r))
        } else {
            Err(off)
        }
    }

    pub fn modulus(&self) -> f64 {
        match *self {
            Ray::Negative(r) | Ray::PositiveImaginary(r) => r,
        }
    }
}

/// Ascending series for J_mu (sign = -1) or I_mu (sign = +1).
fn bessel_series(mu: f64, r: f64, sign: f64) -> f64 {
    let q = 0.25 * r * r;
    let mut term = (0.5 * r).powf(mu) / gamma(mu + 1.0);
    let mut sum = term;
    for k in 0..400 {
        let kf = k as f64;
        term *= sign * q / ((kf + 1.0) * (kf + 1.0 + mu));
        sum += term;
        if term.abs() <= 1e-17 * sum.abs() {
            break;
        }
    }
    sum
}

fn asym_coeff(mu: f64, k: usize) -> f64 {
    let m4 = 4.0 * mu * mu;
    (1..=k).map(|m| (m4 - ((2 * m - 1) as f64).powi(2)) / (m as f64 * 8.0)).product()
}

/// Large-argument expansion of J_mu(r).
fn bessel_j_asymptotic(mu: f64, r: f64) -> f64 {
    let (mut p, mut q) = (0.0, 0.0);
    let mut last = f64::INFINITY;
    for k in 0..60 {
        let t = asym_coeff(mu, k) / r.powi(k as i32);
        if t.abs() > last {
            break;
        }
        last = t.abs();
        match k % 4 {
            0 => p += t,
            1 => q += t,
            2 => p -= t,
            _ => q -= t,
        }
        if t.abs() < 1e-18 {
            break;
        }
    }
    let chi = r - 0.5 * mu * PI - 0.25 * PI;
    (2.0 / (PI * r)).sqrt() * (p * chi.cos() - q * chi.sin())
}

fn bessel_j(mu: f64, r: f64) -> f64 {
    if r <= ASYMPTOTIC_RADIUS {
        bessel_series(mu, r, -1.0)
    } else {
        bessel_j_asymptotic(mu, r)
    }
}

/// e^r K_{1/3}(r).
fn bessel_k_scaled(r: f64) -> f64 {
    if r <= K_SERIES_RADIUS {
        let k = PI / (2.0 * (NU * PI).sin()) * (bessel_series(-NU, r, 1.0) - bessel_series(NU, r, 1.0));
        k * r.exp()
    } else if r <= ASYMPTOTIC_RADIUS {
        // int_0^inf e^{-r (cosh t - 1)} cosh(nu t) dt; trapezoid converges geometrically
        let dt: f64 = 0.05;
        let mut sum = 0.5;
        let mut t: f64 = dt;
        loop {
            let term = (-r * (t.cosh() - 1.0)).exp() * (NU * t).cosh();
            sum += term;
            if term < 1e-19 {
                break;
            }
            t += dt;
        }
        sum * dt
    } else {
        let mut s = 0.0;
        let mut last = f64::INFINITY;
        for k in 0..80 {
            let t = asym_coeff(NU, k) / r.powi(k as i32);
            if t.abs() > last {
                break;
            }
            last = t.abs();
            s += t;
            if t.abs() < 1e-18 {
                break;
            }
        }
        (PI / (2.0 * r)).sqrt() * s
    }
}

fn hankel_on_ray(ray: Ray) -> Complex64 {
    let i = Complex64::i();
    match ray {
        Ray::Negative(r) => {
            let jm = bessel_j(-NU, r);
            let jp = bessel_j(NU, r);
            let num = Complex64::from_polar(1.0, NU * PI) * jm - Complex64::from_polar(1.0, -2.0 * NU * PI) * jp;
            num / (i * (NU * PI).sin())
        }
        Ray::PositiveImaginary(r) => {
            let k = bessel_k_scaled(r) * (-r).exp();
            Complex64::from_polar(2.0 / PI, -0.5 * PI - 0.5 * NU * PI) * k
        }
    }
}

/// H^{(1)}_{1/3}(z) for z on (-inf, 0) (read as arg -pi) or (0, +i inf).
pub fn hankel_13(z: Complex64) -> Result<Complex64> {
    Ok(hankel_on_ray(Ray::classify(z)?))
}

/// sqrt(pi z / 2) H^{(1)}_{1/3}(z) with the root taken on the same branch as z.
pub fn scaled_hankel_13(z: Complex64) -> Result<Complex64> {
    Ok(scaled_on_ray(Ray::classify(z)?))
}

pub fn scaled_on_ray(ray: Ray) -> Complex64 {
    let h = hankel_on_ray(ray);
    match ray {
        Ray::Negative(r) => Complex64::new(0.0, -(0.5 * PI * r).sqrt()) * h,
        Ray::PositiveImaginary(r) => Complex64::from_polar((0.5 * PI * r).sqrt(), 0.25 * PI) * h,
    }
}

/// sqrt(pi z/2) H^{(1)}_{1/3}(z) at z = r e^{+i pi}, the other side of the cut.
pub fn scaled_upper_negative(r: f64) -> Complex64 {
    let jp = bessel_j(NU, r);
    let jm = bessel_j(-NU, r);
    let y = (jp * (NU * PI).cos() - jm) / (NU * PI).sin();
    let h_pos = Complex64::new(jp, y);
    let h = -Complex64::from_polar(1.0, -NU * PI) * h_pos.conj();
    Complex64::new(0.0, (0.5 * PI * r).sqrt()) * h
}

/// Fitted constants for the growth/decay bounds of S(z) = sqrt(pi z/2) H(z).
#[derive(Debug, Clone, Copy, Serialize)]
pub struct HankelBoundFit {
    /// |S| <= 1 for z = r e^{+i pi}, r > c1
    pub c1: f64,
    /// sup |S| over r >= 1 on the arg -pi side used by the Langer phase
    pub k1: f64,
    /// |S| <= k2 |z|^{1/6} on [-c2, 0)
    pub c2: f64,
    pub k2: f64,
    /// |S| <= k3 max(|z|^{1/6}, |z|^{5/6}) on (0, c3] i
    pub c3: f64,
    pub k3: f64,
    /// |S| <= e^{-|z|} for z in (c4, inf) i
    pub c4: f64,
}

/// Fit the bound constants from `samples` geometric points per ray on [1e-3, 50].
pub fn fit_hankel_bounds(samples: usize) -> HankelBoundFit {
    let radii: Vec<f64> = (0..samples)
        .map(|k| 1e-3 * (5e4f64).powf(k as f64 / (samples - 1) as f64))
        .collect();
    let (c2, c3) = (1.0, 2.0);
    let mut c1: f64 = 0.0;
    let mut k1: f64 = 0.0;
    let mut c4: f64 = 0.0;
    let mut k2: f64 = 0.0;
    let mut k3: f64 = 0.0;
    for &r in &radii {
        if scaled_upper_negative(r).norm() > 1.0 {
            c1 = c1.max(r);
        }
        let s = scaled_on_ray(Ray::Negative(r)).norm();
        if r >= 1.0 {
            k1 = k1.max(s);
        }
        if r <= c2 {
            k2 = k2.max(s / r.powf(1.0 / 6.0));
        }
        let s = scaled_on_ray(Ray::PositiveImaginary(r)).norm();
        if s > (-r).exp() {
            c4 = c4.max(r);
        }
        if r <= c3 {
            k3 = k3.max(s / r.powf(1.0 / 6.0).max(r.powf(5.0 / 6.0)));
        }
    }
    HankelBoundFit { c1, k1, c2, k2, c3, k3, c4 }
}
