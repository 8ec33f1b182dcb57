//! Distribution helpers.
//!
//! Everything routes through `f64` (the precision statrs works in) and is
//! narrowed back to the caller's scalar type at the boundary.

use crate::scalar::Scalar;
use statrs::distribution::{ChiSquared, Continuous, ContinuousCDF, Normal, StudentsT};

fn std_normal() -> Normal {
    Normal::new(0.0, 1.0).expect("standard normal")
}

/// Standard normal density.
pub fn normal_pdf<F: Scalar>(x: F) -> F {
    F::cast(std_normal().pdf(x.to64()))
}

/// Standard normal CDF.
pub fn normal_cdf<F: Scalar>(x: F) -> F {
    F::cast(std_normal().cdf(x.to64()))
}

/// Standard normal quantile.
pub fn normal_quantile<F: Scalar>(p: F) -> F {
    F::cast(std_normal().inverse_cdf(p.to64()))
}

/// Upper tail probability of the chi-square distribution with `df` degrees
/// of freedom.
pub fn chi2_sf<F: Scalar>(x: F, df: usize) -> F {
    let d = ChiSquared::new(df as f64).expect("positive df");
    F::cast(1.0 - d.cdf(x.to64()))
}

/// Chi-square quantile. The library inversion is only accurate to about
/// 1e-5, so polish it with a few Newton steps on the exact CDF.
pub fn chi2_quantile<F: Scalar>(p: F, df: usize) -> F {
    let d = ChiSquared::new(df as f64).expect("positive df");
    let p = p.to64();
    let mut q = d.inverse_cdf(p);
    for _ in 0..4 {
        let f = d.pdf(q);
        if f <= 0.0 {
            break;
        }
        let step = (d.cdf(q) - p) / f;
        q -= step;
        if step.abs() < 1e-14 * q.abs().max(1.0) {
            break;
        }
    }
    F::cast(q)
}

/// Student t quantile with `df` degrees of freedom.
pub fn t_quantile<F: Scalar>(p: F, df: f64) -> F {
    let d = StudentsT::new(0.0, 1.0, df).expect("positive df");
    F::cast(d.inverse_cdf(p.to64()))
}

/// Student t CDF with `df` degrees of freedom.
pub fn t_cdf<F: Scalar>(x: F, df: f64) -> F {
    let d = StudentsT::new(0.0, 1.0, df).expect("positive df");
    F::cast(d.cdf(x.to64()))
}
