//! Generalized binomial coefficients and the two-sided binomial bound
//! for `(x+y)^p − x^p − y^p`.

use crate::error::{Error, Result};
use crate::scalar::Real;

/// Real order `p > 1` with `k_p = ⌊(p+1)/2⌋`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BinomOrder<T> {
    pub p: T,
    pub k_p: u32,
}

impl<T: Real> BinomOrder<T> {
    pub fn new(p: T) -> Result<Self> {
        if !(p > T::one() && p.is_finite()) {
            return Err(Error::Domain(format!("binomial order p = {p} must exceed 1")));
        }
        let k = ((p + T::one()) * T::half()).floor();
        Ok(Self {
            p,
            k_p: k.to_u32().expect("k_p fits in u32"),
        })
    }

    /// True when `p` is an odd integer, where the lower bound is attained.
    pub fn is_odd_integer(&self) -> bool {
        self.p.fract() == T::zero() && (self.p * T::half()).fract() != T::zero()
    }
}

/// `C(p, k) = p(p−1)…(p−k+1)/k!`, with `C(p, 0) = 1`.
pub fn gen_binom<T: Real>(p: T, k: u32) -> T {
    let mut c = T::one();
    for j in 0..k {
        let jj = T::from_u32(j).expect("small integer");
        c = c * (p - jj) / (jj + T::one());
    }
    c
}

/// `(lower, middle, upper)` of the binomial sandwich.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Sandwich<T> {
    pub lower: T,
    pub middle: T,
    pub upper: T,
}

impl<T: Real> Sandwich<T> {
    /// Ordering check with relative slack measured against `upper`.
    pub fn is_ordered(&self, rel_slack: T) -> bool {
        let tol = rel_slack * self.upper.abs().max(self.middle.abs());
        self.lower <= self.middle + tol && self.middle <= self.upper + tol
    }
}

fn extreme<T: Real>(x: T) -> bool {
    x > T::lit(1e100) || x < T::lit(1e-100)
}

/// Bounds `Σ_{k=1}^{k_p−1} C(p,k)(x^k y^{p−k} + x^{p−k} y^k) ≤ (x+y)^p − x^p − y^p
/// ≤ Σ_{k=1}^{k_p} C(p,k)(x^k y^{p−k} + x^{p−k} y^k)`.
///
/// Power products switch to log space when `x` or `y` lies outside
/// `[1e−100, 1e100]`.
pub fn binom_sandwich<T: Real>(p: T, x: T, y: T) -> Result<Sandwich<T>> {
    let order = BinomOrder::new(p)?;
    if !(x > T::zero() && y > T::zero() && x.is_finite() && y.is_finite()) {
        return Err(Error::Domain(format!(
            "binomial sandwich needs positive finite x, y (got {x}, {y})"
        )));
    }
    let log_space = extreme(x) || extreme(y);
    let (lx, ly) = (x.ln(), y.ln());
    let pair = |k: T| -> T {
        if log_space {
            (k * lx + (p - k) * ly).exp() + ((p - k) * lx + k * ly).exp()
        } else {
            x.powf(k) * y.powf(p - k) + x.powf(p - k) * y.powf(k)
        }
    };
    let mut lower = T::zero();
    let mut last = T::zero();
    for k in 1..=order.k_p {
        let term = gen_binom(p, k) * pair(T::from_u32(k).expect("small integer"));
        if k < order.k_p {
            lower += term;
        } else {
            last = term;
        }
    }
    let upper = lower + last;

    // (x+y)^p − x^p − y^p = x^p[(1+t)^p − 1 − t^p], t = y/x ≤ 1
    let (hi, lo) = if x >= y { (x, y) } else { (y, x) };
    let t = lo / hi;
    let inner = (p * t.ln_1p()).exp_m1() - t.powf(p);
    let middle = if log_space {
        (p * hi.ln() + inner.ln()).exp()
    } else {
        hi.powf(p) * inner
    };
    Ok(Sandwich {
        lower,
        middle,
        upper,
    })
}
