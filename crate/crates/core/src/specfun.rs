//! Numerically stable evaluation of the squared associated Legendre weight
//!
//! ```text
//! W(j, m, x) = (j-m)!/(j+m)! * [P_j^m(x)]^2
//! ```
//!
//! for degrees up to `j = 5000`, including the half-integer `(j, m)` pairs
//! that arise when an odd total photon number is detected. Raw `P_j^m`
//! values overflow `f64` long before `j = 5000`, so everything is carried
//! in a log-scaled `(sign, log-magnitude)` representation with per-step
//! rescaling inside the degree recurrence.
//!
//! Half-integer orders are handled by extending the double-factorial seed
//! through the Gamma function, `(2m-1)!! = 2^m Gamma(m + 1/2) / sqrt(pi)`,
//! and running the same integer-step degree recurrence (`j - m` is always
//! an integer for a valid pair).

use crate::{Error, Result};
use statrs::function::gamma::ln_gamma;

const LN_PI: f64 = 1.144729885849400174;

/// A quantum number that may be integer or half-integer, stored exactly
/// as twice its value.
#[derive(Copy, Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct HalfInt {
    twice: i64,
}

impl HalfInt {
    pub const ZERO: HalfInt = HalfInt { twice: 0 };

    pub fn from_twice(twice: i64) -> Self {
        HalfInt { twice }
    }

    pub fn from_int(v: i64) -> Self {
        HalfInt { twice: 2 * v }
    }

    pub fn twice(self) -> i64 {
        self.twice
    }

    pub fn is_integer(self) -> bool {
        self.twice % 2 == 0
    }

    pub fn is_negative(self) -> bool {
        self.twice < 0
    }

    pub fn abs(self) -> Self {
        HalfInt {
            twice: self.twice.abs(),
        }
    }

    pub fn value(self) -> f64 {
        self.twice as f64 / 2.0
    }

    /// The integer value, or `None` for half-integers.
    pub fn as_int(self) -> Option<i64> {
        if self.is_integer() {
            Some(self.twice / 2)
        } else {
            None
        }
    }
}

impl std::fmt::Display for HalfInt {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        if self.is_integer() {
            write!(f, "{}", self.twice / 2)
        } else {
            write!(f, "{}/2", self.twice)
        }
    }
}

/// True when `(j, m)` index a valid weight: `j >= 0`, `|m| <= j`, and
/// `j - m` integer (so `j` and `m` are both integer or both half-integer).
pub fn valid_pair(j: HalfInt, m: HalfInt) -> bool {
    j.twice >= 0 && m.twice.abs() <= j.twice && (j.twice - m.twice) % 2 == 0
}

/// A real number stored as `sign * exp(log_magnitude)`.
///
/// `sign = 0` together with `log_magnitude = -inf` encodes exact zero.
#[derive(Copy, Clone, Debug, PartialEq)]
pub struct LogScaledValue {
    pub log_magnitude: f64,
    pub sign: i8,
}

impl LogScaledValue {
    pub const ZERO: LogScaledValue = LogScaledValue {
        log_magnitude: f64::NEG_INFINITY,
        sign: 0,
    };

    pub fn new(sign: i8, log_magnitude: f64) -> Self {
        if sign == 0 || log_magnitude == f64::NEG_INFINITY {
            LogScaledValue::ZERO
        } else {
            LogScaledValue {
                log_magnitude,
                sign,
            }
        }
    }

    pub fn from_f64(v: f64) -> Self {
        if v == 0.0 {
            LogScaledValue::ZERO
        } else {
            LogScaledValue {
                log_magnitude: v.abs().ln(),
                sign: if v > 0.0 { 1 } else { -1 },
            }
        }
    }

    pub fn is_zero(self) -> bool {
        self.sign == 0
    }

    /// May overflow to `inf` / underflow to `0.0` if the magnitude leaves
    /// `f64` range; callers that care stay in log space.
    pub fn to_f64(self) -> f64 {
        self.sign as f64 * self.log_magnitude.exp()
    }

    pub fn mul(self, other: LogScaledValue) -> LogScaledValue {
        LogScaledValue::new(
            self.sign * other.sign,
            self.log_magnitude + other.log_magnitude,
        )
    }
}

/// `ln((2m-1)!!)` under the Gamma extension `(2m-1)!! = 2^m Gamma(m+1/2)/sqrt(pi)`.
///
/// Agrees with the odd double factorial for integer `m` (with `(-1)!! = 1`).
pub fn log_double_factorial_gamma(m: HalfInt) -> Result<f64> {
    if m.is_negative() {
        return Err(Error::Domain(format!(
            "double factorial requires m >= 0, got m = {m}"
        )));
    }
    let mv = m.value();
    Ok(mv * std::f64::consts::LN_2 + ln_gamma(mv + 0.5) - 0.5 * LN_PI)
}

fn check_x(x: f64) -> Result<()> {
    if !(-1.0..=1.0).contains(&x) || x.is_nan() {
        return Err(Error::Domain(format!("x = {x} outside [-1, 1]")));
    }
    Ok(())
}

/// Associated Legendre function `P_j^m(x)` in log-scaled form, for `m >= 0`.
///
/// Carries the Condon-Shortley `(-1)^m` sign for integer `m`; half-integer
/// orders take a positive seed (the sign is immaterial once squared).
/// Evaluated via the seed `P_m^m = (-1)^m (2m-1)!! (1-x^2)^{m/2}` and the
/// upward degree recurrence
/// `(l-m+1) P_{l+1}^m = (2l+1) x P_l^m - (l+m) P_{l-1}^m`.
pub fn eval_legendre(j: HalfInt, m: HalfInt, x: f64) -> Result<LogScaledValue> {
    if !valid_pair(j, m) || m.is_negative() {
        return Err(Error::InvalidPair {
            twice_j: j.twice(),
            twice_m: m.twice(),
        });
    }
    check_x(x)?;

    // Endpoints are a removable singularity of the seed (0^0 at m = 0);
    // handle them analytically.
    if x.abs() == 1.0 {
        if m.twice() != 0 {
            return Ok(LogScaledValue::ZERO);
        }
        // m = 0 forces integer j. P_j^0(1) = 1, P_j^0(-1) = (-1)^j.
        let jj = j.as_int().expect("m = 0 implies integer j");
        let sign = if x < 0.0 && jj % 2 == 1 { -1 } else { 1 };
        return Ok(LogScaledValue::new(sign, 0.0));
    }

    let mv = m.value();
    // ln(1 - x^2) split as ln(1-x) + ln(1+x) to keep precision near |x| = 1.
    let ln_one_minus_x2 = (1.0 - x).ln() + (1.0 + x).ln();
    let seed_log = log_double_factorial_gamma(m)? + 0.5 * mv * ln_one_minus_x2;
    let seed_sign: i8 = match m.as_int() {
        Some(mi) if mi % 2 == 1 => -1,
        _ => 1,
    };

    let steps = (j.twice() - m.twice()) / 2;
    if steps == 0 {
        return Ok(LogScaledValue::new(seed_sign, seed_log));
    }

    // Two-term recurrence carried as (p_prev, p_curr) * exp(scale).
    let mut scale = seed_log;
    let mut p_prev = 0.0_f64;
    let mut p_curr = 1.0_f64;
    const RESCALE: f64 = 1e140;
    const LN_RESCALE: f64 = 322.36191301916641; // ln(1e140)
    for step in 0..steps {
        let l = mv + step as f64;
        let p_next = ((2.0 * l + 1.0) * x * p_curr - (l + mv) * p_prev) / (l - mv + 1.0);
        p_prev = p_curr;
        p_curr = p_next;
        let a = p_curr.abs().max(p_prev.abs());
        if a > RESCALE {
            p_curr /= RESCALE;
            p_prev /= RESCALE;
            scale += LN_RESCALE;
        } else if a > 0.0 && a < 1.0 / RESCALE {
            p_curr *= RESCALE;
            p_prev *= RESCALE;
            scale -= LN_RESCALE;
        }
    }

    if p_curr == 0.0 {
        return Ok(LogScaledValue::ZERO);
    }
    let sign = seed_sign * if p_curr > 0.0 { 1 } else { -1 };
    Ok(LogScaledValue::new(sign, scale + p_curr.abs().ln()))
}

/// Log-scaled value of the outcome weight `(j-m)!/(j+m)! [P_j^m(x)]^2`.
///
/// The weight is even in `m` (via `P_j^{-m} = (-1)^m (j-m)!/(j+m)! P_j^m`),
/// so it is always evaluated at `|m|`; the sign is 0 or +1.
pub fn eval_weight(j: HalfInt, m: HalfInt, x: f64) -> Result<LogScaledValue> {
    if !valid_pair(j, m) {
        return Err(Error::InvalidPair {
            twice_j: j.twice(),
            twice_m: m.twice(),
        });
    }
    check_x(x)?;

    let mu = m.abs();
    if x.abs() == 1.0 {
        // [P_j^0(+-1)]^2 = 1, P_j^m(+-1) = 0 otherwise.
        return Ok(if mu.twice() == 0 {
            LogScaledValue::new(1, 0.0)
        } else {
            LogScaledValue::ZERO
        });
    }

    let p = eval_legendre(j, mu, x)?;
    if p.is_zero() {
        return Ok(LogScaledValue::ZERO);
    }
    // (j - mu) and (j + mu) are nonnegative integers for any valid pair.
    let ln_factor = ln_gamma(j.value() - mu.value() + 1.0) - ln_gamma(j.value() + mu.value() + 1.0);
    Ok(LogScaledValue::new(1, ln_factor + 2.0 * p.log_magnitude))
}

/// The full weight row over `m = -j..j` at integer `j`, indexed by `m + j`.
///
/// One degree-recurrence chain per order, `O(j^2)` total. Exponentiating
/// the row yields the outcome probability distribution, which sums to 1.
pub fn eval_weight_row(j: HalfInt, x: f64) -> Result<Vec<LogScaledValue>> {
    let jj = j.as_int().ok_or_else(|| {
        Error::Domain(format!("weight rows require integer j, got j = {j}"))
    })?;
    if jj < 0 {
        return Err(Error::InvalidPair {
            twice_j: j.twice(),
            twice_m: 0,
        });
    }
    check_x(x)?;

    let len = (2 * jj + 1) as usize;
    let mut row = vec![LogScaledValue::ZERO; len];
    for mu in 0..=jj {
        let w = eval_weight(j, HalfInt::from_int(mu), x)?;
        row[(jj + mu) as usize] = w;
        row[(jj - mu) as usize] = w;
    }
    Ok(row)
}

/// Exponentiate a weight row into plain probabilities.
pub fn row_probabilities(row: &[LogScaledValue]) -> Vec<f64> {
    row.iter()
        .map(|w| {
            if w.is_zero() {
                0.0
            } else {
                w.log_magnitude.exp()
            }
        })
        .collect()
}
