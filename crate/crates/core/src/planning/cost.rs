use std::fmt;
use std::iter::Sum;
use std::ops::{Add, AddAssign, Mul, Sub};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::GroundAction;

/// Fixed-point action cost, stored in thousandths so that comparisons and
/// sums stay exact.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct Cost(i64);

impl Cost {
    pub const SCALE: i64 = 1000;
    pub const ZERO: Cost = Cost(0);
    pub const MAX: Cost = Cost(i64::MAX / 4);

    pub const fn units(n: i64) -> Cost {
        Cost(n * Self::SCALE)
    }

    pub const fn from_milli(m: i64) -> Cost {
        Cost(m)
    }

    pub const fn milli(self) -> i64 {
        self.0
    }

    pub fn is_negative(self) -> bool {
        self.0 < 0
    }

    /// Cost of `count` copies of `self`.
    pub fn times(self, count: usize) -> Cost {
        Cost(self.0 * count as i64)
    }

    /// Rounds a non-negative real to the nearest representable cost.
    pub fn from_f64(value: f64) -> Cost {
        Cost((value * Self::SCALE as f64).round() as i64)
    }

    pub fn as_f64(self) -> f64 {
        self.0 as f64 / Self::SCALE as f64
    }
}

impl Add for Cost {
    type Output = Cost;
    fn add(self, rhs: Cost) -> Cost {
        Cost(self.0.saturating_add(rhs.0))
    }
}

impl AddAssign for Cost {
    fn add_assign(&mut self, rhs: Cost) {
        *self = *self + rhs;
    }
}

impl Sub for Cost {
    type Output = Cost;
    fn sub(self, rhs: Cost) -> Cost {
        Cost(self.0 - rhs.0)
    }
}

impl Mul<i64> for Cost {
    type Output = Cost;
    fn mul(self, rhs: i64) -> Cost {
        Cost(self.0 * rhs)
    }
}

impl Sum for Cost {
    fn sum<I: Iterator<Item = Cost>>(iter: I) -> Cost {
        iter.fold(Cost::ZERO, |a, b| a + b)
    }
}

impl fmt::Display for Cost {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let sign = if self.0 < 0 { "-" } else { "" };
        let abs = self.0.unsigned_abs();
        let whole = abs / Self::SCALE as u64;
        let frac = abs % Self::SCALE as u64;
        if frac == 0 {
            write!(f, "{sign}{whole}")
        } else {
            let digits = format!("{frac:03}");
            write!(f, "{sign}{whole}.{}", digits.trim_end_matches('0'))
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("invalid cost `{0}`: expected a decimal with at most three fractional digits")]
pub struct ParseCostError(String);

impl FromStr for Cost {
    type Err = ParseCostError;

    fn from_str(s: &str) -> Result<Cost, ParseCostError> {
        let err = || ParseCostError(s.to_string());
        let t = s.trim();
        let (neg, body) = match t.strip_prefix('-') {
            Some(rest) => (true, rest),
            None => (false, t),
        };
        let (whole, frac) = match body.split_once('.') {
            Some((w, f)) => (w, f),
            None => (body, ""),
        };
        if whole.is_empty() && frac.is_empty() {
            return Err(err());
        }
        if frac.len() > 3 || !whole.chars().chain(frac.chars()).all(|c| c.is_ascii_digit()) {
            return Err(err());
        }
        let whole: i64 = if whole.is_empty() { 0 } else { whole.parse().map_err(|_| err())? };
        let mut milli = 0i64;
        for (i, c) in frac.chars().enumerate() {
            milli += (c as i64 - '0' as i64) * 10i64.pow(2 - i as u32);
        }
        let v = whole.checked_mul(Self::SCALE).and_then(|w| w.checked_add(milli)).ok_or_else(err)?;
        Ok(Cost(if neg { -v } else { v }))
    }
}

impl TryFrom<String> for Cost {
    type Error = ParseCostError;
    fn try_from(s: String) -> Result<Cost, ParseCostError> {
        s.parse()
    }
}

impl From<Cost> for String {
    fn from(c: Cost) -> String {
        c.to_string()
    }
}

/// A cost model over ground actions.
pub trait CostFn: Send + Sync {
    fn cost(&self, action: &GroundAction) -> Cost;
}

/// The cost each action was declared with.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct BaseCost;

impl CostFn for BaseCost {
    fn cost(&self, action: &GroundAction) -> Cost {
        action.base_cost
    }
}

/// Multiplies another cost model by a positive integer factor.
#[derive(Clone, Copy, Debug)]
pub struct ScaledCost<C> {
    pub inner: C,
    pub factor: i64,
}

impl<C: CostFn> CostFn for ScaledCost<C> {
    fn cost(&self, action: &GroundAction) -> Cost {
        self.inner.cost(action) * self.factor
    }
}

impl<C: CostFn + ?Sized> CostFn for &C {
    fn cost(&self, action: &GroundAction) -> Cost {
        (**self).cost(action)
    }
}

impl<C: CostFn + ?Sized> CostFn for std::sync::Arc<C> {
    fn cost(&self, action: &GroundAction) -> Cost {
        (**self).cost(action)
    }
}
