//! Task-quantity arithmetic: binomial counts on a log scale.

use crate::{Error, Result};

/// `ln C(n, k)` via log-gamma, safe far beyond u64 overflow.
pub fn ln_combinations(n: usize, k: usize) -> Result<f64> {
    if k > n {
        return Err(Error::Argument(format!("C({n}, {k}) undefined: k > n")));
    }
    let ln = |x: usize| libm::lgamma((x + 1) as f64);
    Ok(ln(n) - ln(k) - ln(n - k))
}

/// Exact `C(n, k)` when it fits in a u64, `None` otherwise.
pub fn combinations_exact(n: usize, k: usize) -> Option<u64> {
    if k > n {
        return None;
    }
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        // acc * (n - k + 1 + i) / (i + 1) stays integral at every step.
        acc = acc.checked_mul((n - k + 1 + i) as u128)?;
        acc /= (i + 1) as u128;
        if acc > u64::MAX as u128 {
            return None;
        }
    }
    Some(acc as u64)
}
