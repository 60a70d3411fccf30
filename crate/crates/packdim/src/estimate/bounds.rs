use serde::{Deserialize, Serialize};

use crate::error::{param, Result};

/// Lower bound for the packing dimension of typical `m`-dimensional
/// projections from the packing dimension `p` and Hausdorff dimension `h`.
pub fn falconer_mattila_bound(p: f64, h: f64, n: usize, m: usize) -> Result<f64> {
    let nf = n as f64;
    let mf = m as f64;
    if !(m >= 1 && m <= n) {
        return Err(param(format!("need 1 ≤ m ≤ n, got m={m}, n={n}")));
    }
    if !(0.0 <= h && h <= p && p <= nf) {
        return Err(param(format!("need 0 ≤ h ≤ p ≤ n, got h={h}, p={p}, n={n}")));
    }
    if h >= mf {
        return Ok(mf);
    }
    Ok(p * (1.0 - h / nf) / (1.0 + (1.0 / mf - 1.0 / nf) * p - h / mf))
}

/// `A − (A − p)/θ`; negative values are possible.
pub fn assouad_profile_bound(a: f64, p: f64, theta: f64) -> f64 {
    a - (a - p) / theta
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ExceptionalTarget {
    /// Directions where projections fail to have full dimension `m`; the
    /// argument is the critical point.
    Full,
    /// Directions where projections lose packing dimension; the argument is
    /// the Assouad dimension.
    Preserve,
}

/// Upper bound `m(n−m) − (m − x)` on the dimension of exceptional
/// directions.
pub fn exceptional_dim_bound(n: usize, m: usize, x: f64, _target: ExceptionalTarget) -> f64 {
    let (nf, mf) = (n as f64, m as f64);
    mf * (nf - mf) - (mf - x)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn falconer_mattila_examples() {
        assert_eq!(falconer_mattila_bound(1.8, 1.5, 2, 1).unwrap(), 1.0);
        assert!((falconer_mattila_bound(1.0, 0.0, 2, 1).unwrap() - 2.0 / 3.0).abs() < 1e-15);
        assert_eq!(falconer_mattila_bound(0.0, 0.0, 2, 1).unwrap(), 0.0);
        assert!(falconer_mattila_bound(0.5, 0.6, 2, 1).is_err());
        assert!(falconer_mattila_bound(1.0, 0.5, 2, 3).is_err());
    }

    #[test]
    fn other_bounds() {
        assert_eq!(assouad_profile_bound(0.7, 0.7, 0.1), 0.7);
        assert!((assouad_profile_bound(1.2619, 1.2619, 0.25) - 1.2619).abs() < 1e-15);
        assert_eq!(assouad_profile_bound(2.0, 1.0, 0.5), 0.0);
        assert_eq!(exceptional_dim_bound(2, 1, 1.0, ExceptionalTarget::Full), 1.0);
        assert_eq!(exceptional_dim_bound(2, 1, 0.5, ExceptionalTarget::Full), 0.5);
        assert_eq!(exceptional_dim_bound(3, 2, 1.0, ExceptionalTarget::Preserve), 1.0);
    }
}
