use crate::{Error, Result};

/// Per-mode tail weight allowed beyond the Fock cutoff.
pub const TAIL_TOLERANCE: f64 = 1e-3;
/// Smallest Fock cutoff used by any model.
pub const MIN_CUTOFF: usize = 15;

/// P(n > n_cut) = (n̄/(n̄+1))^{n_cut+1}.
pub fn thermal_tail(nbar: f64, n_cut: usize) -> f64 {
    if nbar <= 0.0 {
        return 0.0;
    }
    let r = nbar / (nbar + 1.0);
    ((n_cut as f64 + 1.0) * r.ln()).exp()
}

/// Smallest cutoff N ≥ [`MIN_CUTOFF`] with thermal_tail(n̄, N) < [`TAIL_TOLERANCE`].
pub fn adaptive_cutoff(nbar: f64) -> usize {
    if nbar <= 0.0 {
        return MIN_CUTOFF;
    }
    let r = nbar / (nbar + 1.0);
    let estimate = (TAIL_TOLERANCE.ln() / r.ln() - 1.0).floor().max(0.0) as usize;
    // Step past rounding at the boundary.
    let mut n = estimate.saturating_sub(1).max(MIN_CUTOFF);
    while thermal_tail(nbar, n) >= TAIL_TOLERANCE {
        n += 1;
    }
    n
}

/// Largest n̄ whose tail beyond `cutoff` stays within [`TAIL_TOLERANCE`].
pub fn max_mean_for_cutoff(cutoff: usize) -> f64 {
    let r = (TAIL_TOLERANCE.ln() / (cutoff as f64 + 1.0)).exp();
    // Stay a hair inside so rounding cannot trip the tail check.
    (1.0 - 1e-9) * r / (1.0 - r)
}

/// p(n) = n̄ⁿ/(n̄+1)ⁿ⁺¹ for n in 0..=cutoff, not renormalised.
///
/// Fails with `TruncationInsufficient` if the weight beyond `cutoff`
/// exceeds [`TAIL_TOLERANCE`].
pub fn thermal_weights(nbar: f64, cutoff: usize) -> Result<Vec<f64>> {
    if !(nbar >= 0.0 && nbar.is_finite()) {
        return Err(Error::invalid("nbar", "must be non-negative"));
    }
    let tail = thermal_tail(nbar, cutoff);
    if tail > TAIL_TOLERANCE {
        return Err(Error::TruncationInsufficient { cutoff, tail });
    }
    let r = nbar / (nbar + 1.0);
    let mut p = 1.0 / (nbar + 1.0);
    let mut out = Vec::with_capacity(cutoff + 1);
    for _ in 0..=cutoff {
        out.push(p);
        p *= r;
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn max_mean_sits_on_the_tolerance() {
        for n in [15, 100, 2000] {
            let m = max_mean_for_cutoff(n);
            assert!(thermal_weights(m, n).is_ok());
            assert!(thermal_tail(m * 1.001, n) > TAIL_TOLERANCE);
        }
    }
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    #[test]
    fn tail_reference() {
        // (136/137)^197
        assert_relative_eq!(thermal_tail(136.0, 196), 0.236_6, epsilon = 1e-3);
        assert_eq!(thermal_tail(0.0, 0), 0.0);
        assert_relative_eq!(thermal_tail(3.0, 0), 0.75, max_relative = 1e-15);
    }

    #[test]
    fn cutoff_minimum_and_growth() {
        assert_eq!(adaptive_cutoff(0.0), MIN_CUTOFF);
        assert_eq!(adaptive_cutoff(0.35), MIN_CUTOFF);
        let n = adaptive_cutoff(136.0);
        assert!(thermal_tail(136.0, n) < TAIL_TOLERANCE);
        assert!(thermal_tail(136.0, n - 1) >= TAIL_TOLERANCE);
    }

    #[test]
    fn insufficient_truncation() {
        assert!(matches!(thermal_weights(136.0, 15), Err(Error::TruncationInsufficient { .. })));
    }

    proptest! {
        #[test]
        fn weights_sum_to_one_minus_tail(nbar in 0.0..500.0f64) {
            let n = adaptive_cutoff(nbar);
            let w = thermal_weights(nbar, n).unwrap();
            let s: f64 = w.iter().sum();
            prop_assert!((s + thermal_tail(nbar, n) - 1.0).abs() < 1e-9);
            prop_assert!(s >= 1.0 - TAIL_TOLERANCE);
        }
    }
}
