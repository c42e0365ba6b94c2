use crate::constants::HBAR;
use crate::trap::{IonSpecies, ModeFrequencies};
use crate::{Error, Result};

/// η = k·r₀/2 with r₀ = √(ħ/(Mω₁)); the same for both radial modes.
pub fn lamb_dicke(freqs: &ModeFrequencies, ion: &IonSpecies, probe_wavelength: f64) -> Result<f64> {
    if !(freqs.omega_1 > 0.0) {
        return Err(Error::DegenerateFrequencies);
    }
    if !(probe_wavelength > 0.0) {
        return Err(Error::invalid("probe.wavelength", "must be positive"));
    }
    let k = std::f64::consts::TAU / probe_wavelength;
    Ok(0.5 * k * (HBAR / (ion.mass * freqs.omega_1)).sqrt())
}

/// Generalised Laguerre polynomial L_n^α(x) by the three-term recurrence.
pub fn laguerre(n: usize, alpha: f64, x: f64) -> f64 {
    let mut prev = 1.0;
    if n == 0 {
        return prev;
    }
    let mut cur = 1.0 + alpha - x;
    for k in 1..n {
        let kf = k as f64;
        let next = ((2.0 * kf + 1.0 + alpha - x) * cur - (kf + alpha) * prev) / (kf + 1.0);
        prev = cur;
        cur = next;
    }
    cur
}

/// √(n_<!/n_>!) η^|Δn| for n_> = n_< + |Δn|.
fn ladder_factor(n_lower: usize, dn: usize, eta: f64) -> f64 {
    let mut f = 1.0;
    for j in 1..=dn {
        f *= eta / ((n_lower + j) as f64).sqrt();
    }
    f
}

/// Relative Rabi frequency Ω_{n,n+Δn}/Ω₀ of a single mode,
///
/// ```text
/// e^{−η²/2} η^{|Δn|} √(n_<!/n_>!) L_{n_<}^{|Δn|}(η²)
/// ```
///
/// Signed; the sign matters only for locating zeros. Returns 0 when
/// n + Δn < 0.
pub fn sideband_coupling(n: usize, dn: i32, eta: f64) -> f64 {
    let target = n as i64 + dn as i64;
    if target < 0 {
        return 0.0;
    }
    let n_lower = n.min(target as usize);
    let a = dn.unsigned_abs() as usize;
    let x = eta * eta;
    (-0.5 * x).exp() * ladder_factor(n_lower, a, eta) * laguerre(n_lower, a as f64, x)
}

/// Couplings for one mode and one phonon change Δn, for all n in 0..=cutoff.
#[derive(Debug, Clone, PartialEq)]
pub struct CouplingTable {
    pub eta: f64,
    pub dn: i32,
    values: Vec<f64>,
}

impl CouplingTable {
    /// O(cutoff): the Laguerre values for successive n come from a single
    /// pass of the recurrence.
    pub fn new(eta: f64, dn: i32, cutoff: usize) -> Self {
        let a = dn.unsigned_abs() as usize;
        let x = eta * eta;
        let dw = (-0.5 * x).exp();
        // L_k^a(x) for k = 0..=cutoff.
        let mut lag = Vec::with_capacity(cutoff + 1);
        lag.push(1.0);
        if cutoff >= 1 {
            lag.push(1.0 + a as f64 - x);
        }
        for k in 1..cutoff {
            let kf = k as f64;
            let next = ((2.0 * kf + 1.0 + a as f64 - x) * lag[k] - (kf + a as f64) * lag[k - 1]) / (kf + 1.0);
            lag.push(next);
        }
        // Ladder factor for n_lower = k, updated incrementally:
        // f(k+1) = f(k)·√((k+1)/(k+1+a)).
        let mut ladder = ladder_factor(0, a, eta);
        let mut lower_vals = Vec::with_capacity(cutoff + 1);
        for (k, &l) in lag.iter().enumerate() {
            lower_vals.push(dw * ladder * l);
            ladder *= (((k + 1) as f64) / ((k + 1 + a) as f64)).sqrt();
        }
        let values = (0..=cutoff)
            .map(|n| {
                if dn >= 0 {
                    lower_vals[n]
                } else if n >= a {
                    lower_vals[n - a]
                } else {
                    0.0
                }
            })
            .collect();
        CouplingTable { eta, dn, values }
    }

    pub fn cutoff(&self) -> usize {
        self.values.len() - 1
    }

    #[inline]
    pub fn get(&self, n: usize) -> f64 {
        self.values[n]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }
}

/// Lower Fock number n_< of the first (near-)zero of the |Δn| = `order`
/// coupling: the member of the first sign-changing pair of L_{n}^{order}(η²)
/// with the smaller magnitude. `None` if no sign change below `search_limit`.
pub fn first_coupling_zero(eta: f64, order: u32, search_limit: usize) -> Option<usize> {
    let table = CouplingTable::new(eta, order as i32, search_limit);
    let v = table.values();
    (0..search_limit).find_map(|n| {
        if v[n] == 0.0 {
            Some(n)
        } else if v[n] * v[n + 1] < 0.0 {
            Some(if v[n].abs() <= v[n + 1].abs() { n } else { n + 1 })
        } else {
            None
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    /// L_n^a(x) = Σ_k (−1)^k C(n+a, n−k) x^k / k!
    fn laguerre_direct(n: usize, a: usize, x: f64) -> f64 {
        let mut sum = 0.0;
        for k in 0..=n {
            // C(n+a, n−k)/k! built as a running product
            let mut c = 1.0;
            for j in 1..=(n - k) {
                c *= (a + k + j) as f64 / j as f64;
            }
            let mut term = c;
            for j in 1..=k {
                term *= x / j as f64;
            }
            sum += if k % 2 == 0 { term } else { -term };
        }
        sum
    }

    fn reference() -> ModeFrequencies {
        ModeFrequencies::from_cyclotron_axial_hz(729.0e3, 265.0e3).unwrap()
    }

    #[test]
    fn lamb_dicke_value() {
        let eta = lamb_dicke(&reference(), &IonSpecies::calcium40(), 729e-9).unwrap();
        assert_relative_eq!(eta, 0.122_573_153_46, max_relative = 1e-8);
        let wide = ModeFrequencies::from_cyclotron_axial_hz(4.0 * 729.0e3, 2.0 * 265.0e3).unwrap();
        let eta_wide = lamb_dicke(&wide, &IonSpecies::calcium40(), 729e-9).unwrap();
        assert_relative_eq!(eta_wide / eta, (reference().omega_1 / wide.omega_1).sqrt(), max_relative = 1e-12);
    }

    #[test]
    fn trivial_couplings() {
        assert_eq!(sideband_coupling(0, 0, 0.0), 1.0);
        let eta = 0.1;
        assert_relative_eq!(sideband_coupling(0, 1, eta), eta * (-eta * eta / 2.0).exp(), max_relative = 1e-15);
        assert_eq!(sideband_coupling(0, -1, eta), 0.0);
        // Symmetric in direction.
        assert_relative_eq!(sideband_coupling(5, 2, eta), sideband_coupling(7, -2, eta), max_relative = 1e-15);
    }

    #[test]
    fn vanishing_eta() {
        for n in 0..50 {
            assert_eq!(sideband_coupling(n, 0, 0.0), 1.0);
            for dn in [-3, -1, 1, 2, 4] {
                assert_eq!(sideband_coupling(n, dn, 0.0).abs(), 0.0);
            }
        }
    }

    #[test]
    fn recurrence_matches_direct_sum() {
        for &eta in &[0.05, 0.121, 0.2] {
            let x = eta * eta;
            for a in 0..=4 {
                for n in 0..=300 {
                    let r = laguerre(n, a as f64, x);
                    let d = laguerre_direct(n, a, x);
                    assert!((r - d).abs() <= 1e-10 * d.abs().max(1.0), "n={n} a={a} eta={eta}: {r} vs {d}");
                }
            }
        }
    }

    #[test]
    fn table_matches_pointwise() {
        for dn in [-3, -1, 0, 1, 2] {
            let t = CouplingTable::new(0.1226, dn, 400);
            for n in 0..=400 {
                let p = sideband_coupling(n, dn, 0.1226);
                assert!((t.get(n) - p).abs() <= 1e-13 * p.abs().max(1e-3), "dn={dn} n={n}");
            }
        }
    }

    #[test]
    fn first_order_zero_positions() {
        // Independently computed sign changes of L_n^1(η²): between 243/244
        // for η = 0.12257 and between 249/250 for η = 0.121.
        assert_eq!(first_coupling_zero(0.122_573_153_46, 1, 1000), Some(243));
        assert_eq!(first_coupling_zero(0.121, 1, 1000), Some(250));
        // Matching a zero at n ≈ 196 requires η ≈ 0.1365.
        let n = first_coupling_zero(0.1365, 1, 1000).unwrap();
        assert!((193..=199).contains(&n), "{n}");
        assert_eq!(first_coupling_zero(0.121, 1, 100), None);
    }

    proptest! {
        #[test]
        fn couplings_bounded(n in 0usize..2000, dn in -4i32..=4, eta in 0.0..0.5f64) {
            let c = sideband_coupling(n, dn, eta);
            prop_assert!(c.is_finite());
            prop_assert!(c.abs() <= 1.0 + 1e-12);
        }
    }
}
