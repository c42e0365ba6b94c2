//! Bounded weighted least squares by multi-start Nelder–Mead.
//!
//! Each free parameter x ∈ [lo, hi] is optimised through the unbounded
//! variable u with x = lo + (hi − lo)·sin²u, so every simplex vertex is a
//! valid parameter vector. Starts run concurrently; the best χ² wins, ties
//! going to the lowest start index. Uncertainties come from the
//! Gauss–Newton curvature JᵀWJ at the optimum.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Parameter {
    pub name: String,
    /// Initial guess, or the held value when `free` is false.
    pub value: f64,
    pub lower: f64,
    pub upper: f64,
    pub free: bool,
}

impl Parameter {
    pub fn free(name: impl Into<String>, value: f64, lower: f64, upper: f64) -> Self {
        Parameter {
            name: name.into(),
            value,
            lower,
            upper,
            free: true,
        }
    }

    pub fn fixed(name: impl Into<String>, value: f64) -> Self {
        Parameter {
            name: name.into(),
            value,
            lower: value,
            upper: value,
            free: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitOptions {
    /// Number of starts; the first is the guess.
    pub starts: usize,
    pub max_evaluations: usize,
    /// Convergence threshold on the simplex diameter in the internal
    /// coordinates.
    pub x_tolerance: f64,
    /// Relative convergence threshold on the χ² spread across the simplex.
    pub f_tolerance: f64,
}

impl Default for FitOptions {
    fn default() -> Self {
        FitOptions {
            starts: 4,
            max_evaluations: 4000,
            x_tolerance: 1e-9,
            f_tolerance: 1e-13,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub names: Vec<String>,
    pub values: Vec<f64>,
    /// 1σ; zero for held parameters.
    pub sigmas: Vec<f64>,
    /// χ² at the optimum.
    pub residual: f64,
    pub converged: bool,
    pub evaluations: usize,
    pub best_start: usize,
}

impl FitResult {
    pub fn get(&self, name: &str) -> Option<(f64, f64)> {
        let i = self.names.iter().position(|n| n == name)?;
        Some((self.values[i], self.sigmas[i]))
    }
}

/// σ of a measured excitation probability from `shots` projections, using
/// the regularised estimate p̃ = (k + ½)/(N + 1) so that p = 0 or 1 keeps a
/// finite weight.
pub fn binomial_sigmas(p: &[f64], shots: &[u32]) -> Vec<f64> {
    p.iter()
        .zip(shots)
        .map(|(&p, &n)| {
            let n = n as f64;
            let pt = (p.clamp(0.0, 1.0) * n + 0.5) / (n + 1.0);
            (pt * (1.0 - pt) / n).sqrt()
        })
        .collect()
}

struct Problem<'a, F> {
    model: &'a F,
    data: &'a [f64],
    inv_sigma: Vec<f64>,
    params: &'a [Parameter],
    free: Vec<usize>,
}

impl<F> Problem<'_, F>
where
    F: Fn(&[f64]) -> Result<Vec<f64>> + Sync,
{
    fn to_x(&self, u: &[f64]) -> Vec<f64> {
        let mut x: Vec<f64> = self.params.iter().map(|p| p.value).collect();
        for (&i, &ui) in self.free.iter().zip(u) {
            let p = &self.params[i];
            let s = ui.sin();
            x[i] = (p.lower + (p.upper - p.lower) * s * s).clamp(p.lower, p.upper);
        }
        x
    }

    fn to_u(&self, x: &[f64]) -> Vec<f64> {
        self.free
            .iter()
            .map(|&i| {
                let p = &self.params[i];
                let f = ((x[i] - p.lower) / (p.upper - p.lower)).clamp(0.0, 1.0);
                f.sqrt().asin()
            })
            .collect()
    }

    fn chi2_x(&self, x: &[f64]) -> f64 {
        match (self.model)(x) {
            Ok(m) if m.len() == self.data.len() => {
                let s: f64 = m
                    .iter()
                    .zip(self.data)
                    .zip(&self.inv_sigma)
                    .map(|((m, y), w)| {
                        let r = (m - y) * w;
                        r * r
                    })
                    .sum();
                if s.is_finite() {
                    s
                } else {
                    f64::INFINITY
                }
            }
            _ => f64::INFINITY,
        }
    }
}

struct Minimum {
    u: Vec<f64>,
    f: f64,
    evaluations: usize,
    converged: bool,
}

fn nelder_mead<G: Fn(&[f64]) -> f64>(f: &G, start: &[f64], step: f64, opts: &FitOptions) -> Minimum {
    let n = start.len();
    let mut simplex: Vec<Vec<f64>> = vec![start.to_vec()];
    for i in 0..n {
        let mut v = start.to_vec();
        v[i] += step;
        simplex.push(v);
    }
    let mut values: Vec<f64> = simplex.iter().map(|v| f(v)).collect();
    let mut evaluations = n + 1;
    let (alpha, gamma, rho, sigma) = (1.0, 2.0, 0.5, 0.5);
    let mut converged = false;
    while evaluations < opts.max_evaluations {
        let mut order: Vec<usize> = (0..=n).collect();
        order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
        simplex = order.iter().map(|&i| simplex[i].clone()).collect();
        values = order.iter().map(|&i| values[i]).collect();

        let best = values[0];
        let worst = values[n];
        let diameter = simplex[1..]
            .iter()
            .map(|v| v.iter().zip(&simplex[0]).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max))
            .fold(0.0, f64::max);
        if diameter < opts.x_tolerance || (best.is_finite() && worst - best <= opts.f_tolerance * best.abs()) {
            converged = true;
            break;
        }

        let centroid: Vec<f64> = (0..n).map(|j| simplex[..n].iter().map(|v| v[j]).sum::<f64>() / n as f64).collect();
        let along = |t: f64| -> Vec<f64> { (0..n).map(|j| centroid[j] + t * (simplex[n][j] - centroid[j])).collect() };

        let xr = along(-alpha);
        let fr = f(&xr);
        evaluations += 1;
        if fr < values[0] {
            let xe = along(-alpha * gamma);
            let fe = f(&xe);
            evaluations += 1;
            if fe < fr {
                simplex[n] = xe;
                values[n] = fe;
            } else {
                simplex[n] = xr;
                values[n] = fr;
            }
        } else if fr < values[n - 1] {
            simplex[n] = xr;
            values[n] = fr;
        } else {
            let (xc, fc) = if fr < values[n] {
                let xc = along(-rho);
                let fc = f(&xc);
                (xc, fc)
            } else {
                let xc = along(rho);
                let fc = f(&xc);
                (xc, fc)
            };
            evaluations += 1;
            if fc < values[n].min(fr) {
                simplex[n] = xc;
                values[n] = fc;
            } else {
                for i in 1..=n {
                    simplex[i] = (0..n).map(|j| simplex[0][j] + sigma * (simplex[i][j] - simplex[0][j])).collect();
                    values[i] = f(&simplex[i]);
                }
                evaluations += n;
            }
        }
    }
    let (ib, _) = values
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(b.1))
        .expect("simplex is never empty");
    Minimum {
        u: simplex[ib].clone(),
        f: values[ib],
        evaluations,
        converged,
    }
}

/// Radical inverse of `i` in base `b`.
fn halton(mut i: usize, b: usize) -> f64 {
    let mut f = 1.0;
    let mut r = 0.0;
    while i > 0 {
        f /= b as f64;
        r += f * (i % b) as f64;
        i /= b;
    }
    r
}

const PRIMES: [usize; 12] = [2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37];

/// Minimises Σ((model(x) − data)/σ)² over the free parameters.
///
/// `model` receives the full parameter vector in the order of `params`.
pub fn least_squares<F>(model: &F, data: &[f64], sigma: &[f64], params: &[Parameter], opts: &FitOptions) -> Result<FitResult>
where
    F: Fn(&[f64]) -> Result<Vec<f64>> + Sync,
{
    if data.is_empty() {
        return Err(Error::invalid("fit.data", "no data points"));
    }
    if sigma.len() != data.len() {
        return Err(Error::invalid("fit.sigma", "length differs from data"));
    }
    if sigma.iter().any(|s| !(*s > 0.0 && s.is_finite())) {
        return Err(Error::invalid("fit.sigma", "must be positive and finite"));
    }
    for p in params {
        if !(p.lower <= p.value && p.value <= p.upper) || !p.value.is_finite() {
            return Err(Error::invalid("fit.guess", format!("{} = {} outside [{}, {}]", p.name, p.value, p.lower, p.upper)));
        }
        if p.free && !(p.upper > p.lower) {
            return Err(Error::invalid("fit.bounds", format!("{} has an empty range", p.name)));
        }
    }
    if opts.starts == 0 {
        return Err(Error::invalid("fit.starts", "must be at least 1"));
    }
    let free: Vec<usize> = params.iter().enumerate().filter(|(_, p)| p.free).map(|(i, _)| i).collect();
    if free.len() > PRIMES.len() {
        return Err(Error::invalid("fit.params", "too many free parameters"));
    }
    let problem = Problem {
        model,
        data,
        inv_sigma: sigma.iter().map(|s| 1.0 / s).collect(),
        params,
        free,
    };
    let guess: Vec<f64> = params.iter().map(|p| p.value).collect();
    if problem.free.is_empty() {
        let f = problem.chi2_x(&guess);
        return Ok(FitResult {
            names: params.iter().map(|p| p.name.clone()).collect(),
            values: guess,
            sigmas: vec![0.0; params.len()],
            residual: f,
            converged: f.is_finite(),
            evaluations: 1,
            best_start: 0,
        });
    }

    let objective = |u: &[f64]| problem.chi2_x(&problem.to_x(u));
    let starts: Vec<Vec<f64>> = (0..opts.starts)
        .map(|s| {
            if s == 0 {
                problem.to_u(&guess)
            } else {
                let mut x = guess.clone();
                for (k, &i) in problem.free.iter().enumerate() {
                    let p = &params[i];
                    x[i] = p.lower + (p.upper - p.lower) * halton(s, PRIMES[k]);
                }
                problem.to_u(&x)
            }
        })
        .collect();
    let results: Vec<Minimum> = starts
        .par_iter()
        .map(|u0| {
            let mut m = nelder_mead(&objective, u0, 0.1, opts);
            // Restarting from the optimum guards against a collapsed simplex.
            for _ in 0..3 {
                let again = nelder_mead(&objective, &m.u, 0.01, opts);
                let improved = again.f < m.f * (1.0 - 1e-9) || (m.f > 0.0 && again.f == 0.0);
                let evaluations = m.evaluations + again.evaluations;
                let keep_converged = again.converged;
                if again.f <= m.f {
                    m = again;
                }
                m.evaluations = evaluations;
                m.converged = keep_converged;
                if !improved {
                    break;
                }
            }
            m
        })
        .collect();
    let evaluations = results.iter().map(|m| m.evaluations).sum();
    let (best_start, best) = results
        .iter()
        .enumerate()
        .filter(|(_, m)| m.converged && m.f.is_finite())
        .min_by(|a, b| a.1.f.total_cmp(&b.1.f).then(a.0.cmp(&b.0)))
        .ok_or_else(|| Error::NotConverged {
            restarts: opts.starts,
            residual: results.iter().map(|m| m.f).fold(f64::INFINITY, f64::min),
        })?;
    let values = problem.to_x(&best.u);
    let sigmas = curvature_sigmas(&problem, &values)?;
    Ok(FitResult {
        names: params.iter().map(|p| p.name.clone()).collect(),
        values,
        sigmas,
        residual: best.f,
        converged: true,
        evaluations,
        best_start,
    })
}

/// √diag((JᵀWJ)⁻¹) from a central-difference Jacobian.
fn curvature_sigmas<F>(problem: &Problem<'_, F>, x: &[f64]) -> Result<Vec<f64>>
where
    F: Fn(&[f64]) -> Result<Vec<f64>> + Sync,
{
    let m = problem.data.len();
    let k = problem.free.len();
    let mut jac = vec![vec![0.0; m]; k];
    for (c, &i) in problem.free.iter().enumerate() {
        let p = &problem.params[i];
        let h = 1e-6 * x[i].abs().max(1e-3 * (p.upper - p.lower));
        // Stay inside the bounds; the model may be undefined outside.
        let up = (x[i] + h).min(p.upper);
        let dn = (x[i] - h).max(p.lower);
        let mut xp = x.to_vec();
        let mut xm = x.to_vec();
        xp[i] = up;
        xm[i] = dn;
        let fp = (problem.model)(&xp)?;
        let fm = (problem.model)(&xm)?;
        for r in 0..m {
            jac[c][r] = (fp[r] - fm[r]) / (up - dn) * problem.inv_sigma[r];
        }
    }
    let mut a = vec![vec![0.0; k]; k];
    for i in 0..k {
        for j in 0..=i {
            let s: f64 = jac[i].iter().zip(&jac[j]).map(|(x, y)| x * y).sum();
            a[i][j] = s;
            a[j][i] = s;
        }
    }
    let inv = invert_spd(&a).ok_or_else(|| Error::FitFailed("curvature matrix is singular".into()))?;
    let mut sigmas = vec![0.0; problem.params.len()];
    for (c, &i) in problem.free.iter().enumerate() {
        sigmas[i] = inv[c][c].max(0.0).sqrt();
    }
    Ok(sigmas)
}

/// Inverse of a symmetric positive-definite matrix by Cholesky
/// factorisation, after symmetric diagonal scaling.
fn invert_spd(a: &[Vec<f64>]) -> Option<Vec<Vec<f64>>> {
    let n = a.len();
    let d: Vec<f64> = (0..n).map(|i| if a[i][i] > 0.0 { 1.0 / a[i][i].sqrt() } else { f64::NAN }).collect();
    if d.iter().any(|v| !v.is_finite()) {
        return None;
    }
    let s: Vec<Vec<f64>> = (0..n).map(|i| (0..n).map(|j| a[i][j] * d[i] * d[j]).collect()).collect();
    let mut l = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in 0..=i {
            let mut sum = s[i][j];
            for k in 0..j {
                sum -= l[i][k] * l[j][k];
            }
            if i == j {
                if sum <= 1e-14 {
                    return None;
                }
                l[i][i] = sum.sqrt();
            } else {
                l[i][j] = sum / l[j][j];
            }
        }
    }
    // Columns of L⁻¹, then S⁻¹ = L⁻ᵀL⁻¹.
    let mut linv = vec![vec![0.0; n]; n];
    for c in 0..n {
        for i in c..n {
            let mut sum = if i == c { 1.0 } else { 0.0 };
            for k in c..i {
                sum -= l[i][k] * linv[k][c];
            }
            linv[i][c] = sum / l[i][i];
        }
    }
    let mut out = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in 0..n {
            let s: f64 = (i.max(j)..n).map(|k| linv[k][i] * linv[k][j]).sum();
            out[i][j] = s * d[i] * d[j];
        }
    }
    Some(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn line_model(x: &[f64]) -> Result<Vec<f64>> {
        Ok((0..20).map(|i| x[0] + x[1] * i as f64).collect())
    }

    #[test]
    fn exact_recovery_noiseless() {
        let data = line_model(&[1.5, -0.25]).unwrap();
        let sigma = vec![0.1; data.len()];
        let params = [Parameter::free("a", 0.0, -10.0, 10.0), Parameter::free("b", 1.0, -5.0, 5.0)];
        let r = least_squares(&line_model, &data, &sigma, &params, &FitOptions::default()).unwrap();
        assert_relative_eq!(r.values[0], 1.5, max_relative = 1e-6);
        assert_relative_eq!(r.values[1], -0.25, max_relative = 1e-6);
        assert!(r.converged);
    }

    #[test]
    fn linear_uncertainties_match_closed_form() {
        let data = line_model(&[1.5, -0.25]).unwrap();
        let sigma = vec![0.1; data.len()];
        let params = [Parameter::free("a", 0.0, -10.0, 10.0), Parameter::free("b", 1.0, -5.0, 5.0)];
        let r = least_squares(&line_model, &data, &sigma, &params, &FitOptions::default()).unwrap();
        // Ordinary least squares: var(b) = σ²/Σ(x − x̄)².
        let n = 20.0;
        let sxx: f64 = (0..20).map(|i| (i as f64 - 9.5).powi(2)).sum();
        assert_relative_eq!(r.sigmas[1], 0.1 / sxx.sqrt(), max_relative = 1e-4);
        let var_a = 0.01 * (1.0 / n + 9.5f64.powi(2) / sxx);
        assert_relative_eq!(r.sigmas[0], var_a.sqrt(), max_relative = 1e-4);
    }

    #[test]
    fn held_parameter_untouched() {
        let data = line_model(&[1.5, -0.25]).unwrap();
        let sigma = vec![0.1; data.len()];
        let params = [Parameter::fixed("a", 1.5), Parameter::free("b", 1.0, -5.0, 5.0)];
        let r = least_squares(&line_model, &data, &sigma, &params, &FitOptions::default()).unwrap();
        assert_eq!(r.values[0], 1.5);
        assert_eq!(r.sigmas[0], 0.0);
        assert_relative_eq!(r.values[1], -0.25, max_relative = 1e-6);
        assert_eq!(r.get("b").unwrap().0, r.values[1]);
    }

    #[test]
    fn guess_outside_bounds_rejected() {
        let params = [Parameter::free("a", 20.0, -10.0, 10.0), Parameter::free("b", 1.0, -5.0, 5.0)];
        let e = least_squares(&line_model, &[0.0; 20], &[1.0; 20], &params, &FitOptions::default());
        assert!(matches!(e, Err(Error::InvalidParameter { .. })));
    }

    #[test]
    fn bounded_optimum_on_edge() {
        let data = line_model(&[1.5, -0.25]).unwrap();
        let sigma = vec![0.1; data.len()];
        let params = [Parameter::free("a", 0.0, -10.0, 10.0), Parameter::free("b", 0.5, 0.0, 5.0)];
        let r = least_squares(&line_model, &data, &sigma, &params, &FitOptions::default()).unwrap();
        assert!(r.values[1] >= 0.0 && r.values[1] < 1e-6);
    }

    #[test]
    fn starved_budget_reports_non_convergence() {
        let data = line_model(&[1.5, -0.25]).unwrap();
        let params = [Parameter::free("a", 0.0, -10.0, 10.0), Parameter::free("b", 1.0, -5.0, 5.0)];
        let opts = FitOptions { max_evaluations: 5, starts: 2, ..Default::default() };
        let e = least_squares(&line_model, &data, &[0.1; 20], &params, &opts);
        assert!(matches!(e, Err(Error::NotConverged { restarts: 2, .. })));
    }

    #[test]
    fn multistart_escapes_local_minimum() {
        // cos has many minima; the guess sits in the wrong basin.
        let xs: Vec<f64> = (0..40).map(|i| i as f64 * 0.1).collect();
        let model = |p: &[f64]| -> Result<Vec<f64>> { Ok(xs.iter().map(|x| (p[0] * x).cos()).collect()) };
        let data = model(&[7.3]).unwrap();
        let params = [Parameter::free("w", 2.0, 0.5, 10.0)];
        let opts = FitOptions { starts: 8, ..Default::default() };
        let r = least_squares(&model, &data, &[0.05; 40], &params, &opts).unwrap();
        assert_relative_eq!(r.values[0], 7.3, max_relative = 1e-6);
    }

    #[test]
    fn binomial_weights_finite_at_edges() {
        let s = binomial_sigmas(&[0.0, 0.5, 1.0], &[150, 150, 150]);
        assert!(s.iter().all(|v| *v > 0.0 && v.is_finite()));
        assert_relative_eq!(s[0], s[2], max_relative = 1e-12);
    }

    #[test]
    fn spd_inverse() {
        let a = vec![vec![4.0, 1.0, 0.5], vec![1.0, 3.0, 0.2], vec![0.5, 0.2, 2.0]];
        let inv = invert_spd(&a).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                let s: f64 = (0..3).map(|k| a[i][k] * inv[k][j]).sum();
                assert!((s - if i == j { 1.0 } else { 0.0 }).abs() < 1e-12);
            }
        }
        assert!(invert_spd(&[vec![1.0, 1.0], vec![1.0, 1.0]]).is_none());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]
        #[test]
        fn result_within_bounds(a in -9.0..9.0f64, b in -4.0..4.0f64) {
            let data = line_model(&[a, b]).unwrap();
            let params = [Parameter::free("a", 0.0, -10.0, 10.0), Parameter::free("b", 0.0, -1.0, 1.0)];
            let opts = FitOptions { starts: 1, ..Default::default() };
            let r = least_squares(&line_model, &data, &[0.1; 20], &params, &opts).unwrap();
            prop_assert!(r.values[0] >= -10.0 && r.values[0] <= 10.0);
            prop_assert!(r.values[1] >= -1.0 && r.values[1] <= 1.0);
            prop_assert!(r.sigmas.iter().all(|s| *s >= 0.0));
        }
    }
}
