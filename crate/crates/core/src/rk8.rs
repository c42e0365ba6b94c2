//! Fixed-step eighth-order Runge–Kutta integrator using the Dormand–Prince
//! 8(5,3) coefficients (12 stages, the propagating eighth-order solution only).

/// Number of stages.
pub const STAGES: usize = 12;

const C: [f64; STAGES] = [
    0.0,
    0.05260015195876773,
    0.0789002279381516,
    0.1183503419072274,
    0.2816496580927726,
    0.3333333333333333,
    0.25,
    0.3076923076923077,
    0.6512820512820513,
    0.6,
    0.8571428571428571,
    1.0,
];

const B: [f64; STAGES] = [
    0.054293734116568765,
    0.0,
    0.0,
    0.0,
    0.0,
    4.450312892752409,
    1.8915178993145003,
    -5.801203960010585,
    0.3111643669578199,
    -0.1521609496625161,
    0.20136540080403034,
    0.04471061572777259,
];

// Lower-triangular stage matrix, row i holds a_{i,0..i}.
const A: [[f64; STAGES]; STAGES] = [
    [0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [0.05260015195876773, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [0.0197250569845379, 0.0591751709536137, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [0.02958758547680685, 0.0, 0.08876275643042054, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [0.2413651341592667, 0.0, -0.8845494793282861, 0.924834003261792, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [0.037037037037037035, 0.0, 0.0, 0.17082860872947386, 0.12546768756682242, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [0.037109375, 0.0, 0.0, 0.17025221101954405, 0.06021653898045596, -0.017578125, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [0.03709200011850479, 0.0, 0.0, 0.17038392571223998, 0.10726203044637328, -0.015319437748624402, 0.008273789163814023, 0.0, 0.0, 0.0, 0.0, 0.0],
    [0.6241109587160757, 0.0, 0.0, -3.3608926294469414, -0.868219346841726, 27.59209969944671, 20.154067550477894, -43.48988418106996, 0.0, 0.0, 0.0, 0.0],
    [0.47766253643826434, 0.0, 0.0, -2.4881146199716677, -0.590290826836843, 21.230051448181193, 15.279233632882423, -33.28821096898486, -0.020331201708508627, 0.0, 0.0, 0.0],
    [-0.9371424300859873, 0.0, 0.0, 5.186372428844064, 1.0914373489967295, -8.149787010746927, -18.52006565999696, 22.739487099350505, 2.4936055526796523, -3.0467644718982196, 0.0, 0.0],
    [2.273310147516538, 0.0, 0.0, -10.53449546673725, -2.0008720582248625, -17.9589318631188, 27.94888452941996, -2.8589982771350235, -8.87285693353063, 12.360567175794303, 0.6433927460157636, 0.0],
];

/// Advances `y` from `t` to `t + h` with one eighth-order step of
/// `dy/dt = f(t, y)`.
#[inline]
pub fn step<const N: usize, F>(f: &F, t: f64, y: &[f64; N], h: f64) -> [f64; N]
where
    F: Fn(f64, &[f64; N]) -> [f64; N],
{
    let mut k = [[0.0; N]; STAGES];
    k[0] = f(t, y);
    for i in 1..STAGES {
        let mut yi = *y;
        for (j, kj) in k.iter().enumerate().take(i) {
            let a = A[i][j];
            if a != 0.0 {
                for n in 0..N {
                    yi[n] += h * a * kj[n];
                }
            }
        }
        k[i] = f(t + C[i] * h, &yi);
    }
    let mut out = *y;
    for (i, ki) in k.iter().enumerate() {
        let b = B[i];
        if b != 0.0 {
            for n in 0..N {
                out[n] += h * b * ki[n];
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn consistency_conditions() {
        let sum_b: f64 = B.iter().sum();
        assert!((sum_b - 1.0).abs() < 1e-14);
        for i in 0..STAGES {
            let row: f64 = A[i].iter().sum();
            assert!((row - C[i]).abs() < 1e-12, "row {i}: {row} vs {}", C[i]);
        }
    }

    #[test]
    fn eighth_order_convergence() {
        // y' = y cos t, y(0) = 1 → y = exp(sin t)
        let f = |t: f64, y: &[f64; 1]| [y[0] * t.cos()];
        let err = |n: usize| {
            let h = 2.0 / n as f64;
            let mut y = [1.0];
            for i in 0..n {
                y = step(&f, i as f64 * h, &y, h);
            }
            (y[0] - 2f64.sin().exp()).abs()
        };
        let (e1, e2) = (err(8), err(16));
        let order = (e1 / e2).log2();
        assert!(order > 7.5, "observed order {order} ({e1:e}, {e2:e})");
    }

    #[test]
    fn harmonic_oscillator_phase() {
        let f = |_t: f64, y: &[f64; 2]| [y[1], -y[0]];
        let n = 1000;
        let h = std::f64::consts::TAU / n as f64;
        let mut y = [1.0, 0.0];
        for i in 0..n {
            y = step(&f, i as f64 * h, &y, h);
        }
        assert!((y[0] - 1.0).abs() < 1e-13);
        assert!(y[1].abs() < 1e-13);
    }
}
