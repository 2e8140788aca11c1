//! Gauss-Legendre rules on `[-1, 1]` and the complex Gamma function.

use std::f64::consts::PI;

use crate::space::C64;

/// Nodes and weights of the `n`-point Gauss-Legendre rule on `[-1, 1]`,
/// nodes ascending. Newton iteration on `P_n` from Chebyshev-like guesses.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 1);
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    for i in 0..n.div_ceil(2) {
        let mut x = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (p, d) = legendre(n, x);
            dp = d;
            let dx = p / d;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        let (_, d) = legendre(n, x);
        if d != 0.0 {
            dp = d;
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    (nodes, weights)
}

/// `(P_n(x), P_n'(x))` by the three-term recurrence.
fn legendre(n: usize, x: f64) -> (f64, f64) {
    let (mut p0, mut p1) = (1.0, x);
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=n {
        let k = k as f64;
        let p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
        p0 = p1;
        p1 = p2;
    }
    let d = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

const LANCZOS_G: f64 = 7.0;
const LANCZOS: [f64; 9] = [
    0.999_999_999_999_809_9,
    676.520_368_121_885_1,
    -1_259.139_216_722_402_8,
    771.323_428_777_653_1,
    -176.615_029_162_140_6,
    12.507_343_278_686_905,
    -0.138_571_095_265_720_12,
    9.984_369_578_019_572e-6,
    1.505_632_735_149_311_6e-7,
];

/// Complex Gamma function (Lanczos, g = 7), with reflection for `Re z < 1/2`.
pub fn gamma_complex(z: C64) -> C64 {
    if z.re < 0.5 {
        let pi = C64::new(PI, 0.0);
        return pi / ((pi * z).sin() * gamma_complex(1.0 - z));
    }
    let z = z - 1.0;
    let mut x = C64::new(LANCZOS[0], 0.0);
    for (i, c) in LANCZOS.iter().enumerate().skip(1) {
        x += c / (z + i as f64);
    }
    let t = z + LANCZOS_G + 0.5;
    (2.0 * PI).sqrt() * t.powc(z + 0.5) * (-t).exp() * x
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rules_integrate_polynomials_exactly() {
        for n in [1, 2, 5, 10, 16] {
            let (x, w) = gauss_legendre(n);
            assert!((w.iter().sum::<f64>() - 2.0).abs() < 1e-14);
            for deg in 0..2 * n {
                let q: f64 = x.iter().zip(&w).map(|(x, w)| w * x.powi(deg as i32)).sum();
                let exact = if deg % 2 == 1 { 0.0 } else { 2.0 / (deg as f64 + 1.0) };
                assert!((q - exact).abs() < 1e-13, "n={n} deg={deg}");
            }
            assert!(x.windows(2).all(|p| p[0] < p[1]));
        }
    }

    #[test]
    fn gamma_real_values() {
        assert!((gamma_complex(C64::new(1.0, 0.0)) - 1.0).norm() < 1e-14);
        assert!((gamma_complex(C64::new(5.0, 0.0)) - 24.0).norm() < 1e-12);
        assert!((gamma_complex(C64::new(0.5, 0.0)).re - PI.sqrt()).abs() < 1e-14);
    }

    #[test]
    #[allow(clippy::excessive_precision)]
    fn gamma_on_the_line_re_one() {
        // reference values of Gamma(1 - i g) at 30 digits
        let frozen = [
            (0.5, C64::new(0.801_694_097_069_717_2, 0.199_639_738_164_596_36)),
            (1.0, C64::new(0.498_015_668_118_356_04, 0.154_949_828_301_810_7)),
            (2.0, C64::new(0.151_904_002_670_036_14, -0.019_804_880_161_854_98)),
        ];
        for (g, want) in frozen {
            let got = gamma_complex(C64::new(1.0, -g));
            assert!((got - want).norm() < 1e-14, "g={g}: {got}");
            // |Gamma(1 - i g)|^2 = pi g / sinh(pi g)
            let modulus = (PI * g / (PI * g).sinh()).sqrt();
            assert!((got.norm() - modulus).abs() < 1e-14);
        }
        for g in [-10.0, -3.3, 4.0, 7.5, 10.0] {
            let modulus = (PI * g / (PI * g).sinh()).sqrt();
            let got = gamma_complex(C64::new(1.0, -g)).norm();
            assert!((got - modulus).abs() < 1e-12 * modulus, "g={g}");
        }
    }
}
