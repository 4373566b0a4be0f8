//! Linear prediction and line spectral pairs.
//!
//! Polynomials are `[1, a1, .., ap]` for A(z) = 1 + a1 z^-1 + .. + ap z^-p.

use std::f64::consts::PI;

/// Smallest spacing kept between neighbouring line spectral frequencies.
pub const MIN_LSP_SEPARATION: f64 = 1e-3;

/// Autocorrelation of a windowed frame, normalized by the window energy so
/// that `r[0]` is the mean power.
pub fn autocorrelation(frame: &[f64], window: &[f64], max_lag: usize) -> Vec<f64> {
    let x: Vec<f64> = frame.iter().zip(window).map(|(a, w)| a * w).collect();
    let norm = window.iter().map(|w| w * w).sum::<f64>().max(1e-12);
    (0..=max_lag)
        .map(|k| {
            if k >= x.len() {
                0.0
            } else {
                x[..x.len() - k].iter().zip(&x[k..]).map(|(a, b)| a * b).sum::<f64>() / norm
            }
        })
        .collect()
}

/// Levinson-Durbin recursion. Returns the predictor polynomial and the
/// final prediction error power. Reflection coefficients are clipped inside
/// the unit circle, so the result is always minimum phase.
pub fn levinson(r: &[f64], order: usize) -> (Vec<f64>, f64) {
    let mut a = vec![0.0; order + 1];
    a[0] = 1.0;
    if r.is_empty() || r[0] <= 1e-300 {
        return (a, 0.0);
    }
    let mut err = r[0];
    for i in 1..=order {
        let acc: f64 = (1..i).map(|j| a[j] * r[i - j]).sum::<f64>() + r[i];
        let k = (-acc / err).clamp(-0.9999, 0.9999);
        let prev = a.clone();
        for j in 1..i {
            a[j] = prev[j] + k * prev[i - j];
        }
        a[i] = k;
        err *= 1.0 - k * k;
    }
    (a, err)
}

fn sum_difference_polys(a: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let p = a.len() - 1;
    let mut sum = vec![0.0; p + 2];
    let mut diff = vec![0.0; p + 2];
    for k in 0..=p + 1 {
        let fwd = if k <= p { a[k] } else { 0.0 };
        let rev = if k >= 1 { a[p + 1 - k] } else { 0.0 };
        sum[k] = fwd + rev;
        diff[k] = fwd - rev;
    }
    (sum, diff)
}

/// Real-valued zero-phase form of the symmetric (`cos`) or antisymmetric
/// (`sin`) polynomial on the unit circle.
fn eval_real(poly: &[f64], w: f64, symmetric: bool) -> f64 {
    let half = (poly.len() - 1) as f64 / 2.0;
    poly.iter()
        .enumerate()
        .map(|(k, c)| {
            let arg = (half - k as f64) * w;
            c * if symmetric { arg.cos() } else { arg.sin() }
        })
        .sum()
}

fn roots_in_open_interval(poly: &[f64], symmetric: bool, grid: usize) -> Vec<f64> {
    let f = |w: f64| eval_real(poly, w, symmetric);
    let mut roots = Vec::new();
    let eps = 1e-9;
    let mut w0 = eps;
    let mut f0 = f(w0);
    for i in 1..=grid {
        let w1 = eps + (PI - 2.0 * eps) * i as f64 / grid as f64;
        let f1 = f(w1);
        if f0 == 0.0 {
            roots.push(w0);
        } else if f0 * f1 < 0.0 {
            let (mut lo, mut hi, mut flo) = (w0, w1, f0);
            for _ in 0..80 {
                let mid = 0.5 * (lo + hi);
                let fm = f(mid);
                if fm * flo <= 0.0 {
                    hi = mid;
                } else {
                    lo = mid;
                    flo = fm;
                }
            }
            roots.push(0.5 * (lo + hi));
        }
        w0 = w1;
        f0 = f1;
    }
    roots
}

/// Line spectral frequencies (ascending, radians) of an even-order
/// minimum-phase polynomial.
pub fn lpc_to_lsp(a: &[f64]) -> Vec<f64> {
    let p = a.len() - 1;
    assert!(p.is_multiple_of(2), "LSP conversion needs an even order");
    let (sum, diff) = sum_difference_polys(a);
    let mut grid = 1024;
    loop {
        let mut lsp = roots_in_open_interval(&sum, true, grid);
        lsp.extend(roots_in_open_interval(&diff, false, grid));
        if lsp.len() == p || grid >= 1 << 20 {
            lsp.sort_by(f64::total_cmp);
            if lsp.len() != p {
                // roots too close to resolve: fall back to a uniform grid
                return uniform_lsp(p);
            }
            return lsp;
        }
        grid *= 4;
    }
}

pub fn uniform_lsp(order: usize) -> Vec<f64> {
    (1..=order).map(|k| k as f64 * PI / (order + 1) as f64).collect()
}

fn poly_mul(a: &[f64], b: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; a.len() + b.len() - 1];
    for (i, x) in a.iter().enumerate() {
        for (j, y) in b.iter().enumerate() {
            out[i + j] += x * y;
        }
    }
    out
}

/// Inverse of [`lpc_to_lsp`]: odd-indexed frequencies (1st, 3rd, ..) are
/// roots of the sum polynomial, even-indexed ones of the difference.
pub fn lsp_to_lpc(lsp: &[f64]) -> Vec<f64> {
    let mut sum = vec![1.0, 1.0];
    let mut diff = vec![1.0, -1.0];
    for (i, w) in lsp.iter().enumerate() {
        let quad = [1.0, -2.0 * w.cos(), 1.0];
        if i % 2 == 0 {
            sum = poly_mul(&sum, &quad);
        } else {
            diff = poly_mul(&diff, &quad);
        }
    }
    let p = lsp.len();
    (0..=p).map(|k| 0.5 * (sum[k] + diff[k])).collect()
}

/// Sorts, clamps to (0, pi) and enforces the minimum separation, which
/// keeps the synthesis filter stable.
pub fn stabilize_lsp(lsp: &mut [f64]) {
    let n = lsp.len();
    if n == 0 {
        return;
    }
    for v in lsp.iter_mut() {
        if !v.is_finite() {
            *v = PI / 2.0;
        }
    }
    lsp.sort_by(f64::total_cmp);
    let d = MIN_LSP_SEPARATION;
    let lo = d;
    let hi = PI - d;
    // forward pass pushes values up, backward pass pulls them under pi
    let mut floor = lo;
    for v in lsp.iter_mut() {
        *v = v.max(floor);
        floor = *v + d;
    }
    let mut ceil = hi;
    for v in lsp.iter_mut().rev() {
        *v = v.min(ceil);
        ceil = *v - d;
    }
}

/// Applies the FIR filter A(z) to `x` (zero initial state).
pub fn inverse_filter(a: &[f64], x: &[f64]) -> Vec<f64> {
    (0..x.len())
        .map(|n| a.iter().enumerate().take(n + 1).map(|(k, c)| c * x[n - k]).sum())
        .collect()
}

/// All-pole filter 1/A(z) with persistent state.
#[derive(Debug, Clone)]
pub struct AllPole {
    a: Vec<f64>,
    history: Vec<f64>,
}

impl AllPole {
    pub fn new(a: &[f64]) -> Self {
        Self {
            a: a.to_vec(),
            history: vec![0.0; a.len().saturating_sub(1)],
        }
    }

    pub fn step(&mut self, x: f64) -> f64 {
        let mut y = x;
        for (k, h) in self.history.iter().enumerate() {
            y -= self.a[k + 1] * h;
        }
        if !self.history.is_empty() {
            self.history.rotate_right(1);
            self.history[0] = y;
        }
        y
    }
}

/// Polynomial with the given (complex-conjugate paired) roots, used by
/// tests and synthetic signal generators.
pub fn poly_from_pole_pairs(pairs: &[(f64, f64)]) -> Vec<f64> {
    pairs.iter().fold(vec![1.0], |acc, &(radius, angle)| {
        poly_mul(&acc, &[1.0, -2.0 * radius * angle.cos(), radius * radius])
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_stable(rng: &mut ChaCha8Rng, order: usize) -> Vec<f64> {
        let pairs: Vec<(f64, f64)> = (0..order / 2)
            .map(|_| (rng.random_range(0.1..0.95), rng.random_range(0.05..PI - 0.05)))
            .collect();
        poly_from_pole_pairs(&pairs)
    }

    #[test]
    fn levinson_recovers_ar2() {
        // AR(2) with poles 0.9 e^{+-j pi/4}; exact autocorrelation from the
        // Yule-Walker equations
        let a = poly_from_pole_pairs(&[(0.9, PI / 4.0)]);
        let (a1, a2) = (a[1], a[2]);
        let rho1 = -a1 / (1.0 + a2);
        let rho2 = -a1 * rho1 - a2;
        let (est, err) = levinson(&[1.0, rho1, rho2], 2);
        assert!((est[1] - a1).abs() < 1e-12 && (est[2] - a2).abs() < 1e-12);
        assert!(err > 0.0 && err < 1.0);
    }

    #[test]
    fn silence_gives_flat_predictor() {
        let (a, err) = levinson(&[0.0; 25], 24);
        assert_eq!(a[0], 1.0);
        assert!(a[1..].iter().all(|&v| v == 0.0));
        assert_eq!(err, 0.0);
        let lsp = lpc_to_lsp(&a);
        for (got, want) in lsp.iter().zip(uniform_lsp(24)) {
            assert!((got - want).abs() < 1e-9);
        }
    }

    #[test]
    fn lsp_roundtrip_random_filters() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..200 {
            let a = random_stable(&mut rng, 24);
            let lsp = lpc_to_lsp(&a);
            assert_eq!(lsp.len(), 24);
            assert!(lsp.windows(2).all(|w| w[1] > w[0]));
            let back = lsp_to_lpc(&lsp);
            let err = a.iter().zip(&back).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
            assert!(err < 1e-6, "error {err}");
        }
    }

    #[test]
    fn stabilization_orders_and_separates() {
        let mut lsp = vec![0.5, 0.4, 0.4, 3.2, -0.1];
        stabilize_lsp(&mut lsp);
        assert!(lsp.windows(2).all(|w| w[1] - w[0] >= MIN_LSP_SEPARATION - 1e-15));
        assert!(lsp[0] > 0.0 && lsp[4] < PI);
        assert!((lsp[1] - 0.4).abs() < 1e-12);
    }

    #[test]
    fn inverse_then_all_pole_is_identity() {
        let a = poly_from_pole_pairs(&[(0.8, 0.3), (0.7, 2.0)]);
        let x: Vec<f64> = (0..50).map(|n| ((n * 7) % 11) as f64 - 5.0).collect();
        let e = inverse_filter(&a, &x);
        let mut f = AllPole::new(&a);
        let y: Vec<f64> = e.iter().map(|&v| f.step(v)).collect();
        for (p, q) in x.iter().zip(&y) {
            assert!((p - q).abs() < 1e-9);
        }
    }
}
