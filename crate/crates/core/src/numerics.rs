//! Small fixed-size numerical kernels shared across modules.

/// Fourth-order finite-difference stencil for the derivative at sample `k` of
/// `n` uniformly spaced samples: returns the first index and weights, to be
/// divided by the spacing. Falls back to lower order on short grids.
pub(crate) fn derivative_stencil(n: usize, k: usize) -> (usize, Vec<f64>) {
    assert!(n >= 2 && k < n);
    match n {
        2 => (0, vec![-1.0, 1.0]),
        3 | 4 => {
            if k == 0 {
                (0, vec![-1.5, 2.0, -0.5])
            } else if k == n - 1 {
                (n - 3, vec![0.5, -2.0, 1.5])
            } else {
                (k - 1, vec![-0.5, 0.0, 0.5])
            }
        }
        _ => {
            let w = |a: [f64; 5]| a.iter().map(|x| x / 12.0).collect::<Vec<_>>();
            if k == 0 {
                (0, w([-25.0, 48.0, -36.0, 16.0, -3.0]))
            } else if k == 1 {
                (0, w([-3.0, -10.0, 18.0, -6.0, 1.0]))
            } else if k == n - 2 {
                (n - 5, w([-1.0, 6.0, -18.0, 10.0, 3.0]))
            } else if k == n - 1 {
                (n - 5, w([3.0, -16.0, 36.0, -48.0, 25.0]))
            } else {
                (k - 2, w([1.0, -8.0, 0.0, 8.0, -1.0]))
            }
        }
    }
}

/// Derivative of uniformly sampled data at every sample.
pub(crate) fn derivative<T, F>(samples: &[T], h: f64, zero: T, mut axpy: F) -> Vec<T>
where
    T: Copy,
    F: FnMut(T, f64, T) -> T,
{
    let n = samples.len();
    (0..n)
        .map(|k| {
            let (s, w) = derivative_stencil(n, k);
            w.iter().enumerate().fold(zero, |acc, (j, &wj)| axpy(acc, wj / h, samples[s + j]))
        })
        .collect()
}

/// Lagrange weights for evaluating the local cubic through samples around step
/// `i` (interval `[i, i+1]` of `n` samples) at fraction `s` in `[0, 1]`.
/// Returns the first sample index and its weights.
pub(crate) fn cubic_weights(n: usize, i: usize, s: f64) -> (usize, Vec<f64>) {
    debug_assert!(i + 1 < n);
    if n < 4 {
        return (i, vec![1.0 - s, s]);
    }
    // nodes at integer offsets relative to sample i
    let first = i.saturating_sub(1).min(n - 4);
    let nodes: Vec<f64> = (0..4).map(|j| (first + j) as f64 - i as f64).collect();
    let w =
        (0..4).map(|j| (0..4).filter(|&m| m != j).map(|m| (s - nodes[m]) / (nodes[j] - nodes[m])).product()).collect();
    (first, w)
}

/// Cumulative integral of uniformly sampled data, fourth-order accurate.
pub(crate) fn cumulative_integral(f: &[f64], h: f64) -> Vec<f64> {
    let n = f.len();
    let mut out = vec![0.0; n];
    if n < 2 {
        return out;
    }
    for i in 0..n - 1 {
        let piece = if n < 4 {
            0.5 * (f[i] + f[i + 1])
        } else {
            // exact integral over [i, i+1] of the local cubic
            let first = i.saturating_sub(1).min(n - 4);
            let w: [f64; 4] = match i - first {
                0 => [9.0, 19.0, -5.0, 1.0],
                1 => [-1.0, 13.0, 13.0, -1.0],
                _ => [1.0, -5.0, 19.0, 9.0],
            };
            (0..4).map(|j| w[j] * f[first + j]).sum::<f64>() / 24.0
        };
        out[i + 1] = out[i] + h * piece;
    }
    out
}

/// Gauss-Legendre nodes and weights on `[-1, 1]`.
pub(crate) fn gauss_legendre(n: usize) -> Vec<(f64, f64)> {
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, x);
            for k in 2..=n {
                let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
            let dx = p1 / dp;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        out.push((x, 2.0 / ((1.0 - x * x) * dp * dp)));
    }
    out
}

/// Composite Gauss-Legendre quadrature of `f` over `[a, b]`.
pub(crate) fn integrate<F: FnMut(f64) -> f64>(mut f: F, a: f64, b: f64, panels: usize) -> f64 {
    let rule = gauss_legendre(8);
    let h = (b - a) / panels as f64;
    let mut sum = 0.0;
    for p in 0..panels {
        let mid = a + (p as f64 + 0.5) * h;
        for &(x, w) in &rule {
            sum += w * f(mid + 0.5 * h * x);
        }
    }
    0.5 * h * sum
}

/// Bisection for a sign change of `f` on `[lo, hi]`.
pub(crate) fn bisect<F: FnMut(f64) -> f64>(mut f: F, mut lo: f64, mut hi: f64) -> Option<f64> {
    let (mut flo, fhi) = (f(lo), f(hi));
    if flo == 0.0 {
        return Some(lo);
    }
    if fhi == 0.0 {
        return Some(hi);
    }
    if flo.signum() == fhi.signum() || flo.is_nan() || fhi.is_nan() {
        return None;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        let fm = f(mid);
        if fm == 0.0 {
            return Some(mid);
        }
        if fm.signum() == flo.signum() {
            lo = mid;
            flo = fm;
        } else {
            hi = mid;
        }
    }
    Some(0.5 * (lo + hi))
}

/// Matrix exponential by scaling and squaring of a truncated Taylor series.
pub(crate) fn expm<const N: usize>(a: &[[f64; N]; N]) -> [[f64; N]; N] {
    let norm = a.iter().map(|r| r.iter().map(|x| x.abs()).sum::<f64>()).fold(0.0, f64::max);
    let squarings = if norm > 0.25 { (norm / 0.25).log2().ceil() as i32 } else { 0 };
    let scale = 0.5f64.powi(squarings);
    let mut term = [[0.0; N]; N];
    let mut out = [[0.0; N]; N];
    for i in 0..N {
        term[i][i] = 1.0;
        out[i][i] = 1.0;
    }
    for k in 1..=14 {
        let next = matmul(&term, a);
        let f = scale / k as f64;
        for i in 0..N {
            for j in 0..N {
                term[i][j] = next[i][j] * f;
                out[i][j] += term[i][j];
            }
        }
    }
    for _ in 0..squarings {
        out = matmul(&out, &out);
    }
    out
}

pub(crate) fn matmul<const N: usize>(a: &[[f64; N]; N], b: &[[f64; N]; N]) -> [[f64; N]; N] {
    let mut c = [[0.0; N]; N];
    for i in 0..N {
        for k in 0..N {
            let aik = a[i][k];
            if aik != 0.0 {
                for j in 0..N {
                    c[i][j] += aik * b[k][j];
                }
            }
        }
    }
    c
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn stencils_exact_on_quartics() {
        let h = 0.1;
        let f = |t: f64| 1.0 + t - 2.0 * t * t + 0.5 * t.powi(3) + 0.3 * t.powi(4);
        let df = |t: f64| 1.0 - 4.0 * t + 1.5 * t * t + 1.2 * t.powi(3);
        let xs: Vec<f64> = (0..9).map(|k| f(k as f64 * h)).collect();
        let d = derivative(&xs, h, 0.0, |acc, w, x| acc + w * x);
        for (k, v) in d.iter().enumerate() {
            assert!((v - df(k as f64 * h)).abs() < 1e-11, "{k}");
        }
    }

    #[test]
    fn cubic_interpolation_exact_on_cubics() {
        let f = |t: f64| 2.0 - t + 0.7 * t * t - 0.2 * t.powi(3);
        let xs: Vec<f64> = (0..7).map(|k| f(k as f64)).collect();
        for i in 0..6 {
            for s in [0.0, 0.25, 0.5, 0.9, 1.0] {
                let (first, w) = cubic_weights(7, i, s);
                let v: f64 = w.iter().enumerate().map(|(j, wj)| wj * xs[first + j]).sum();
                assert!((v - f(i as f64 + s)).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn cumulative_integral_exact_on_cubics() {
        let f = |t: f64| 1.0 + t * t * t;
        let h = 0.5;
        let xs: Vec<f64> = (0..6).map(|k| f(k as f64 * h)).collect();
        let c = cumulative_integral(&xs, h);
        for (k, v) in c.iter().enumerate() {
            let t = k as f64 * h;
            assert!((v - (t + t.powi(4) / 4.0)).abs() < 1e-12);
        }
    }

    #[test]
    fn quadrature_and_bisection() {
        let v = integrate(|x| x.exp(), 0.0, 1.0, 4);
        assert!((v - (1f64.exp() - 1.0)).abs() < 1e-14);
        let r = bisect(|x| x * x - 2.0, 0.0, 2.0).unwrap();
        assert!((r - 2f64.sqrt()).abs() < 1e-15);
        assert!(bisect(|x| x * x + 1.0, 0.0, 2.0).is_none());
    }

    #[test]
    fn expm_rotation_and_nilpotent() {
        let (w, t) = (3.0, 1.7);
        let e = expm(&[[0.0, -w * t], [w * t, 0.0]]);
        let (c, s) = ((w * t).cos(), (w * t).sin());
        let want = [[c, -s], [s, c]];
        for i in 0..2 {
            for j in 0..2 {
                assert!((e[i][j] - want[i][j]).abs() < 1e-14);
            }
        }
        let e = expm(&[[0.0, 5.0], [0.0, 0.0]]);
        assert_eq!(e, [[1.0, 5.0], [0.0, 1.0]]);
        let e = expm(&[[-40.0]]);
        assert!((e[0][0] / (-40f64).exp() - 1.0).abs() < 1e-12);
    }
}
