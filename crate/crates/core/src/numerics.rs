//! Small numerical kernels shared across modules.

use crate::error::{Error, Result};
use roots::{find_root_brent, SimpleConvergency};

/// Finite-difference weights for the `m`-th derivative at `x0` from arbitrary
/// nodes (Fornberg's recursion). `weights[i]` multiplies `f(nodes[i])`.
pub fn fd_weights(x0: f64, nodes: &[f64], m: usize) -> Vec<f64> {
    let n = nodes.len();
    let mut c = vec![vec![0.0; m + 1]; n];
    let mut c1 = 1.0;
    let mut c4 = nodes[0] - x0;
    c[0][0] = 1.0;
    for i in 1..n {
        let mn = i.min(m);
        let mut c2 = 1.0;
        let c5 = c4;
        c4 = nodes[i] - x0;
        for j in 0..i {
            let c3 = nodes[i] - nodes[j];
            c2 *= c3;
            if j == i - 1 {
                for k in (1..=mn).rev() {
                    c[i][k] = c1 * (k as f64 * c[i - 1][k - 1] - c5 * c[i - 1][k]) / c2;
                }
                c[i][0] = -c1 * c5 * c[i - 1][0] / c2;
            }
            for k in (1..=mn).rev() {
                c[j][k] = (c4 * c[j][k] - k as f64 * c[j][k - 1]) / c3;
            }
            c[j][0] = c4 * c[j][0] / c3;
        }
        c1 = c2;
    }
    c.into_iter().map(|row| row[m]).collect()
}

/// Ordinary least-squares line fit.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LineFit {
    pub slope: f64,
    pub intercept: f64,
    pub r2: f64,
}

pub fn fit_line(x: &[f64], y: &[f64]) -> Result<LineFit> {
    if x.len() != y.len() || x.len() < 2 {
        return Err(Error::InvalidParameter("line fit needs at least two paired samples".into()));
    }
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxx: f64 = x.iter().map(|v| (v - mx).powi(2)).sum();
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let syy: f64 = y.iter().map(|v| (v - my).powi(2)).sum();
    if sxx == 0.0 {
        return Err(Error::InvalidParameter("line fit with degenerate abscissae".into()));
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let r2 = if syy == 0.0 { 1.0 } else { sxy * sxy / (sxx * syy) };
    Ok(LineFit { slope, intercept, r2 })
}

/// Least squares for `y ≈ Σ_j coef_j · basis_j(x)`; returns the coefficients.
pub fn least_squares(rows: &[Vec<f64>], y: &[f64]) -> Result<Vec<f64>> {
    let p = rows.first().map(|r| r.len()).unwrap_or(0);
    if p == 0 || rows.len() < p || rows.len() != y.len() {
        return Err(Error::InvalidParameter("least squares: shape mismatch".into()));
    }
    let a = nalgebra::DMatrix::from_fn(rows.len(), p, |i, j| rows[i][j]);
    let b = nalgebra::DVector::from_column_slice(y);
    let svd = a.svd(true, true);
    let sol = svd
        .solve(&b, 1e-14)
        .map_err(|e| Error::Numerical(format!("least squares: {e}")))?;
    Ok(sol.iter().copied().collect())
}

/// Solves a tridiagonal system in place (Thomas algorithm). `lower[0]` and
/// `upper[n-1]` are ignored. Generic over real and complex scalars.
pub fn solve_tridiagonal<T>(lower: &[T], diag: &[T], upper: &[T], rhs: &mut [T]) -> Result<()>
where
    T: Copy
        + std::ops::Sub<Output = T>
        + std::ops::Mul<Output = T>
        + std::ops::Div<Output = T>
        + num_traits::Zero,
{
    let n = diag.len();
    let mut c = vec![T::zero(); n];
    let mut beta = diag[0];
    if beta.is_zero() {
        return Err(Error::Numerical("tridiagonal: zero pivot".into()));
    }
    rhs[0] = rhs[0] / beta;
    for i in 1..n {
        c[i] = upper[i - 1] / beta;
        beta = diag[i] - lower[i] * c[i];
        if beta.is_zero() {
            return Err(Error::Numerical("tridiagonal: zero pivot".into()));
        }
        rhs[i] = (rhs[i] - lower[i] * rhs[i - 1]) / beta;
    }
    for i in (0..n - 1).rev() {
        let next = rhs[i + 1];
        rhs[i] = rhs[i] - c[i + 1] * next;
    }
    Ok(())
}

/// Root of `f` in a sign-changing bracket via Brent's method.
pub fn brent_root<F: FnMut(f64) -> f64>(mut f: F, a: f64, b: f64, tol: f64) -> Result<f64> {
    let fa = f(a);
    let fb = f(b);
    if fa == 0.0 {
        return Ok(a);
    }
    if fb == 0.0 {
        return Ok(b);
    }
    if fa.signum() == fb.signum() {
        return Err(Error::InvalidParameter(format!("no sign change on [{a}, {b}]")));
    }
    let mut conv = SimpleConvergency { eps: tol, max_iter: 200 };
    find_root_brent(a, b, &mut f, &mut conv).map_err(|e| Error::NotConverged(format!("brent: {e:?}")))
}

/// Plain bisection; kept independent of [`brent_root`] for cross-checks.
pub fn bisect<F: FnMut(f64) -> f64>(mut f: F, mut a: f64, mut b: f64, iterations: usize) -> Result<f64> {
    let mut fa = f(a);
    let fb = f(b);
    if fa.signum() == fb.signum() && fa != 0.0 && fb != 0.0 {
        return Err(Error::InvalidParameter(format!("no sign change on [{a}, {b}]")));
    }
    for _ in 0..iterations {
        let m = 0.5 * (a + b);
        let fm = f(m);
        if fm == 0.0 {
            return Ok(m);
        }
        if fm.signum() == fa.signum() {
            a = m;
            fa = fm;
        } else {
            b = m;
        }
    }
    Ok(0.5 * (a + b))
}

/// Golden-section search for a maximum of a unimodal `f` on `[a, b]`.
pub fn golden_max<F: FnMut(f64) -> f64>(mut f: F, mut a: f64, mut b: f64, tol: f64) -> (f64, f64) {
    let g = 0.5 * (5f64.sqrt() - 1.0);
    let mut x1 = b - g * (b - a);
    let mut x2 = a + g * (b - a);
    let mut f1 = f(x1);
    let mut f2 = f(x2);
    while (b - a).abs() > tol {
        if f1 < f2 {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + g * (b - a);
            f2 = f(x2);
        } else {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - g * (b - a);
            f1 = f(x1);
        }
    }
    if f1 > f2 {
        (x1, f1)
    } else {
        (x2, f2)
    }
}

/// `n` geometrically spaced values from `lo` to `hi` inclusive.
pub fn geomspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![lo];
    }
    let (l0, l1) = (lo.ln(), hi.ln());
    (0..n).map(|i| (l0 + (l1 - l0) * i as f64 / (n - 1) as f64).exp()).collect()
}

pub fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![lo];
    }
    (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn fornberg_reproduces_central_second_difference() {
        let w = fd_weights(0.0, &[-1.0, 0.0, 1.0], 2);
        assert_relative_eq!(w[0], 1.0);
        assert_relative_eq!(w[1], -2.0);
        assert_relative_eq!(w[2], 1.0);
    }

    #[test]
    fn one_sided_first_derivative_is_fourth_order() {
        let h = 1e-2;
        let nodes: Vec<f64> = (0..5).map(|i| i as f64 * h).collect();
        let w = fd_weights(0.0, &nodes, 1);
        let err = |h: f64| {
            let nodes: Vec<f64> = (0..5).map(|i| i as f64 * h).collect();
            let w = fd_weights(0.0, &nodes, 1);
            (nodes.iter().zip(&w).map(|(x, c)| c * x.sin()).sum::<f64>() - 1.0).abs()
        };
        let _ = (w, nodes);
        let ratio = err(h) / err(h / 2.0);
        assert!(err(h) < 1e-8 && ratio > 14.0 && ratio < 18.0, "ratio {ratio}");
    }

    #[test]
    fn tridiagonal_solves_poisson() {
        let n = 5;
        let lower = vec![-1.0; n];
        let upper = vec![-1.0; n];
        let diag = vec![2.0; n];
        let mut rhs = vec![1.0; n];
        solve_tridiagonal(&lower, &diag, &upper, &mut rhs).unwrap();
        // u_i = i(n+1-i)/2 for i = 1..n
        for (i, v) in rhs.iter().enumerate() {
            let k = (i + 1) as f64;
            assert_relative_eq!(*v, k * (n as f64 + 1.0 - k) / 2.0, max_relative = 1e-13);
        }
    }

    #[test]
    fn root_finders_agree() {
        let f = |x: f64| x.exp() - 3.0;
        let a = brent_root(f, 0.0, 2.0, 1e-15).unwrap();
        let b = bisect(f, 0.0, 2.0, 200).unwrap();
        assert_relative_eq!(a, 3f64.ln(), max_relative = 1e-14);
        assert_relative_eq!(b, 3f64.ln(), max_relative = 1e-14);
    }

    #[test]
    fn line_fit_exact() {
        let x = [1.0, 2.0, 3.0, 4.0];
        let y: Vec<f64> = x.iter().map(|v| 2.0 * v - 1.0).collect();
        let fit = fit_line(&x, &y).unwrap();
        assert_relative_eq!(fit.slope, 2.0, max_relative = 1e-14);
        assert_relative_eq!(fit.intercept, -1.0, max_relative = 1e-14);
        assert_relative_eq!(fit.r2, 1.0, max_relative = 1e-14);
    }

    #[test]
    fn golden_section_finds_peak() {
        let (x, fx) = golden_max(|x| -(x - 0.7).powi(2) + 2.0, 0.0, 2.0, 1e-10);
        // Value-only search resolves the argument to about sqrt(eps).
        assert!((x - 0.7).abs() < 1e-6);
        assert_relative_eq!(fx, 2.0, max_relative = 1e-14);
    }
}
