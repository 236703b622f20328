//! Small dense linear algebra on row-major `Vec<f64>` matrices. Problem sizes
//! here are tens of columns at most.

/// Lower-triangular Cholesky factor of a symmetric positive-definite matrix,
/// or `None` when a pivot is not strictly positive.
pub fn cholesky(a: &[f64], n: usize) -> Option<Vec<f64>> {
    let mut l = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..=i {
            let mut sum = a[i * n + j];
            for k in 0..j {
                sum -= l[i * n + k] * l[j * n + k];
            }
            if i == j {
                if sum <= 1e-12 || !sum.is_finite() {
                    return None;
                }
                l[i * n + i] = sum.sqrt();
            } else {
                l[i * n + j] = sum / l[j * n + j];
            }
        }
    }
    Some(l)
}

/// Solves `L Lᵀ x = b` given the Cholesky factor `L`.
pub fn cholesky_solve(l: &[f64], n: usize, b: &[f64]) -> Vec<f64> {
    let mut y = vec![0.0; n];
    for i in 0..n {
        let mut s = b[i];
        for k in 0..i {
            s -= l[i * n + k] * y[k];
        }
        y[i] = s / l[i * n + i];
    }
    let mut x = vec![0.0; n];
    for i in (0..n).rev() {
        let mut s = y[i];
        for k in i + 1..n {
            s -= l[k * n + i] * x[k];
        }
        x[i] = s / l[i * n + i];
    }
    x
}

/// Ridge regression with an unpenalized intercept. `rows` are feature
/// vectors of width `p`. Returns `(intercept, coefficients)`.
pub fn ridge(rows: &[Vec<f64>], target: &[f64], lambda: f64) -> (f64, Vec<f64>) {
    let n = rows.len();
    let p = rows.first().map_or(0, Vec::len);
    let ty = target.iter().sum::<f64>() / n as f64;
    if p == 0 {
        return (ty, Vec::new());
    }
    let mut mean = vec![0.0; p];
    for r in rows {
        for (m, v) in mean.iter_mut().zip(r) {
            *m += v / n as f64;
        }
    }
    let mut gram = vec![0.0; p * p];
    let mut rhs = vec![0.0; p];
    for (r, &t) in rows.iter().zip(target) {
        for a in 0..p {
            let da = r[a] - mean[a];
            rhs[a] += da * (t - ty);
            for b in 0..=a {
                gram[a * p + b] += da * (r[b] - mean[b]);
            }
        }
    }
    for a in 0..p {
        for b in 0..a {
            gram[b * p + a] = gram[a * p + b];
        }
        gram[a * p + a] += lambda;
    }
    let mut jitter = 0.0;
    let l = loop {
        let mut g = gram.clone();
        for a in 0..p {
            g[a * p + a] += jitter;
        }
        if let Some(l) = cholesky(&g, p) {
            break l;
        }
        jitter = if jitter == 0.0 { 1e-8 } else { jitter * 10.0 };
    };
    let coef = cholesky_solve(&l, p, &rhs);
    let intercept = ty - coef.iter().zip(&mean).map(|(c, m)| c * m).sum::<f64>();
    (intercept, coef)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cholesky_round_trip() {
        let a = [4.0, 2.0, 0.4, 2.0, 5.0, 1.0, 0.4, 1.0, 3.0];
        let l = cholesky(&a, 3).unwrap();
        let x = cholesky_solve(&l, 3, &[1.0, 2.0, 3.0]);
        for i in 0..3 {
            let lhs: f64 = (0..3).map(|j| a[i * 3 + j] * x[j]).sum();
            assert!((lhs - [1.0, 2.0, 3.0][i]).abs() < 1e-12);
        }
        assert!(cholesky(&[1.0, 2.0, 2.0, 1.0], 2).is_none());
    }

    #[test]
    fn ridge_recovers_line() {
        let rows: Vec<Vec<f64>> = (0..50).map(|i| vec![i as f64]).collect();
        let y: Vec<f64> = (0..50).map(|i| 3.0 + 2.0 * i as f64).collect();
        let (b, w) = ridge(&rows, &y, 1e-9);
        assert!((b - 3.0).abs() < 1e-6);
        assert!((w[0] - 2.0).abs() < 1e-9);
    }
}
