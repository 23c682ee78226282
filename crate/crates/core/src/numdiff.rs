//! Central finite differences and observed-information standard errors.

use nalgebra::DMatrix;

fn step(x: f64) -> f64 {
    1e-4 * x.abs().max(1.0)
}

/// Central-difference gradient with absolute step `h` in every coordinate.
pub fn gradient<F: Fn(&[f64]) -> f64>(f: F, x: &[f64], h: f64) -> Vec<f64> {
    let mut work = x.to_vec();
    (0..x.len())
        .map(|i| {
            work[i] = x[i] + h;
            let up = f(&work);
            work[i] = x[i] - h;
            let down = f(&work);
            work[i] = x[i];
            (up - down) / (2.0 * h)
        })
        .collect()
}

/// Central-difference Hessian.
pub fn hessian<F: Fn(&[f64]) -> f64>(f: F, x: &[f64]) -> DMatrix<f64> {
    let p = x.len();
    let mut h = DMatrix::zeros(p, p);
    let mut work = x.to_vec();
    let f0 = f(x);
    for i in 0..p {
        let hi = step(x[i]);
        work[i] = x[i] + hi;
        let up = f(&work);
        work[i] = x[i] - hi;
        let down = f(&work);
        work[i] = x[i];
        h[(i, i)] = (up - 2.0 * f0 + down) / (hi * hi);
        for j in 0..i {
            let hj = step(x[j]);
            let mut eval = |si: f64, sj: f64| {
                work[i] = x[i] + si * hi;
                work[j] = x[j] + sj * hj;
                let v = f(&work);
                work[i] = x[i];
                work[j] = x[j];
                v
            };
            let val = (eval(1.0, 1.0) - eval(1.0, -1.0) - eval(-1.0, 1.0) + eval(-1.0, -1.0))
                / (4.0 * hi * hj);
            h[(i, j)] = val;
            h[(j, i)] = val;
        }
    }
    h
}

/// Square roots of the diagonal of `(-H)^{-1}` for a log-likelihood `f`.
/// Entries are NaN when the observed information is not invertible or a
/// variance comes out negative.
pub fn observed_information_se<F: Fn(&[f64]) -> f64>(f: F, x: &[f64]) -> Vec<f64> {
    let info = -hessian(f, x);
    let p = x.len();
    let inv = match info.clone().cholesky() {
        Some(ch) => Some(ch.inverse()),
        None => info.try_inverse(),
    };
    match inv {
        Some(cov) => (0..p)
            .map(|i| {
                let v = cov[(i, i)];
                if v.is_finite() && v >= 0.0 {
                    v.sqrt()
                } else {
                    f64::NAN
                }
            })
            .collect(),
        None => vec![f64::NAN; p],
    }
}
