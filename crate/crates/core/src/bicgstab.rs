//! Jacobi-preconditioned BiCGSTAB for sparse systems with a fixed number of
//! entries per row.

/// Row-wise sparse matrix with exactly `K` (possibly repeated) columns per row.
#[derive(Debug, Clone)]
pub struct FixedRowMatrix<const K: usize> {
    pub cols: Vec<[usize; K]>,
    pub vals: Vec<[f64; K]>,
}

impl<const K: usize> FixedRowMatrix<K> {
    pub fn len(&self) -> usize {
        self.cols.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cols.is_empty()
    }

    pub fn matvec(&self, x: &[f64], out: &mut [f64]) {
        for (o, (c, v)) in out.iter_mut().zip(self.cols.iter().zip(&self.vals)) {
            let mut s = 0.0;
            for k in 0..K {
                s += v[k] * x[c[k]];
            }
            *o = s;
        }
    }

    pub fn diagonal(&self) -> Vec<f64> {
        self.cols
            .iter()
            .zip(&self.vals)
            .enumerate()
            .map(|(i, (c, v))| (0..K).filter(|&k| c[k] == i).map(|k| v[k]).sum())
            .collect()
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Solve `A x = b` from `x = 0`. Returns the solution and the final relative
/// residual, or `Err(relative residual)` on breakdown or stagnation.
pub fn bicgstab<const K: usize>(a: &FixedRowMatrix<K>, b: &[f64], rtol: f64, max_iter: usize) -> Result<Vec<f64>, f64> {
    let n = b.len();
    let dinv: Vec<f64> = a.diagonal().iter().map(|&d| if d != 0.0 { 1.0 / d } else { 1.0 }).collect();
    let bnorm = norm(b);
    let mut x = vec![0.0; n];
    if bnorm == 0.0 {
        return Ok(x);
    }
    let mut r = b.to_vec();
    let r_hat = r.clone();
    let (mut rho, mut alpha, mut omega) = (1.0, 1.0, 1.0);
    let mut v = vec![0.0; n];
    let mut p = vec![0.0; n];
    let mut y = vec![0.0; n];
    let mut z = vec![0.0; n];
    let mut s = vec![0.0; n];
    let mut t = vec![0.0; n];
    for _ in 0..max_iter {
        let rho_new = dot(&r_hat, &r);
        if rho_new == 0.0 || !rho_new.is_finite() {
            return Err(norm(&r) / bnorm);
        }
        let beta = (rho_new / rho) * (alpha / omega);
        rho = rho_new;
        for i in 0..n {
            p[i] = r[i] + beta * (p[i] - omega * v[i]);
            y[i] = dinv[i] * p[i];
        }
        a.matvec(&y, &mut v);
        let denom = dot(&r_hat, &v);
        if denom == 0.0 {
            return Err(norm(&r) / bnorm);
        }
        alpha = rho / denom;
        for i in 0..n {
            s[i] = r[i] - alpha * v[i];
        }
        if norm(&s) <= rtol * bnorm {
            for i in 0..n {
                x[i] += alpha * y[i];
            }
            return Ok(x);
        }
        for i in 0..n {
            z[i] = dinv[i] * s[i];
        }
        a.matvec(&z, &mut t);
        let tt = dot(&t, &t);
        if tt == 0.0 {
            return Err(norm(&s) / bnorm);
        }
        omega = dot(&t, &s) / tt;
        for i in 0..n {
            x[i] += alpha * y[i] + omega * z[i];
            r[i] = s[i] - omega * t[i];
        }
        if norm(&r) <= rtol * bnorm {
            return Ok(x);
        }
        if omega == 0.0 {
            return Err(norm(&r) / bnorm);
        }
    }
    Err(norm(&r) / bnorm)
}
