//! Finite-difference weights on arbitrary node sets (Fornberg's recursion).

/// Weights `w[k][j]` such that `sum_j w[k][j] f(x[j])` approximates the
/// `k`-th derivative of `f` at `z`, for `k = 0..=max_order`.
pub fn fd_weights(z: f64, x: &[f64], max_order: usize) -> Vec<Vec<f64>> {
    let n = x.len();
    let mut c = vec![vec![0.0; n]; max_order + 1];
    c[0][0] = 1.0;
    let mut c1 = 1.0;
    let mut c4 = x[0] - z;
    for i in 1..n {
        let mn = i.min(max_order);
        let mut c2 = 1.0;
        let c5 = c4;
        c4 = x[i] - z;
        for j in 0..i {
            let c3 = x[i] - x[j];
            c2 *= c3;
            if j == i - 1 {
                for k in (1..=mn).rev() {
                    c[k][i] = c1 * (k as f64 * c[k - 1][i - 1] - c5 * c[k][i - 1]) / c2;
                }
                c[0][i] = -c1 * c5 * c[0][i - 1] / c2;
            }
            for k in (1..=mn).rev() {
                c[k][j] = (c4 * c[k][j] - k as f64 * c[k - 1][j]) / c3;
            }
            c[0][j] = c4 * c[0][j] / c3;
        }
        c1 = c2;
    }
    c
}

/// First- and second-derivative weights on three nodes `[x0, x1, x2]` at `x1`.
pub fn centered_weights(xm: f64, x0: f64, xp: f64) -> ([f64; 3], [f64; 3]) {
    let hm = x0 - xm;
    let hp = xp - x0;
    let d1 = [-hp / (hm * (hm + hp)), (hp - hm) / (hm * hp), hm / (hp * (hm + hp))];
    let d2 = [2.0 / (hm * (hm + hp)), -2.0 / (hm * hp), 2.0 / (hp * (hm + hp))];
    (d1, d2)
}
