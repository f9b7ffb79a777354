//! Small dense and tridiagonal solvers used throughout the crate.

/// Solves a tridiagonal system with the Thomas algorithm.
///
/// `lower` and `upper` have length `n - 1`, `diag` and `rhs` length `n`.
/// The matrix is assumed nonsingular (all our systems are SPD shifts of a
/// Dirichlet stiffness matrix).
pub fn solve_tridiagonal(lower: &[f64], diag: &[f64], upper: &[f64], rhs: &[f64]) -> Vec<f64> {
    let n = diag.len();
    assert_eq!(rhs.len(), n);
    assert_eq!(lower.len(), n.saturating_sub(1));
    assert_eq!(upper.len(), n.saturating_sub(1));
    if n == 0 {
        return Vec::new();
    }
    let mut c = vec![0.0; n];
    let mut d = vec![0.0; n];
    c[0] = if n > 1 { upper[0] / diag[0] } else { 0.0 };
    d[0] = rhs[0] / diag[0];
    for k in 1..n {
        let m = diag[k] - lower[k - 1] * c[k - 1];
        if k < n - 1 {
            c[k] = upper[k] / m;
        }
        d[k] = (rhs[k] - lower[k - 1] * d[k - 1]) / m;
    }
    let mut x = d;
    for k in (0..n - 1).rev() {
        x[k] -= c[k] * x[k + 1];
    }
    x
}

/// Solves a small dense system by Gaussian elimination with partial pivoting.
/// Returns `None` when the matrix is numerically singular.
pub fn solve_dense(a: &[Vec<f64>], b: &[f64]) -> Option<Vec<f64>> {
    let n = b.len();
    let mut m: Vec<Vec<f64>> = a.iter().map(|row| row.clone()).collect();
    let mut x = b.to_vec();
    for col in 0..n {
        let mut piv = col;
        for r in col + 1..n {
            if m[r][col].abs() > m[piv][col].abs() {
                piv = r;
            }
        }
        if m[piv][col].abs() < 1e-300 {
            return None;
        }
        m.swap(col, piv);
        x.swap(col, piv);
        for r in col + 1..n {
            let f = m[r][col] / m[col][col];
            for c in col..n {
                m[r][c] -= f * m[col][c];
            }
            x[r] -= f * x[col];
        }
    }
    for col in (0..n).rev() {
        for r in col + 1..n {
            x[col] -= m[col][r] * x[r];
        }
        x[col] /= m[col][col];
    }
    if x.iter().all(|v| v.is_finite()) {
        Some(x)
    } else {
        None
    }
}

/// Inverts a small dense matrix by Gauss–Jordan elimination with partial
/// pivoting. `None` when numerically singular.
pub fn invert_dense(a: &[Vec<f64>]) -> Option<Vec<Vec<f64>>> {
    let n = a.len();
    let mut m: Vec<Vec<f64>> = a.iter().map(|row| row.clone()).collect();
    let mut inv: Vec<Vec<f64>> = (0..n)
        .map(|i| (0..n).map(|j| if i == j { 1.0 } else { 0.0 }).collect())
        .collect();
    for col in 0..n {
        let mut piv = col;
        for r in col + 1..n {
            if m[r][col].abs() > m[piv][col].abs() {
                piv = r;
            }
        }
        if m[piv][col].abs() < 1e-300 {
            return None;
        }
        m.swap(col, piv);
        inv.swap(col, piv);
        let d = m[col][col];
        for c in 0..n {
            m[col][c] /= d;
            inv[col][c] /= d;
        }
        for r in 0..n {
            if r == col {
                continue;
            }
            let f = m[r][col];
            if f != 0.0 {
                for c in 0..n {
                    m[r][c] -= f * m[col][c];
                    inv[r][c] -= f * inv[col][c];
                }
            }
        }
    }
    if inv.iter().flatten().all(|v| v.is_finite()) {
        Some(inv)
    } else {
        None
    }
}

/// Solves a block-tridiagonal system whose off-diagonal blocks are
/// diagonal matrices (the structure of a system of radial equations
/// coupled only through zeroth-order nodal terms).
///
/// `diag[k]` is the dense m×m block at node k; `off[k]` holds the
/// diagonal entries of the (symmetric) coupling block between nodes k
/// and k+1; `rhs[k]` is the m-vector at node k. Returns the solution in
/// the same node-major layout, or `None` on a singular pivot block.
pub fn solve_block_tridiagonal(
    diag: &[Vec<Vec<f64>>],
    off: &[Vec<f64>],
    rhs: &[Vec<f64>],
) -> Option<Vec<Vec<f64>>> {
    let n = diag.len();
    if n == 0 {
        return Some(Vec::new());
    }
    let m = diag[0].len();
    assert_eq!(off.len(), n - 1);
    assert_eq!(rhs.len(), n);
    // forward elimination: D̃_k = D_k − O_{k−1} D̃_{k−1}^{-1} O_{k−1},
    // r̃_k = r_k − O_{k−1} D̃_{k−1}^{-1} r̃_{k−1}
    let mut inv: Vec<Vec<Vec<f64>>> = Vec::with_capacity(n);
    let mut red: Vec<Vec<f64>> = Vec::with_capacity(n);
    inv.push(invert_dense(&diag[0])?);
    red.push(rhs[0].clone());
    for k in 1..n {
        let o = &off[k - 1];
        let prev_inv = &inv[k - 1];
        let mut dk = diag[k].clone();
        for i in 0..m {
            for j in 0..m {
                dk[i][j] -= o[i] * prev_inv[i][j] * o[j];
            }
        }
        let mut rk = rhs[k].clone();
        let prev_red = &red[k - 1];
        for i in 0..m {
            let mut acc = 0.0;
            for j in 0..m {
                acc += prev_inv[i][j] * prev_red[j];
            }
            rk[i] -= o[i] * acc;
        }
        inv.push(invert_dense(&dk)?);
        red.push(rk);
    }
    // back substitution
    let mut x = vec![vec![0.0; m]; n];
    for i in 0..m {
        x[n - 1][i] = (0..m).map(|j| inv[n - 1][i][j] * red[n - 1][j]).sum();
    }
    for k in (0..n - 1).rev() {
        let o = &off[k];
        let mut r = red[k].clone();
        for i in 0..m {
            r[i] -= o[i] * x[k + 1][i];
        }
        for i in 0..m {
            x[k][i] = (0..m).map(|j| inv[k][i][j] * r[j]).sum();
        }
    }
    if x.iter().flatten().all(|v| v.is_finite()) {
        Some(x)
    } else {
        None
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};

    #[test]
    fn tridiagonal_matches_direct() {
        let lower = [1.0, 2.0, -1.0];
        let diag = [4.0, 5.0, 6.0, 4.0];
        let upper = [-1.0, 1.0, 0.5];
        let x_true = [1.0, -2.0, 0.5, 3.0];
        let mut rhs = [0.0; 4];
        for k in 0..4 {
            rhs[k] = diag[k] * x_true[k];
            if k > 0 {
                rhs[k] += lower[k - 1] * x_true[k - 1];
            }
            if k < 3 {
                rhs[k] += upper[k] * x_true[k + 1];
            }
        }
        let x = solve_tridiagonal(&lower, &diag, &upper, &rhs);
        for k in 0..4 {
            assert!((x[k] - x_true[k]).abs() < 1e-12);
        }
    }

    #[test]
    fn dense_solve_roundtrip() {
        let a = vec![
            vec![2.0, 1.0, 0.0],
            vec![1.0, 3.0, -1.0],
            vec![0.0, -1.0, 2.5],
        ];
        let x_true = [0.5, -1.0, 2.0];
        let b: Vec<f64> = (0..3)
            .map(|i| (0..3).map(|j| a[i][j] * x_true[j]).sum())
            .collect();
        let x = solve_dense(&a, &b).unwrap();
        for k in 0..3 {
            assert!((x[k] - x_true[k]).abs() < 1e-12);
        }
    }

    #[test]
    fn dense_singular_rejected() {
        let a = vec![vec![1.0, 2.0], vec![2.0, 4.0]];
        assert!(solve_dense(&a, &[1.0, 2.0]).is_none());
    }

    #[test]
    fn invert_roundtrip() {
        let a = vec![
            vec![2.0, 1.0, 0.0],
            vec![1.0, 3.0, -1.0],
            vec![0.0, -1.0, 2.5],
        ];
        let inv = invert_dense(&a).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                let prod: f64 = (0..3).map(|k| a[i][k] * inv[k][j]).sum();
                let expect = if i == j { 1.0 } else { 0.0 };
                assert!((prod - expect).abs() < 1e-12);
            }
        }
        assert!(invert_dense(&[vec![1.0, 2.0], vec![2.0, 4.0]]).is_none());
    }

    #[test]
    fn block_tridiagonal_matches_dense_solve() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let (n, m) = (7usize, 3usize);
        // diagonally dominant random blocks
        let diag: Vec<Vec<Vec<f64>>> = (0..n)
            .map(|_| {
                (0..m)
                    .map(|i| {
                        (0..m)
                            .map(|j| {
                                if i == j {
                                    rng.gen_range(6.0..9.0)
                                } else {
                                    rng.gen_range(-1.0..1.0)
                                }
                            })
                            .collect()
                    })
                    .collect()
            })
            .collect();
        let off: Vec<Vec<f64>> = (0..n - 1)
            .map(|_| (0..m).map(|_| rng.gen_range(-1.0..1.0)).collect())
            .collect();
        let x_true: Vec<Vec<f64>> = (0..n)
            .map(|_| (0..m).map(|_| rng.gen_range(-2.0..2.0)).collect())
            .collect();
        let mut rhs = vec![vec![0.0; m]; n];
        for k in 0..n {
            for i in 0..m {
                let mut v: f64 = (0..m).map(|j| diag[k][i][j] * x_true[k][j]).sum();
                if k > 0 {
                    v += off[k - 1][i] * x_true[k - 1][i];
                }
                if k + 1 < n {
                    v += off[k][i] * x_true[k + 1][i];
                }
                rhs[k][i] = v;
            }
        }
        let x = solve_block_tridiagonal(&diag, &off, &rhs).unwrap();
        for k in 0..n {
            for i in 0..m {
                assert!(
                    (x[k][i] - x_true[k][i]).abs() < 1e-10,
                    "node {k} comp {i}: {} vs {}",
                    x[k][i],
                    x_true[k][i]
                );
            }
        }
    }
}
