//! Test-only reference solvers. They share no code with the library's linear
//! algebra: matrices are plain `Vec<Vec<f64>>`.

#![allow(dead_code)]

use linkrec::dense::DenseMatrix;
use linkrec::sparse::SessionMatrix;
use rand::Rng;

pub type Mat = Vec<Vec<f64>>;

pub fn zeros(r: usize, c: usize) -> Mat {
    vec![vec![0.0; c]; r]
}

pub fn eye(n: usize) -> Mat {
    let mut m = zeros(n, n);
    for (i, row) in m.iter_mut().enumerate() {
        row[i] = 1.0;
    }
    m
}

pub fn transpose(a: &Mat) -> Mat {
    let (r, c) = (a.len(), a[0].len());
    (0..c).map(|j| (0..r).map(|i| a[i][j]).collect()).collect()
}

pub fn matmul(a: &Mat, b: &Mat) -> Mat {
    let (r, k, c) = (a.len(), b.len(), b[0].len());
    let mut out = zeros(r, c);
    for i in 0..r {
        for j in 0..c {
            out[i][j] = (0..k).map(|t| a[i][t] * b[t][j]).sum();
        }
    }
    out
}

pub fn lin(a: &Mat, x: f64, b: &Mat, y: f64) -> Mat {
    a.iter()
        .zip(b)
        .map(|(ra, rb)| ra.iter().zip(rb).map(|(p, q)| x * p + y * q).collect())
        .collect()
}

pub fn frobenius_distance(a: &Mat, b: &Mat) -> f64 {
    a.iter()
        .zip(b)
        .flat_map(|(ra, rb)| ra.iter().zip(rb).map(|(p, q)| (p - q) * (p - q)))
        .sum::<f64>()
        .sqrt()
}

pub fn max_abs(a: &Mat) -> f64 {
    a.iter().flatten().fold(0.0, |m, v| m.max(v.abs()))
}

pub fn to_mat(m: &DenseMatrix<f64>) -> Mat {
    (0..m.rows()).map(|i| m.row(i).to_vec()).collect()
}

pub fn sparse_to_mat(m: &SessionMatrix<f64>) -> Mat {
    let mut out = zeros(m.rows(), m.cols());
    for (i, row) in out.iter_mut().enumerate() {
        for (j, v) in m.row_entries(i) {
            row[j] = v;
        }
    }
    out
}

pub fn from_mat(m: &Mat) -> DenseMatrix<f64> {
    DenseMatrix::from_rows(m)
}

pub fn sparse_from_mat(m: &Mat) -> SessionMatrix<f64> {
    let cols = m[0].len();
    SessionMatrix::from_rows(
        cols,
        m.iter()
            .map(|r| r.iter().enumerate().filter(|(_, v)| **v != 0.0).map(|(j, v)| (j, *v)).collect::<Vec<_>>()),
    )
}

/// Solves `A X = B` by Gaussian elimination with partial pivoting.
pub fn gauss_solve(a: &Mat, b: &Mat) -> Mat {
    let n = a.len();
    let m = b[0].len();
    let mut aug: Mat = a.iter().zip(b).map(|(ra, rb)| ra.iter().chain(rb).copied().collect()).collect();
    for col in 0..n {
        let pivot = (col..n)
            .max_by(|&x, &y| aug[x][col].abs().total_cmp(&aug[y][col].abs()))
            .unwrap();
        aug.swap(col, pivot);
        let p = aug[col][col];
        assert!(p.abs() > 1e-300, "singular system");
        for r in 0..n {
            if r != col {
                let f = aug[r][col] / p;
                if f != 0.0 {
                    for c in col..n + m {
                        aug[r][c] -= f * aug[col][c];
                    }
                }
            }
        }
    }
    (0..n).map(|r| (0..m).map(|c| aug[r][n + c] / aug[r][r]).collect()).collect()
}

/// Minimizes `‖X − XB‖² + λ‖B‖²` subject to `diag(B) ≤ ξ` by accelerated
/// projected gradient with adaptive restart. Returns the iterate and the
/// iteration count.
pub fn projected_gradient_similarity(x: &Mat, lambda: f64, xi: f64) -> (Mat, usize) {
    let n = x[0].len();
    let g = matmul(&transpose(x), x);
    // Lipschitz constant of the gradient 2(G + λI)(B) − 2G, bounded by the Frobenius norm
    let lip = 2.0 * (g.iter().flatten().map(|v| v * v).sum::<f64>().sqrt() + lambda);
    let step = 1.0 / lip;
    let project = |b: &mut Mat| {
        for (j, row) in b.iter_mut().enumerate() {
            if row[j] > xi {
                row[j] = xi;
            }
        }
    };
    let grad = |b: &Mat| -> Mat {
        // 2(G B − G + λB)
        let gb = matmul(&g, b);
        (0..n)
            .map(|i| (0..n).map(|j| 2.0 * (gb[i][j] - g[i][j] + lambda * b[i][j])).collect())
            .collect()
    };
    let mut b = zeros(n, n);
    let mut y = b.clone();
    let mut t = 1.0f64;
    for iter in 1..=2_000_000 {
        let gy = grad(&y);
        let mut next = lin(&y, 1.0, &gy, -step);
        project(&mut next);
        let delta = lin(&next, 1.0, &b, -1.0);
        // gradient-mapping size at y; converged when the fixed point is reached
        let mapping = lin(&y, 1.0, &next, -1.0);
        if max_abs(&mapping) * lip < 1e-11 {
            return (next, iter);
        }
        let t_next = (1.0 + (1.0 + 4.0 * t * t).sqrt()) / 2.0;
        // restart momentum when it points uphill
        let uphill: f64 = mapping.iter().flatten().zip(delta.iter().flatten()).map(|(m, d)| m * d).sum();
        if uphill > 0.0 {
            t = 1.0;
            y = next.clone();
        } else {
            y = lin(&next, 1.0 + (t - 1.0) / t_next, &b, -(t - 1.0) / t_next);
            t = t_next;
        }
        b = next;
    }
    (b, 2_000_000)
}

/// Minimizer of `α‖X′ − X′B‖² + (1−α)‖Z − YB‖² + λ‖T − B‖²` from normal
/// equations assembled on explicitly stacked designs.
pub fn normal_equations_link(x_prime: &Mat, y: &Mat, z: &Mat, t: &Mat, alpha: f64, lambda: f64) -> Mat {
    let n = t.len();
    let (sa, sb) = (alpha.sqrt(), (1.0 - alpha).sqrt());
    let mut design: Mat = x_prime.iter().map(|r| r.iter().map(|v| sa * v).collect()).collect();
    design.extend(y.iter().map(|r| r.iter().map(|v| sb * v).collect::<Vec<_>>()));
    let mut target: Mat = x_prime.iter().map(|r| r.iter().map(|v| sa * v).collect()).collect();
    target.extend(z.iter().map(|r| r.iter().map(|v| sb * v).collect::<Vec<_>>()));
    let dt = transpose(&design);
    let lhs = lin(&matmul(&dt, &design), 1.0, &eye(n), lambda);
    let rhs = lin(&matmul(&dt, &target), 1.0, t, lambda);
    gauss_solve(&lhs, &rhs)
}

/// `(YᵀY + λI)⁻¹ YᵀZ`.
pub fn plain_ridge(y: &Mat, z: &Mat, lambda: f64) -> Mat {
    let n = y[0].len();
    let yt = transpose(y);
    gauss_solve(&lin(&matmul(&yt, y), 1.0, &eye(n), lambda), &matmul(&yt, z))
}

/// Binary session matrix with `m` rows over `n` items, every row nonempty.
pub fn random_binary_sessions(rng: &mut impl Rng, m: usize, n: usize, density: f64) -> Mat {
    (0..m)
        .map(|_| {
            let mut row: Vec<f64> = (0..n).map(|_| if rng.gen_bool(density) { 1.0 } else { 0.0 }).collect();
            if row.iter().all(|v| *v == 0.0) {
                row[rng.gen_range(0..n)] = 1.0;
            }
            row
        })
        .collect()
}

/// Nonnegative rows summing to one, with some zeros.
pub fn random_stochastic_rows(rng: &mut impl Rng, m: usize, n: usize) -> Mat {
    (0..m)
        .map(|_| {
            let mut row: Vec<f64> = (0..n).map(|_| if rng.gen_bool(0.6) { rng.gen_range(0.05..1.0) } else { 0.0 }).collect();
            if row.iter().all(|v| *v == 0.0) {
                row[rng.gen_range(0..n)] = 1.0;
            }
            let s: f64 = row.iter().sum();
            row.iter_mut().for_each(|v| *v /= s);
            row
        })
        .collect()
}
