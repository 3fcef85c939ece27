//! Small dense linear-algebra helpers shared by the analysis modules.
//!
//! Everything here works on `nalgebra::DMatrix<f64>` (or its complex
//! counterpart for the Schur machinery). Dimensions are desk-scale
//! (n ≤ 64), so clarity wins over blocking or BLAS-level tuning.

use nalgebra::{Complex, DMatrix, DVector, SymmetricEigen};

pub type Matrix = DMatrix<f64>;
pub type Vector = DVector<f64>;
type CMatrix = DMatrix<Complex<f64>>;

/// Largest eigenvalue of a symmetric matrix.
pub fn sym_lambda_max(m: &Matrix) -> f64 {
    match m.nrows() {
        0 => 0.0,
        1 => m[(0, 0)],
        2 => {
            let (a, b, d) = (m[(0, 0)], 0.5 * (m[(0, 1)] + m[(1, 0)]), m[(1, 1)]);
            let mean = 0.5 * (a + d);
            let rad = (0.25 * (a - d) * (a - d) + b * b).sqrt();
            mean + rad
        }
        _ => SymmetricEigen::new(m.clone())
            .eigenvalues
            .iter()
            .cloned()
            .fold(f64::NEG_INFINITY, f64::max),
    }
}

/// Spectral norm (largest singular value).
pub fn spectral_norm(m: &Matrix) -> f64 {
    if m.is_empty() {
        return 0.0;
    }
    if m.nrows() == 1 || m.ncols() == 1 {
        return m.norm();
    }
    if m.nrows() == 2 && m.ncols() == 2 {
        let fro2 = m.norm_squared();
        let det = m[(0, 0)] * m[(1, 1)] - m[(0, 1)] * m[(1, 0)];
        let disc = (fro2 * fro2 - 4.0 * det * det).max(0.0);
        return (0.5 * (fro2 + disc.sqrt())).max(0.0).sqrt();
    }
    m.clone()
        .svd(false, false)
        .singular_values
        .iter()
        .cloned()
        .fold(0.0, f64::max)
}

/// Condition number in the spectral norm; infinite for singular input.
pub fn condition_number(m: &Matrix) -> f64 {
    let sv = m.clone().svd(false, false).singular_values;
    let max = sv.iter().cloned().fold(0.0, f64::max);
    let min = sv.iter().cloned().fold(f64::INFINITY, f64::min);
    if min <= 0.0 {
        f64::INFINITY
    } else {
        max / min
    }
}

/// Solves `x · m = rhs` for `x` (right division) with an LU factorization.
pub fn right_solve(rhs: &Matrix, m: &Matrix) -> Option<Matrix> {
    let lu = m.transpose().lu();
    lu.solve(&rhs.transpose()).map(|x| x.transpose())
}

/// Inverse through an LU solve against the identity.
pub fn lu_inverse(m: &Matrix) -> Option<Matrix> {
    m.clone().lu().solve(&Matrix::identity(m.nrows(), m.ncols()))
}

/// Orthonormal basis for the column span, assuming full column rank.
pub fn orthonormalize(m: &Matrix) -> Matrix {
    if m.ncols() == 0 {
        return m.clone();
    }
    m.clone().qr().q().columns(0, m.ncols()).into_owned()
}

/// Smallest principal angle between two subspaces given by orthonormal
/// bases. Returns π/2 when either subspace is trivial.
pub fn smallest_principal_angle(a: &Matrix, b: &Matrix) -> f64 {
    if a.ncols() == 0 || b.ncols() == 0 {
        return std::f64::consts::FRAC_PI_2;
    }
    let cross = a.transpose() * b;
    let cos_max = spectral_norm(&cross).min(1.0);
    // sin via the residual of projecting b onto span(a), accurate near zero
    let resid = b - a * (a.transpose() * b);
    let sv = resid.svd(false, false).singular_values;
    let sin_min = sv.iter().cloned().fold(f64::INFINITY, f64::min).min(1.0);
    sin_min.atan2(cos_max)
}

/// Largest principal-angle sine between the column spans of two bases
/// (a subspace distance in [0, 1]).
pub fn subspace_distance(a: &Matrix, b: &Matrix) -> f64 {
    if a.ncols() != b.ncols() {
        return 1.0;
    }
    if a.ncols() == 0 {
        return 0.0;
    }
    let qa = orthonormalize(a);
    let qb = orthonormalize(b);
    let resid = &qb - &qa * (qa.transpose() * &qb);
    spectral_norm(&resid).min(1.0)
}

/// Oblique projector onto span(x1) along span(x2), computed from the block
/// system `[x1 x2] c = x`. Returns `None` when the blocks do not form a basis.
pub fn oblique_projector(x1: &Matrix, x2: &Matrix) -> Option<Matrix> {
    let n = x1.nrows();
    let k = x1.ncols();
    if k + x2.ncols() != n {
        return None;
    }
    if k == 0 {
        return Some(Matrix::zeros(n, n));
    }
    if k == n {
        return Some(Matrix::identity(n, n));
    }
    let mut basis = Matrix::zeros(n, n);
    basis.columns_mut(0, k).copy_from(x1);
    basis.columns_mut(k, n - k).copy_from(x2);
    let coords = basis.lu().solve(&Matrix::identity(n, n))?;
    Some(x1 * coords.rows(0, k))
}

/// Rank-revealing factorization `p = left · right` with `left` n×k and
/// `right` k×n, k = numerical rank of `p`.
pub fn low_rank_factors(p: &Matrix, rel_tol: f64) -> (Matrix, Matrix) {
    let n = p.nrows();
    let svd = p.clone().svd(true, true);
    let u = svd.u.expect("requested U");
    let vt = svd.v_t.expect("requested V^T");
    let smax = svd.singular_values.iter().cloned().fold(0.0, f64::max);
    let keep: Vec<usize> = (0..svd.singular_values.len())
        .filter(|&i| smax > 0.0 && svd.singular_values[i] > rel_tol * smax)
        .collect();
    let k = keep.len();
    let mut left = Matrix::zeros(n, k);
    let mut right = Matrix::zeros(k, p.ncols());
    for (j, &i) in keep.iter().enumerate() {
        left.set_column(j, &(u.column(i) * svd.singular_values[i]));
        right.set_row(j, &vt.row(i));
    }
    (left, right)
}

/// Ordinary least-squares slope of `ys` against `xs`.
pub fn ls_slope(xs: &[f64], ys: &[f64]) -> Option<f64> {
    if xs.len() < 2 || xs.len() != ys.len() {
        return None;
    }
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx) = (0.0, 0.0);
    for (x, y) in xs.iter().zip(ys) {
        sxy += (x - mx) * (y - my);
        sxx += (x - mx) * (x - mx);
    }
    if sxx <= 0.0 {
        None
    } else {
        Some(sxy / sxx)
    }
}

/// Complex Schur form `a = z t z^H` with the eigenvalues selected by `first`
/// moved to the leading diagonal block. Returns `(z, t, k)` with `k` the size
/// of the leading block.
pub fn ordered_schur(a: &Matrix, first: impl Fn(Complex<f64>) -> bool) -> (CMatrix, CMatrix, usize) {
    let n = a.nrows();
    let (mut z, mut t) = a.map(|x| Complex::new(x, 0.0)).schur().unpack();
    for i in 0..n {
        for j in 0..i {
            t[(i, j)] = Complex::new(0.0, 0.0);
        }
    }
    // bubble selected eigenvalues to the front by adjacent swaps
    let mut k = 0;
    for j in 0..n {
        if first(t[(j, j)]) {
            let mut pos = j;
            while pos > k {
                swap_adjacent(&mut t, &mut z, pos - 1);
                pos -= 1;
            }
            k += 1;
        }
    }
    (z, t, k)
}

/// Exchanges the diagonal entries at `p` and `p + 1` of an upper triangular
/// matrix with a unitary rotation, updating the Schur vectors.
fn swap_adjacent(t: &mut CMatrix, z: &mut CMatrix, p: usize) {
    let n = t.nrows();
    let a = t[(p, p)];
    let b = t[(p, p + 1)];
    let c = t[(p + 1, p + 1)];
    // eigenvector of the 2×2 block for eigenvalue c
    let x1 = b;
    let x2 = c - a;
    let nrm = (x1.norm_sqr() + x2.norm_sqr()).sqrt();
    if nrm == 0.0 {
        return;
    }
    let (g11, g21) = (x1 / nrm, x2 / nrm);
    let (g12, g22) = (-g21.conj(), g11.conj());
    // t <- G^H t
    for col in 0..n {
        let r0 = t[(p, col)];
        let r1 = t[(p + 1, col)];
        t[(p, col)] = g11.conj() * r0 + g21.conj() * r1;
        t[(p + 1, col)] = g12.conj() * r0 + g22.conj() * r1;
    }
    // t <- t G, z <- z G
    for m in [&mut *t, &mut *z] {
        for row in 0..n {
            let c0 = m[(row, p)];
            let c1 = m[(row, p + 1)];
            m[(row, p)] = c0 * g11 + c1 * g21;
            m[(row, p + 1)] = c0 * g12 + c1 * g22;
        }
    }
    t[(p + 1, p)] = Complex::new(0.0, 0.0);
}

/// Solves `t11 y − y t22 = rhs` for upper triangular `t11`, `t22` with
/// disjoint spectra, column by column with back substitution.
pub fn triangular_sylvester(t11: &CMatrix, t22: &CMatrix, rhs: &CMatrix) -> CMatrix {
    let k = t11.nrows();
    let m = t22.nrows();
    let mut y = CMatrix::zeros(k, m);
    for j in 0..m {
        let mut col: Vec<Complex<f64>> = (0..k).map(|i| rhs[(i, j)]).collect();
        for l in 0..j {
            let coeff = t22[(l, j)];
            for (i, c) in col.iter_mut().enumerate() {
                *c += y[(i, l)] * coeff;
            }
        }
        let shift = t22[(j, j)];
        for i in (0..k).rev() {
            let mut acc = col[i];
            for l in (i + 1)..k {
                acc -= t11[(i, l)] * y[(l, j)];
            }
            y[(i, j)] = acc / (t11[(i, i)] - shift);
        }
    }
    y
}

/// Spectral projector of `a` onto the invariant subspace of the eigenvalues
/// selected by `first`, together with the number of selected eigenvalues.
pub fn spectral_projector(a: &Matrix, first: impl Fn(Complex<f64>) -> bool) -> (Matrix, usize) {
    let n = a.nrows();
    let (z, t, k) = ordered_schur(a, first);
    if k == 0 {
        return (Matrix::zeros(n, n), 0);
    }
    if k == n {
        return (Matrix::identity(n, n), n);
    }
    let t11 = t.view((0, 0), (k, k)).into_owned();
    let t12 = t.view((0, k), (k, n - k)).into_owned();
    let t22 = t.view((k, k), (n - k, n - k)).into_owned();
    let y = triangular_sylvester(&t11, &t22, &(-t12));
    let mut pt = CMatrix::zeros(n, n);
    for i in 0..k {
        pt[(i, i)] = Complex::new(1.0, 0.0);
    }
    pt.view_mut((0, k), (k, n - k)).copy_from(&(-y));
    let p = &z * pt * z.adjoint();
    (p.map(|c| c.re), k)
}

/// Eigenvalues of a real matrix via the complex Schur form.
pub fn eigenvalues(a: &Matrix) -> Vec<Complex<f64>> {
    let (_, t) = a.map(|x| Complex::new(x, 0.0)).schur().unpack();
    (0..a.nrows()).map(|i| t[(i, i)]).collect()
}
