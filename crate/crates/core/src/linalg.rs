//! Dense least-squares kernels shared by every regression family.
//!
//! All least-squares problems go through a Householder QR of the design
//! matrix; the normal equations `ZᵀZ β = Zᵀy` are never formed. Rank
//! deficiency is detected column by column: a column whose norm below the
//! diagonal (after the previous reflections) falls under `1e-10` times its
//! original norm is reported as dependent.

use ndarray::{Array2, ArrayView1, ArrayView2};

use crate::error::{Error, Result};

/// Relative column-norm threshold for dependence detection.
pub const RANK_TOL: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq)]
pub struct LeastSquaresSolution {
    pub coefficients: Vec<f64>,
    pub rank: usize,
    pub residual_sum_of_squares: f64,
}

/// Householder QR factorization `A = QR` of a tall matrix, stored compactly.
#[derive(Debug, Clone)]
pub struct HouseholderQr {
    /// Column-major working storage. Upper triangle holds R (except the
    /// diagonal), below the diagonal sit the Householder vectors whose leading
    /// entry is an implicit 1.
    qr: Vec<f64>,
    tau: Vec<f64>,
    r_diag: Vec<f64>,
    rows: usize,
    cols: usize,
}

impl HouseholderQr {
    /// Factor `a` (rows ≥ cols). Fails with [`Error::RankDeficient`] naming
    /// the first dependent column.
    pub fn factor(a: ArrayView2<f64>) -> Result<Self> {
        let (rows, cols) = a.dim();
        if rows < cols {
            return Err(Error::pre(format!(
                "least squares needs at least as many rows ({rows}) as columns ({cols})"
            )));
        }
        let mut qr = vec![0.0; rows * cols];
        for j in 0..cols {
            for i in 0..rows {
                qr[j * rows + i] = a[[i, j]];
            }
        }
        let mut tau = vec![0.0; cols];
        let mut r_diag = vec![0.0; cols];

        for j in 0..cols {
            let col_norm0 = norm(&qr[j * rows..(j + 1) * rows]);
            let sub = &mut qr[j * rows + j..(j + 1) * rows];
            let sub_norm = norm(sub);
            if !(col_norm0 > 0.0) || sub_norm <= RANK_TOL * col_norm0 || !sub_norm.is_finite() {
                return Err(Error::RankDeficient { column: j });
            }
            let alpha = if sub[0] > 0.0 { -sub_norm } else { sub_norm };
            let v0 = sub[0] - alpha;
            for v in sub.iter_mut().skip(1) {
                *v /= v0;
            }
            sub[0] = 1.0;
            let vtv: f64 = sub.iter().map(|v| v * v).sum();
            let t = 2.0 / vtv;
            tau[j] = t;
            r_diag[j] = alpha;

            // apply H_j = I - t v vᵀ to the trailing columns
            for c in (j + 1)..cols {
                let (head, tail) = qr.split_at_mut(c * rows);
                let v = &head[j * rows + j..(j + 1) * rows];
                let col = &mut tail[j..rows];
                let dot: f64 = v.iter().zip(col.iter()).map(|(a, b)| a * b).sum();
                let s = t * dot;
                for (x, vi) in col.iter_mut().zip(v.iter()) {
                    *x -= s * vi;
                }
            }
        }

        Ok(Self {
            qr,
            tau,
            r_diag,
            rows,
            cols,
        })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    /// Overwrite `b` with `Qᵀ b`.
    pub fn apply_qt(&self, b: &mut [f64]) {
        assert_eq!(b.len(), self.rows);
        for j in 0..self.cols {
            let v = &self.qr[j * self.rows + j..(j + 1) * self.rows];
            let seg = &mut b[j..];
            let dot: f64 = v.iter().zip(seg.iter()).map(|(a, b)| a * b).sum();
            let s = self.tau[j] * dot;
            for (x, vi) in seg.iter_mut().zip(v.iter()) {
                *x -= s * vi;
            }
        }
    }

    fn r(&self, i: usize, j: usize) -> f64 {
        if i == j {
            self.r_diag[i]
        } else {
            self.qr[j * self.rows + i]
        }
    }

    /// Solve `R x = rhs` (upper triangular back substitution).
    pub fn solve_r(&self, rhs: &[f64]) -> Vec<f64> {
        let k = self.cols;
        let mut x = rhs[..k].to_vec();
        for i in (0..k).rev() {
            let mut s = x[i];
            for j in (i + 1)..k {
                s -= self.r(i, j) * x[j];
            }
            x[i] = s / self.r_diag[i];
        }
        x
    }

    /// Solve `Rᵀ x = rhs` (forward substitution).
    pub fn solve_rt(&self, rhs: &[f64]) -> Vec<f64> {
        let k = self.cols;
        let mut x = rhs[..k].to_vec();
        for i in 0..k {
            let mut s = x[i];
            for j in 0..i {
                s -= self.r(j, i) * x[j];
            }
            x[i] = s / self.r_diag[i];
        }
        x
    }

    /// Least-squares solution and residual sum of squares for right-hand side `y`.
    pub fn solve(&self, y: &[f64]) -> LeastSquaresSolution {
        let mut qty = y.to_vec();
        self.apply_qt(&mut qty);
        let coefficients = self.solve_r(&qty);
        let rss = qty[self.cols..].iter().map(|v| v * v).sum();
        LeastSquaresSolution {
            coefficients,
            rank: self.cols,
            residual_sum_of_squares: rss,
        }
    }
}

fn norm(v: &[f64]) -> f64 {
    // scaled two-norm to avoid overflow on badly scaled columns
    let scale = v.iter().fold(0.0_f64, |m, x| m.max(x.abs()));
    if scale == 0.0 || !scale.is_finite() {
        return scale;
    }
    scale * v.iter().map(|x| (x / scale).powi(2)).sum::<f64>().sqrt()
}

/// Ordinary least squares `argmin ‖y − Zβ‖²`.
pub fn solve_ls(z: ArrayView2<f64>, y: ArrayView1<f64>) -> Result<LeastSquaresSolution> {
    if z.nrows() != y.len() {
        return Err(Error::DimensionMismatch {
            expected: z.nrows(),
            got: y.len(),
        });
    }
    let qr = HouseholderQr::factor(z)?;
    let y: Vec<f64> = y.iter().copied().collect();
    Ok(qr.solve(&y))
}

/// Weighted least squares `argmin Σ wᵢ (yᵢ − zᵢᵀβ)²`.
///
/// Zero-weight rows are dropped before factoring; negative weights are an error.
/// The reported residual sum of squares is the weighted one.
pub fn solve_wls(
    z: ArrayView2<f64>,
    y: ArrayView1<f64>,
    w: ArrayView1<f64>,
) -> Result<LeastSquaresSolution> {
    let (zs, ys) = scale_rows(z, y, w)?;
    solve_ls(zs.view(), ArrayView1::from(&ys))
}

/// Builds `(√w·Z, √w·y)` keeping only rows with positive weight.
pub(crate) fn scale_rows(
    z: ArrayView2<f64>,
    y: ArrayView1<f64>,
    w: ArrayView1<f64>,
) -> Result<(Array2<f64>, Vec<f64>)> {
    let (n, k) = z.dim();
    if y.len() != n || w.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: if y.len() != n { y.len() } else { w.len() },
        });
    }
    if let Some(bad) = w.iter().find(|v| !(**v >= 0.0) || !v.is_finite()) {
        return Err(Error::pre(format!("weights must be finite and non-negative, got {bad}")));
    }
    let keep: Vec<usize> = (0..n).filter(|&i| w[i] > 0.0).collect();
    if keep.len() < k {
        return Err(Error::pre(format!(
            "only {} positive-weight rows for {k} coefficients",
            keep.len()
        )));
    }
    let mut zs = Array2::zeros((keep.len(), k));
    let mut ys = Vec::with_capacity(keep.len());
    for (r, &i) in keep.iter().enumerate() {
        let s = w[i].sqrt();
        for j in 0..k {
            zs[[r, j]] = s * z[[i, j]];
        }
        ys.push(s * y[i]);
    }
    Ok((zs, ys))
}

/// Solve the square system `A x = b` by LU with partial pivoting.
///
/// Used for small systems that are not least-squares problems (indefinite
/// kernel-weighted normal equations, Newton steps).
pub fn solve_square(a: &Array2<f64>, b: &[f64]) -> Result<Vec<f64>> {
    let n = a.nrows();
    if a.ncols() != n || b.len() != n {
        return Err(Error::pre("solve_square needs a square system"));
    }
    let mut m = a.clone();
    let mut x = b.to_vec();
    let scale = m.iter().fold(0.0_f64, |s, v| s.max(v.abs()));
    for col in 0..n {
        let (piv, pmax) = (col..n)
            .map(|r| (r, m[[r, col]].abs()))
            .fold((col, -1.0), |best, cur| if cur.1 > best.1 { cur } else { best });
        if !(pmax > 1e-14 * scale) {
            return Err(Error::RankDeficient { column: col });
        }
        if piv != col {
            for c in 0..n {
                m.swap([piv, c], [col, c]);
            }
            x.swap(piv, col);
        }
        let d = m[[col, col]];
        for r in (col + 1)..n {
            let f = m[[r, col]] / d;
            if f != 0.0 {
                for c in col..n {
                    m[[r, c]] -= f * m[[col, c]];
                }
                x[r] -= f * x[col];
            }
        }
    }
    for i in (0..n).rev() {
        let mut s = x[i];
        for j in (i + 1)..n {
            s -= m[[i, j]] * x[j];
        }
        x[i] = s / m[[i, i]];
    }
    Ok(x)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::{array, Array1};

    #[test]
    fn exact_line() {
        let z = array![[1.0, 0.0], [1.0, 1.0], [1.0, 2.0], [1.0, 3.0]];
        let y = array![0.0, 1.0, 2.0, 3.0];
        let s = solve_ls(z.view(), y.view()).unwrap();
        assert!((s.coefficients[0]).abs() < 1e-12);
        assert!((s.coefficients[1] - 1.0).abs() < 1e-12);
        assert!(s.residual_sum_of_squares < 1e-20);
        assert_eq!(s.rank, 2);
    }

    #[test]
    fn intercept_only_mean() {
        let z = Array2::ones((4, 1));
        let y = array![0.0, 1.0, 2.0, 3.0];
        let s = solve_ls(z.view(), y.view()).unwrap();
        assert!((s.coefficients[0] - 1.5).abs() < 1e-12);
        // Σ(y − 1.5)² = 2.25 + 0.25 + 0.25 + 2.25
        assert!((s.residual_sum_of_squares - 5.0).abs() < 1e-12);
    }

    #[test]
    fn duplicate_columns_rejected() {
        let z = array![[1.0, 2.0, 2.0], [1.0, 3.0, 3.0], [1.0, 5.0, 5.0], [1.0, 1.0, 1.0]];
        let y = array![1.0, 2.0, 3.0, 4.0];
        match solve_ls(z.view(), y.view()) {
            Err(Error::RankDeficient { column }) => assert_eq!(column, 2),
            other => panic!("expected rank deficiency, got {other:?}"),
        }
    }

    #[test]
    fn weighted_hand_value() {
        // minimize 3β² + (2 − β)²  ⇒  β = 0.5
        let z = array![[1.0], [1.0]];
        let y = array![0.0, 2.0];
        let w = array![3.0, 1.0];
        let s = solve_wls(z.view(), y.view(), w.view()).unwrap();
        assert!((s.coefficients[0] - 0.5).abs() < 1e-14);
    }

    #[test]
    fn zero_weight_drops_row() {
        let z = array![[1.0, 0.0], [1.0, 1.0], [1.0, 2.0], [1.0, 3.0], [1.0, 4.0]];
        let y = array![0.1, 0.9, 2.1, 2.9, 100.0];
        let w = array![1.0, 1.0, 1.0, 1.0, 0.0];
        let a = solve_wls(z.view(), y.view(), w.view()).unwrap();
        let b = solve_ls(z.slice(ndarray::s![..4, ..]), y.slice(ndarray::s![..4])).unwrap();
        for (u, v) in a.coefficients.iter().zip(&b.coefficients) {
            assert!((u - v).abs() < 1e-12);
        }
    }

    #[test]
    fn negative_weight_rejected() {
        let z = array![[1.0], [1.0]];
        let y = array![0.0, 2.0];
        let w = array![1.0, -1.0];
        assert!(solve_wls(z.view(), y.view(), w.view()).is_err());
    }

    #[test]
    fn too_few_positive_weights() {
        let z = array![[1.0, 0.0], [1.0, 1.0], [1.0, 2.0]];
        let y = array![0.0, 1.0, 2.0];
        let w = array![1.0, 0.0, 0.0];
        assert!(matches!(
            solve_wls(z.view(), y.view(), w.view()),
            Err(Error::Precondition(_))
        ));
    }

    #[test]
    fn unit_weights_match_ols() {
        let z = array![[1.0, 0.3, 0.09], [1.0, -0.5, 0.25], [1.0, 0.8, 0.64], [1.0, 0.1, 0.01], [1.0, -0.9, 0.81]];
        let y = array![1.0, -2.0, 0.5, 3.0, 1.5];
        let w = Array1::ones(5);
        let a = solve_wls(z.view(), y.view(), w.view()).unwrap();
        let b = solve_ls(z.view(), y.view()).unwrap();
        for (u, v) in a.coefficients.iter().zip(&b.coefficients) {
            assert!((u - v).abs() < 1e-12);
        }
    }

    #[test]
    fn triangular_solves_invert_gram() {
        let z = array![[1.0, 0.3], [1.0, -0.5], [1.0, 0.8], [1.0, 0.1]];
        let qr = HouseholderQr::factor(z.view()).unwrap();
        // (ZᵀZ)⁻¹ e = R⁻¹ R⁻ᵀ e ; check against solve_square on ZᵀZ
        let e = [0.7, -1.1];
        let x = qr.solve_r(&qr.solve_rt(&e));
        let g = z.t().dot(&z);
        let x2 = solve_square(&g, &e).unwrap();
        for (u, v) in x.iter().zip(&x2) {
            assert!((u - v).abs() < 1e-12);
        }
    }

    #[test]
    fn square_singular() {
        let a = array![[1.0, 2.0], [2.0, 4.0]];
        assert!(solve_square(&a, &[1.0, 2.0]).is_err());
    }
}
