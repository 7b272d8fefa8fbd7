//! Small dense complex linear-algebra helpers shared by the kernels.

use ndarray::{Array2, ArrayView2, Axis};

use crate::scalar::{Cx, Real};

/// Squared Frobenius norm.
pub fn frob_sq<T: Real>(a: &ArrayView2<'_, Cx<T>>) -> T {
    a.iter().fold(T::zero(), |acc, z| acc + z.norm_sqr())
}

/// Conjugate transpose, materialized in standard layout.
pub fn adjoint<T: Real>(a: &ArrayView2<'_, Cx<T>>) -> Array2<Cx<T>> {
    a.t().mapv(|z| z.conj()).as_standard_layout().into_owned()
}

/// `n`-point unitary DFT matrix, `F[r][c] = exp(-j 2 pi r c / n) / sqrt(n)`.
pub fn unitary_dft<T: Real>(n: usize) -> Array2<Cx<T>> {
    let scale = 1.0 / (n as f64).sqrt();
    Array2::from_shape_fn((n, n), |(r, c)| {
        // reduce the exponent first so large n keeps full phase accuracy
        let phase = -2.0 * std::f64::consts::PI * ((r * c) % n) as f64 / n as f64;
        Cx::new(T::lit(scale * phase.cos()), T::lit(scale * phase.sin()))
    })
}

/// Cholesky factor `L` (lower) of a Hermitian positive-definite matrix.
/// Returns `None` when a pivot is not strictly positive.
pub fn cholesky<T: Real>(g: &ArrayView2<'_, Cx<T>>) -> Option<Array2<Cx<T>>> {
    let n = g.nrows();
    let mut l = Array2::<Cx<T>>::zeros((n, n));
    for j in 0..n {
        let mut d = g[[j, j]].re;
        for k in 0..j {
            d -= l[[j, k]].norm_sqr();
        }
        if !(d > T::zero()) {
            return None;
        }
        let d = d.sqrt();
        l[[j, j]] = Cx::new(d, T::zero());
        for i in (j + 1)..n {
            let mut s = g[[i, j]];
            for k in 0..j {
                s -= l[[i, k]] * l[[j, k]].conj();
            }
            l[[i, j]] = s / d;
        }
    }
    Some(l)
}

/// Solves `L L^H X = B` given the Cholesky factor `L`.
pub fn cholesky_solve<T: Real>(l: &Array2<Cx<T>>, b: &ArrayView2<'_, Cx<T>>) -> Array2<Cx<T>> {
    let n = l.nrows();
    let mut x = b.to_owned();
    for mut col in x.axis_iter_mut(Axis(1)) {
        for i in 0..n {
            let mut s = col[i];
            for k in 0..i {
                s -= l[[i, k]] * col[k];
            }
            col[i] = s / l[[i, i]];
        }
        for i in (0..n).rev() {
            let mut s = col[i];
            for k in (i + 1)..n {
                s -= l[[k, i]].conj() * col[k];
            }
            col[i] = s / l[[i, i]];
        }
    }
    x
}

/// Least-squares solution of `A X = Y` through the normal equations.
///
/// When the Gram matrix is numerically singular a ridge of `1e-10 * trace / n`
/// is added and the returned flag is set.
pub fn least_squares<T: Real>(a: &ArrayView2<'_, Cx<T>>, y: &ArrayView2<'_, Cx<T>>) -> (Array2<Cx<T>>, bool) {
    let n = a.ncols();
    if n == 0 {
        return (Array2::zeros((0, y.ncols())), false);
    }
    let ah = adjoint(a);
    let mut gram = ah.dot(a);
    let rhs = ah.dot(y);
    if let Some(l) = cholesky(&gram.view()) {
        if well_conditioned(&l) {
            return (cholesky_solve(&l, &rhs.view()), false);
        }
    }
    let trace = (0..n).fold(T::zero(), |acc, i| acc + gram[[i, i]].re);
    let ridge = T::lit(1e-10) * trace / T::lit(n as f64) + T::min_positive_value();
    for i in 0..n {
        gram[[i, i]] += Cx::new(ridge, T::zero());
    }
    let l = cholesky(&gram.view()).unwrap_or_else(|| Array2::eye(n));
    (cholesky_solve(&l, &rhs.view()), true)
}

fn well_conditioned<T: Real>(l: &Array2<Cx<T>>) -> bool {
    let diag: Vec<T> = (0..l.nrows()).map(|i| l[[i, i]].re).collect();
    let max = diag.iter().copied().fold(T::zero(), T::max);
    let min = diag.iter().copied().fold(T::infinity(), T::min);
    // diag(L)^2 bounds the Gram eigenvalues; ratio^2 ~ condition number
    min > T::zero() && max / min < T::one() / T::epsilon().sqrt()
}

/// `A^{-1}` for a Hermitian positive-definite matrix, if it exists.
pub fn hpd_inverse<T: Real>(g: &ArrayView2<'_, Cx<T>>) -> Option<Array2<Cx<T>>> {
    let l = cholesky(g)?;
    let eye = Array2::<Cx<T>>::eye(g.nrows());
    Some(cholesky_solve(&l, &eye.view()))
}

/// Orthonormal basis (as columns) of the orthogonal complement of the
/// column space of `a`, by twice-iterated Gram-Schmidt over the columns of
/// `a` followed by the unit vectors.
pub fn orthonormal_complement<T: Real>(a: &ArrayView2<'_, Cx<T>>) -> Array2<Cx<T>> {
    let n = a.nrows();
    let scale = a.iter().fold(T::zero(), |m, z| m.max(z.norm())).max(T::one());
    let tol = T::epsilon().sqrt();
    let mut basis: Vec<ndarray::Array1<Cx<T>>> = Vec::new();
    let mut complement: Vec<ndarray::Array1<Cx<T>>> = Vec::new();
    let candidates = a
        .columns()
        .into_iter()
        .map(|c| (c.to_owned(), true))
        .chain((0..n).map(|i| {
            let mut e = ndarray::Array1::zeros(n);
            e[i] = Cx::new(scale, T::zero());
            (e, false)
        }));
    for (mut v, from_a) in candidates {
        if basis.len() == n {
            break;
        }
        let before = v.iter().fold(T::zero(), |s, z| s + z.norm_sqr()).sqrt();
        for _ in 0..2 {
            for q in &basis {
                let proj = q
                    .iter()
                    .zip(v.iter())
                    .fold(Cx::new(T::zero(), T::zero()), |s, (x, y)| s + x.conj() * y);
                v.scaled_add(-proj, q);
            }
        }
        let after = v.iter().fold(T::zero(), |s, z| s + z.norm_sqr()).sqrt();
        if !(after > tol * before) {
            continue;
        }
        v.mapv_inplace(|z| z / after);
        if !from_a {
            complement.push(v.clone());
        }
        basis.push(v);
    }
    let mut q = Array2::zeros((n, complement.len()));
    for (j, v) in complement.into_iter().enumerate() {
        q.column_mut(j).assign(&v);
    }
    q
}
