//! Dense vector helpers and a small Cholesky solver.

use crate::scalar::{lit, Scalar};

pub fn dot<T: Scalar>(a: &[T], b: &[T]) -> T {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).fold(T::zero(), |acc, (&x, &y)| acc + x * y)
}

pub fn norm_sq<T: Scalar>(a: &[T]) -> T {
    dot(a, a)
}

pub fn norm<T: Scalar>(a: &[T]) -> T {
    norm_sq(a).sqrt()
}

pub fn dist<T: Scalar>(a: &[T], b: &[T]) -> T {
    a.iter()
        .zip(b)
        .fold(T::zero(), |acc, (&x, &y)| acc + (x - y) * (x - y))
        .sqrt()
}

/// `y += alpha * x`
pub fn axpy<T: Scalar>(alpha: T, x: &[T], y: &mut [T]) {
    debug_assert_eq!(x.len(), y.len());
    for (yi, &xi) in y.iter_mut().zip(x) {
        *yi = *yi + alpha * xi;
    }
}

pub fn scale<T: Scalar>(alpha: T, x: &mut [T]) {
    for xi in x.iter_mut() {
        *xi = *xi * alpha;
    }
}

pub fn sub<T: Scalar>(a: &[T], b: &[T]) -> Vec<T> {
    a.iter().zip(b).map(|(&x, &y)| x - y).collect()
}

/// Euclidean projection onto the centered ball of the given radius.
pub fn project_ball<T: Scalar>(w: &mut [T], radius: T) {
    let nrm = norm(w);
    if nrm > radius {
        scale(radius / nrm, w);
    }
}

/// Pairwise (cascade) summation over `len` terms produced by `term`.
///
/// Blocks of at most 128 terms are summed left to right; blocks are combined
/// by recursive halving, so the order depends only on `len`.
pub fn pairwise_sum<T: Scalar>(len: usize, term: &impl Fn(usize) -> T) -> T {
    fn rec<T: Scalar>(lo: usize, hi: usize, term: &impl Fn(usize) -> T) -> T {
        if hi - lo <= 128 {
            (lo..hi).fold(T::zero(), |acc, i| acc + term(i))
        } else {
            let mid = lo + (hi - lo) / 2;
            rec(lo, mid, term) + rec(mid, hi, term)
        }
    }
    rec(0, len, term)
}

/// Row-major symmetric matrix used by the Newton steps of the prox solver.
#[derive(Debug, Clone)]
pub struct SymMatrix<T> {
    pub dim: usize,
    pub data: Vec<T>,
}

impl<T: Scalar> SymMatrix<T> {
    pub fn zeros(dim: usize) -> Self {
        Self {
            dim,
            data: vec![T::zero(); dim * dim],
        }
    }

    pub fn add_diagonal(&mut self, alpha: T) {
        for i in 0..self.dim {
            self.data[i * self.dim + i] = self.data[i * self.dim + i] + alpha;
        }
    }

    /// Sets entry `(i, j)` with `i <= j` (upper triangle).
    pub fn set(&mut self, i: usize, j: usize, value: T) {
        debug_assert!(i <= j);
        self.data[i * self.dim + j] = value;
    }

    /// `self += alpha * x x^T`, upper triangle only.
    pub fn rank_one_update(&mut self, alpha: T, x: &[T]) {
        let d = self.dim;
        for i in 0..d {
            let ai = alpha * x[i];
            if ai == T::zero() {
                continue;
            }
            let row = &mut self.data[i * d..(i + 1) * d];
            for j in i..d {
                row[j] = row[j] + ai * x[j];
            }
        }
    }

    fn mirror_upper(&mut self) {
        let d = self.dim;
        for i in 0..d {
            for j in 0..i {
                self.data[i * d + j] = self.data[j * d + i];
            }
        }
    }

    /// Solves `A x = b` for symmetric positive definite `A` (upper triangle
    /// filled). Returns `None` when the factorization breaks down.
    pub fn cholesky_solve(&self, b: &[T]) -> Option<Vec<T>> {
        let d = self.dim;
        let mut a = self.clone();
        a.mirror_upper();
        let mut l = vec![T::zero(); d * d];
        for j in 0..d {
            let mut diag = a.data[j * d + j];
            for k in 0..j {
                diag = diag - l[j * d + k] * l[j * d + k];
            }
            if !(diag > T::zero()) || !diag.is_finite() {
                return None;
            }
            let ljj = diag.sqrt();
            l[j * d + j] = ljj;
            for i in (j + 1)..d {
                let mut s = a.data[i * d + j];
                for k in 0..j {
                    s = s - l[i * d + k] * l[j * d + k];
                }
                l[i * d + j] = s / ljj;
            }
        }
        let mut y = vec![T::zero(); d];
        for i in 0..d {
            let mut s = b[i];
            for k in 0..i {
                s = s - l[i * d + k] * y[k];
            }
            y[i] = s / l[i * d + i];
        }
        let mut x = vec![T::zero(); d];
        for i in (0..d).rev() {
            let mut s = y[i];
            for k in (i + 1)..d {
                s = s - l[k * d + i] * x[k];
            }
            x[i] = s / l[i * d + i];
        }
        Some(x)
    }
}

/// Mean of the entries, zero for an empty slice.
pub fn mean<T: Scalar>(xs: &[T]) -> T {
    if xs.is_empty() {
        return T::zero();
    }
    xs.iter().copied().sum::<T>() / lit::<T>(xs.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cholesky_solves_spd_system() {
        let mut a = SymMatrix::<f64>::zeros(2);
        a.data = vec![4.0, 2.0, 0.0, 3.0];
        let x = a.cholesky_solve(&[2.0, 1.0]).unwrap();
        // [[4,2],[2,3]] x = [2,1]  ->  x = [0.5, 0]
        assert!((x[0] - 0.5).abs() < 1e-15);
        assert!(x[1].abs() < 1e-15);
    }

    #[test]
    fn cholesky_rejects_indefinite() {
        let mut a = SymMatrix::<f64>::zeros(2);
        a.data = vec![1.0, 2.0, 0.0, 1.0];
        assert!(a.cholesky_solve(&[1.0, 1.0]).is_none());
    }

    #[test]
    fn projection_clips_to_radius() {
        let mut w = vec![3.0f64, 4.0];
        project_ball(&mut w, 1.0);
        assert!((norm(&w) - 1.0).abs() < 1e-15);
        let mut inside = vec![0.1f64, 0.2];
        project_ball(&mut inside, 1.0);
        assert_eq!(inside, vec![0.1, 0.2]);
    }

    #[test]
    fn pairwise_sum_matches_integer_total() {
        let s: f64 = pairwise_sum(10_000, &|i| i as f64);
        assert_eq!(s, 49_995_000.0);
    }
}
