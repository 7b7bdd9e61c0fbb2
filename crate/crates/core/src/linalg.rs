//! Fixed-size complex matrices and a Hermitian eigensolver.
//!
//! Only 2x2 and 4x4 operators appear in the simulator, so matrices are stored
//! inline as arrays. Eigendecompositions use cyclic complex Jacobi rotations,
//! which converge to machine precision for Hermitian input of this size and
//! work for any [`Real`] scalar.

use std::ops::{Add, Index, IndexMut, Mul, Sub};

use num_complex::Complex;
use num_traits::{Float, One, Zero};
use serde::de::Error as _;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::real::Real;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CMatrix<T, const D: usize> {
    data: [[Complex<T>; D]; D],
}

pub type Mat2<T> = CMatrix<T, 2>;
pub type Mat4<T> = CMatrix<T, 4>;

impl<T: Real, const D: usize> CMatrix<T, D> {
    pub fn zeros() -> Self {
        Self { data: [[Complex::zero(); D]; D] }
    }

    pub fn identity() -> Self {
        Self::from_fn(|i, j| if i == j { Complex::one() } else { Complex::zero() })
    }

    pub fn from_fn(mut f: impl FnMut(usize, usize) -> Complex<T>) -> Self {
        let mut m = Self::zeros();
        for i in 0..D {
            for j in 0..D {
                m.data[i][j] = f(i, j);
            }
        }
        m
    }

    pub fn from_rows(data: [[Complex<T>; D]; D]) -> Self {
        Self { data }
    }

    pub fn rows(&self) -> &[[Complex<T>; D]; D] {
        &self.data
    }

    /// `|v><v|` for a (not necessarily normalized) vector.
    pub fn outer(v: &[Complex<T>; D]) -> Self {
        Self::from_fn(|i, j| v[i] * v[j].conj())
    }

    pub fn diagonal(d: &[T; D]) -> Self {
        Self::from_fn(|i, j| if i == j { Complex::new(d[i], T::zero()) } else { Complex::zero() })
    }

    pub fn adjoint(&self) -> Self {
        Self::from_fn(|i, j| self.data[j][i].conj())
    }

    pub fn conj(&self) -> Self {
        Self::from_fn(|i, j| self.data[i][j].conj())
    }

    pub fn trace(&self) -> Complex<T> {
        (0..D).fold(Complex::zero(), |acc, i| acc + self.data[i][i])
    }

    pub fn scale(&self, s: Complex<T>) -> Self {
        Self::from_fn(|i, j| self.data[i][j] * s)
    }

    pub fn scale_real(&self, s: T) -> Self {
        Self::from_fn(|i, j| self.data[i][j] * s)
    }

    pub fn map(&self, f: impl Fn(Complex<T>) -> Complex<T>) -> Self {
        Self::from_fn(|i, j| f(self.data[i][j]))
    }

    /// `(A + A†) / 2`.
    pub fn hermitian_part(&self) -> Self {
        let half = T::lit(0.5);
        Self::from_fn(|i, j| (self.data[i][j] + self.data[j][i].conj()) * half)
    }

    pub fn frobenius_norm(&self) -> T {
        self.data.iter().flat_map(|row| row.iter()).map(|z| z.norm_sqr()).sum::<T>().sqrt()
    }

    /// Largest entry-wise deviation from Hermiticity.
    pub fn hermiticity_error(&self) -> T {
        let mut worst = T::zero();
        for i in 0..D {
            for j in 0..D {
                worst = Float::max(worst, (self.data[i][j] - self.data[j][i].conj()).norm());
            }
        }
        worst
    }

    /// `Tr(A B)` without forming the product.
    pub fn trace_product(&self, other: &Self) -> Complex<T> {
        let mut acc = Complex::zero();
        for i in 0..D {
            for k in 0..D {
                acc += self.data[i][k] * other.data[k][i];
            }
        }
        acc
    }

    pub fn apply(&self, v: &[Complex<T>; D]) -> [Complex<T>; D] {
        let mut out = [Complex::zero(); D];
        for (i, o) in out.iter_mut().enumerate() {
            *o = (0..D).fold(Complex::zero(), |acc, k| acc + self.data[i][k] * v[k]);
        }
        out
    }

    /// Eigendecomposition of a Hermitian matrix. Only the Hermitian part of
    /// `self` is used.
    pub fn hermitian_eigen(&self) -> HermitianEigen<T, D> {
        jacobi(self.hermitian_part())
    }

    /// `f(A) = V f(Λ) V†` for Hermitian `A`.
    pub fn hermitian_map(&self, f: impl Fn(T) -> T) -> Self {
        let eig = self.hermitian_eigen();
        let mut fl = [T::zero(); D];
        for (o, &l) in fl.iter_mut().zip(eig.values.iter()) {
            *o = f(l);
        }
        let v = eig.vectors;
        v * CMatrix::diagonal(&fl) * v.adjoint()
    }

    /// Principal square root of a positive semidefinite matrix; negative
    /// eigenvalues are clamped to zero first.
    pub fn psd_sqrt(&self) -> Self {
        self.hermitian_map(|l| Float::max(l, T::zero()).sqrt())
    }
}

impl<T: Real> Mat2<T> {
    /// Kronecker product `a ⊗ b` with the first factor as the most
    /// significant index.
    pub fn kron(&self, other: &Mat2<T>) -> Mat4<T> {
        Mat4::from_fn(|i, j| self.data[i / 2][j / 2] * other.data[i % 2][j % 2])
    }
}

impl<T, const D: usize> Index<(usize, usize)> for CMatrix<T, D> {
    type Output = Complex<T>;
    fn index(&self, (i, j): (usize, usize)) -> &Complex<T> {
        &self.data[i][j]
    }
}

impl<T, const D: usize> IndexMut<(usize, usize)> for CMatrix<T, D> {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut Complex<T> {
        &mut self.data[i][j]
    }
}

impl<T: Real, const D: usize> Add for CMatrix<T, D> {
    type Output = Self;
    fn add(self, rhs: Self) -> Self {
        Self::from_fn(|i, j| self.data[i][j] + rhs.data[i][j])
    }
}

impl<T: Real, const D: usize> Sub for CMatrix<T, D> {
    type Output = Self;
    fn sub(self, rhs: Self) -> Self {
        Self::from_fn(|i, j| self.data[i][j] - rhs.data[i][j])
    }
}

impl<T: Real, const D: usize> Mul for CMatrix<T, D> {
    type Output = Self;
    fn mul(self, rhs: Self) -> Self {
        Self::from_fn(|i, j| (0..D).fold(Complex::zero(), |acc, k| acc + self.data[i][k] * rhs.data[k][j]))
    }
}

impl<T: Real + Serialize, const D: usize> Serialize for CMatrix<T, D> {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        let rows: Vec<Vec<[T; 2]>> = self.data.iter().map(|row| row.iter().map(|z| [z.re, z.im]).collect()).collect();
        rows.serialize(serializer)
    }
}

impl<'de, T: Real + Deserialize<'de>, const D: usize> Deserialize<'de> for CMatrix<T, D> {
    fn deserialize<De: Deserializer<'de>>(deserializer: De) -> Result<Self, De::Error> {
        let rows: Vec<Vec<[T; 2]>> = Vec::deserialize(deserializer)?;
        if rows.len() != D || rows.iter().any(|r| r.len() != D) {
            return Err(De::Error::custom(format!("expected a {D}x{D} matrix")));
        }
        Ok(Self::from_fn(|i, j| Complex::new(rows[i][j][0], rows[i][j][1])))
    }
}

/// Eigenvalues in ascending order with matching eigenvector columns.
#[derive(Clone, Debug)]
pub struct HermitianEigen<T, const D: usize> {
    pub values: [T; D],
    pub vectors: CMatrix<T, D>,
}

fn jacobi<T: Real, const D: usize>(mut a: CMatrix<T, D>) -> HermitianEigen<T, D> {
    let mut v = CMatrix::<T, D>::identity();
    let scale = a.frobenius_norm();
    let tiny = T::min_positive_value();
    if scale > tiny {
        let target = T::epsilon() * scale;
        for _sweep in 0..64 {
            let mut off = T::zero();
            for p in 0..D {
                for q in p + 1..D {
                    off += a[(p, q)].norm_sqr();
                }
            }
            if off.sqrt() <= target {
                break;
            }
            for p in 0..D {
                for q in p + 1..D {
                    let apq = a[(p, q)];
                    let mag = apq.norm();
                    if mag <= tiny {
                        continue;
                    }
                    // Phase rotation makes the (p, q) element real and positive, then
                    // a real Givens rotation annihilates it.
                    let phase = Complex::from_polar(T::one(), -apq.arg());
                    let theta = T::lit(0.5) * Float::atan2(mag + mag, a[(p, p)].re - a[(q, q)].re);
                    let (s, c) = theta.sin_cos();
                    let mut g = CMatrix::<T, D>::identity();
                    g[(p, p)] = Complex::new(c, T::zero());
                    g[(p, q)] = Complex::new(-s, T::zero());
                    g[(q, p)] = phase * s;
                    g[(q, q)] = phase * c;
                    a = g.adjoint() * a * g;
                    v = v * g;
                }
            }
        }
    }
    let mut order: [usize; D] = std::array::from_fn(|i| i);
    order.sort_by(|&i, &j| a[(i, i)].re.partial_cmp(&a[(j, j)].re).unwrap_or(std::cmp::Ordering::Equal));
    let values = std::array::from_fn(|k| a[(order[k], order[k])].re);
    let vectors = CMatrix::from_fn(|i, k| v[(i, order[k])]);
    HermitianEigen { values, vectors }
}

/// Solves `A x = b` for symmetric positive definite `A` by Cholesky
/// factorisation. Returns `None` when `A` is not numerically positive definite.
pub fn solve_spd<T: Real>(a: &[Vec<T>], b: &[T]) -> Option<Vec<T>> {
    let n = b.len();
    let mut l = vec![vec![T::zero(); n]; n];
    for i in 0..n {
        for j in 0..=i {
            let mut sum = a[i][j];
            for k in 0..j {
                sum -= l[i][k] * l[j][k];
            }
            if i == j {
                if sum <= T::zero() || !sum.is_finite() {
                    return None;
                }
                l[i][i] = sum.sqrt();
            } else {
                l[i][j] = sum / l[j][j];
            }
        }
    }
    let mut y = vec![T::zero(); n];
    for i in 0..n {
        let mut sum = b[i];
        for k in 0..i {
            sum -= l[i][k] * y[k];
        }
        y[i] = sum / l[i][i];
    }
    let mut x = vec![T::zero(); n];
    for i in (0..n).rev() {
        let mut sum = y[i];
        for k in i + 1..n {
            sum -= l[k][i] * x[k];
        }
        x[i] = sum / l[i][i];
    }
    Some(x)
}

/// Pauli matrices `[I, σx, σy, σz]`.
pub fn pauli<T: Real>() -> [Mat2<T>; 4] {
    let o = Complex::zero();
    let one = Complex::one();
    let i = Complex::i();
    [
        Mat2::from_rows([[one, o], [o, one]]),
        Mat2::from_rows([[o, one], [one, o]]),
        Mat2::from_rows([[o, -i], [i, o]]),
        Mat2::from_rows([[one, o], [o, -one]]),
    ]
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> Complex<f64> {
        Complex::new(re, im)
    }

    #[test]
    fn jacobi_reconstructs_hermitian_matrix() {
        let m = Mat4::<f64>::from_fn(|i, j| c((i * 3 + j) as f64 * 0.37 - 1.0, (i as f64 - j as f64) * 0.21))
            .hermitian_part();
        let eig = m.hermitian_eigen();
        let rebuilt = eig.vectors * Mat4::diagonal(&eig.values) * eig.vectors.adjoint();
        assert!((rebuilt - m).frobenius_norm() < 1e-12);
        let unit = eig.vectors.adjoint() * eig.vectors;
        assert!((unit - Mat4::identity()).frobenius_norm() < 1e-12);
        assert!(eig.values.windows(2).all(|w| w[0] <= w[1]));
    }

    #[test]
    fn jacobi_handles_diagonal_and_zero() {
        let d = Mat2::<f64>::diagonal(&[3.0, -1.0]);
        let eig = d.hermitian_eigen();
        assert_eq!(eig.values, [-1.0, 3.0]);
        let z = Mat4::<f64>::zeros().hermitian_eigen();
        assert_eq!(z.values, [0.0; 4]);
    }

    #[test]
    fn jacobi_in_single_precision() {
        let m = Mat2::<f32>::from_rows([
            [Complex::new(1.0, 0.0), Complex::new(0.0, 2.0)],
            [Complex::new(0.0, -2.0), Complex::new(1.0, 0.0)],
        ]);
        let eig = m.hermitian_eigen();
        assert!((eig.values[0] + 1.0).abs() < 1e-5);
        assert!((eig.values[1] - 3.0).abs() < 1e-5);
    }

    #[test]
    fn psd_sqrt_squares_back() {
        let v = [c(0.5, 0.1), c(-0.2, 0.3), c(0.0, 0.7), c(0.4, 0.0)];
        let w = [c(0.1, 0.0), c(0.9, 0.0), c(0.0, -0.2), c(0.3, 0.3)];
        let m = Mat4::outer(&v) + Mat4::outer(&w);
        let r = m.psd_sqrt();
        assert!((r * r - m).frobenius_norm() < 1e-12);
    }

    #[test]
    fn cholesky_solves_spd_system() {
        let a = vec![vec![4.0, 1.0, 0.5], vec![1.0, 3.0, 0.2], vec![0.5, 0.2, 2.0]];
        let b = vec![1.0, -2.0, 0.5];
        let x = solve_spd(&a, &b).unwrap();
        for i in 0..3 {
            let lhs: f64 = (0..3).map(|j| a[i][j] * x[j]).sum();
            assert!((lhs - b[i]).abs() < 1e-12);
        }
        assert!(solve_spd(&[vec![0.0]], &[1.0]).is_none());
    }

    #[test]
    fn kron_orders_first_factor_major() {
        let p = pauli::<f64>();
        let zx = p[3].kron(&p[1]);
        assert_eq!(zx[(0, 1)], c(1.0, 0.0));
        assert_eq!(zx[(2, 3)], c(-1.0, 0.0));
        assert_eq!(zx[(0, 2)], c(0.0, 0.0));
    }
}
