//! Two-qubit OAM states, local projectors and density matrices.
//!
//! Photon A's labels `ℓ₁, ℓ₂` map to `|0⟩, |1⟩`; photon B's anti-correlated
//! labels `−ℓ₁, −ℓ₂` map to `|0⟩, |1⟩` as well, so the ideal state is
//! `c₁|00⟩ + c₂|11⟩` in the computational basis `(|00⟩, |01⟩, |10⟩, |11⟩)`.

use num_complex::Complex;
use num_traits::{Float, One, Zero};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{pauli, Mat2, Mat4};
use crate::real::Real;

/// Back-projected beam waist used by the catalog states (meters).
pub const DEFAULT_W0: f64 = 0.9375e-3;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct BasisMap {
    /// Photon-A OAM labels of `|0⟩` and `|1⟩`.
    pub a: [i32; 2],
    /// Photon-B OAM labels of `|0⟩` and `|1⟩`.
    pub b: [i32; 2],
}

impl BasisMap {
    pub fn anti_correlated(ell1: i32, ell2: i32) -> Self {
        Self { a: [ell1, ell2], b: [-ell1, -ell2] }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound(serialize = "T: Serialize", deserialize = "T: Deserialize<'de>"))]
pub struct BipartitePureState<T> {
    pub id: String,
    pub ell_a: [i32; 2],
    pub relative_phase: T,
    pub coefficients: [Complex<T>; 2],
    pub w0: T,
    pub basis_map: BasisMap,
}

/// `(|ℓ₁⟩_A|−ℓ₁⟩_B + e^{iφ}|ℓ₂⟩_A|−ℓ₂⟩_B)/√2`.
pub fn make_state<T: Real>(ell1: i32, ell2: i32, phase: T) -> Result<BipartitePureState<T>> {
    if ell1 == ell2 {
        return Err(Error::InvalidArgument(format!("OAM labels must differ, got {ell1} twice")));
    }
    let h = T::FRAC_1_SQRT_2();
    Ok(BipartitePureState {
        id: format!("l{ell1}_{ell2}_p{:.4}", phase.as_f64()),
        ell_a: [ell1, ell2],
        relative_phase: phase,
        coefficients: [Complex::new(h, T::zero()), Complex::from_polar(h, phase)],
        w0: T::lit(DEFAULT_W0),
        basis_map: BasisMap::anti_correlated(ell1, ell2),
    })
}

impl<T: Real> BipartitePureState<T> {
    pub fn with_waist(mut self, w0: T) -> Self {
        self.w0 = w0;
        self
    }

    pub fn with_id(mut self, id: impl Into<String>) -> Self {
        self.id = id.into();
        self
    }

    /// Amplitudes over `(|00⟩, |01⟩, |10⟩, |11⟩)`.
    pub fn amplitudes(&self) -> [Complex<T>; 4] {
        [self.coefficients[0], Complex::zero(), Complex::zero(), self.coefficients[1]]
    }

    pub fn density(&self) -> DensityMatrix4<T> {
        DensityMatrix4 { matrix: Mat4::outer(&self.amplitudes()), basis: Some(self.basis_map) }
    }

    /// Degree of the Bloch map of photon B conditioned on photon A's position.
    pub fn expected_skyrmion_number(&self) -> i32 {
        let [l1, l2] = self.ell_a;
        (l2.abs() - l1.abs()).signum() * (l2 - l1)
    }

    pub fn max_abs_ell(&self) -> i32 {
        self.ell_a[0].abs().max(self.ell_a[1].abs())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CatalogEntry<T> {
    pub id: &'static str,
    pub state: BipartitePureState<T>,
    pub skyrmion_number: i32,
}

/// The ten preset states.
///
/// The high-order preset pairs `ℓ = -2` with `ℓ = 3`, which gives `N = 5`;
/// swapped entries negate every OAM label and carry the opposite charge.
pub fn catalog<T: Real>() -> Vec<CatalogEntry<T>> {
    let half_pi = T::FRAC_PI_2();
    let presets: [(&'static str, i32, i32, T); 10] = [
        ("l0_1", 0, 1, T::zero()),
        ("l0_2", 0, 2, T::zero()),
        ("l0_3", 0, 3, T::zero()),
        ("l0_1_shifted", 0, 1, -half_pi),
        ("lm2_3", -2, 3, T::zero()),
        ("l0_m1", 0, -1, T::zero()),
        ("l0_m2", 0, -2, T::zero()),
        ("l0_m3", 0, -3, T::zero()),
        ("l0_m1_shifted", 0, -1, -half_pi),
        ("l2_m3", 2, -3, T::zero()),
    ];
    presets
        .into_iter()
        .map(|(id, l1, l2, phase)| {
            let state = make_state(l1, l2, phase).expect("catalog labels differ").with_id(id);
            let skyrmion_number = state.expected_skyrmion_number();
            CatalogEntry { id, state, skyrmion_number }
        })
        .collect()
}

pub fn catalog_state<T: Real>(id: &str) -> Result<CatalogEntry<T>> {
    catalog()
        .into_iter()
        .find(|e| e.id == id)
        .ok_or_else(|| Error::InvalidArgument(format!("unknown catalog state '{id}'")))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ProjectorLabel {
    Z0,
    Z1,
    /// `(|0⟩ + e^{iθ}|1⟩)/√2` with θ = 0, π/2, π, 3π/2.
    S0,
    S90,
    S180,
    S270,
}

impl ProjectorLabel {
    pub const LOCAL_SET: [ProjectorLabel; 6] = [Self::Z0, Self::Z1, Self::S0, Self::S90, Self::S180, Self::S270];

    pub fn name(self) -> &'static str {
        match self {
            Self::Z0 => "Z0",
            Self::Z1 => "Z1",
            Self::S0 => "S(0)",
            Self::S90 => "S(pi/2)",
            Self::S180 => "S(pi)",
            Self::S270 => "S(3pi/2)",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Projector<T> {
    pub label: Option<ProjectorLabel>,
    pub vector: [Complex<T>; 2],
}

impl<T: Real> Projector<T> {
    pub fn from_label(label: ProjectorLabel) -> Self {
        let h = T::FRAC_1_SQRT_2();
        let z = Complex::zero();
        let one = Complex::one();
        let s = |quarter: i32| {
            let theta = T::FRAC_PI_2() * T::from_i32(quarter).unwrap_or_else(T::zero);
            [Complex::new(h, T::zero()), Complex::from_polar(h, theta)]
        };
        let vector = match label {
            ProjectorLabel::Z0 => [one, z],
            ProjectorLabel::Z1 => [z, one],
            ProjectorLabel::S0 => s(0),
            ProjectorLabel::S90 => s(1),
            ProjectorLabel::S180 => s(2),
            ProjectorLabel::S270 => s(3),
        };
        Self { label: Some(label), vector }
    }

    /// A projector onto an arbitrary vector; normalization is checked where
    /// it is used.
    pub fn custom(vector: [Complex<T>; 2]) -> Self {
        Self { label: None, vector }
    }

    pub fn norm_error(&self) -> T {
        Float::abs(self.vector[0].norm_sqr() + self.vector[1].norm_sqr() - T::one())
    }

    pub fn matrix(&self) -> Mat2<T> {
        Mat2::outer(&self.vector)
    }

    /// Bloch vector `(⟨σx⟩, ⟨σy⟩, ⟨σz⟩)` of the projector state.
    pub fn bloch(&self) -> [T; 3] {
        let p = pauli::<T>();
        let m = self.matrix();
        [m.trace_product(&p[1]).re, m.trace_product(&p[2]).re, m.trace_product(&p[3]).re]
    }
}

/// The 36 measurement settings: photon A's label is the outer index and
/// photon B's the inner one, both running over
/// `Z0, Z1, S(0), S(π/2), S(π), S(3π/2)`.
pub fn tomography_set<T: Real>() -> Vec<(Projector<T>, Projector<T>)> {
    let mut out = Vec::with_capacity(36);
    for a in ProjectorLabel::LOCAL_SET {
        for b in ProjectorLabel::LOCAL_SET {
            out.push((Projector::from_label(a), Projector::from_label(b)));
        }
    }
    out
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Subsystem {
    A,
    B,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound(serialize = "T: Real + Serialize", deserialize = "T: Real + Deserialize<'de>"))]
pub struct DensityMatrix4<T> {
    matrix: Mat4<T>,
    #[serde(default)]
    basis: Option<BasisMap>,
}

impl<T: Real> DensityMatrix4<T> {
    /// Validates Hermiticity, unit trace and positivity.
    pub fn new(matrix: Mat4<T>) -> Result<Self> {
        let tol = T::validity_tol();
        let herm = matrix.hermiticity_error();
        if herm > tol {
            return Err(Error::InvalidDensity(format!("not Hermitian (deviation {herm:e})")));
        }
        let tr = matrix.trace();
        if Float::abs(tr.re - T::one()) > tol || Float::abs(tr.im) > tol {
            return Err(Error::InvalidDensity(format!("trace is {} + {}i", tr.re, tr.im)));
        }
        let min = matrix.hermitian_eigen().values[0];
        if min < -tol {
            return Err(Error::InvalidDensity(format!("negative eigenvalue {min:e}")));
        }
        Ok(Self { matrix: matrix.hermitian_part(), basis: None })
    }

    /// Nearest valid density matrix: Hermitian part, eigenvalues clamped at
    /// zero, trace renormalized.
    pub fn project(matrix: &Mat4<T>) -> Result<Self> {
        let eig = matrix.hermitian_eigen();
        let clamped = eig.values.map(|l| Float::max(l, T::zero()));
        let total: T = clamped.iter().copied().sum();
        if !(total > T::zero()) {
            return Err(Error::InvalidDensity("no positive spectral weight to project onto".into()));
        }
        let scaled = clamped.map(|l| l / total);
        let v = eig.vectors;
        let m = (v * Mat4::diagonal(&scaled) * v.adjoint()).hermitian_part();
        Ok(Self { matrix: m, basis: None })
    }

    pub fn from_pure(amplitudes: &[Complex<T>; 4]) -> Result<Self> {
        let norm: T = amplitudes.iter().map(|z| z.norm_sqr()).sum();
        if !(norm > T::zero()) {
            return Err(Error::InvalidArgument("zero state vector".into()));
        }
        let s = norm.sqrt().recip();
        let v = amplitudes.map(|z| z * s);
        Ok(Self { matrix: Mat4::outer(&v), basis: None })
    }

    pub fn maximally_mixed() -> Self {
        Self { matrix: Mat4::identity().scale_real(T::lit(0.25)), basis: None }
    }

    pub fn with_basis(mut self, basis: Option<BasisMap>) -> Self {
        self.basis = basis;
        self
    }

    pub fn matrix(&self) -> &Mat4<T> {
        &self.matrix
    }

    pub fn basis(&self) -> Option<BasisMap> {
        self.basis
    }

    pub fn eigenvalues(&self) -> [T; 4] {
        self.matrix.hermitian_eigen().values
    }

    /// `(U_A ⊗ U_B) ρ (U_A ⊗ U_B)†`.
    pub fn local_transform(&self, ua: &Mat2<T>, ub: &Mat2<T>) -> Self {
        let u = ua.kron(ub);
        Self { matrix: (u * self.matrix * u.adjoint()).hermitian_part(), basis: self.basis }
    }

    /// `1/2 · Σ|λᵢ(ρ − σ)|`.
    pub fn trace_distance(&self, other: &Self) -> T {
        let d = self.matrix - other.matrix;
        let half = T::lit(0.5);
        d.hermitian_eigen().values.iter().map(|&l| Float::abs(l)).sum::<T>() * half
    }
}

/// Reduced state of the `keep` subsystem.
pub fn partial_trace<T: Real>(rho: &DensityMatrix4<T>, keep: Subsystem) -> Mat2<T> {
    let m = rho.matrix();
    Mat2::from_fn(|i, j| match keep {
        Subsystem::A => m[(2 * i, 2 * j)] + m[(2 * i + 1, 2 * j + 1)],
        Subsystem::B => m[(i, j)] + m[(2 + i, 2 + j)],
    })
}

/// Arithmetic mean of density matrices sharing one basis map.
pub fn ensemble_average<T: Real>(rhos: &[DensityMatrix4<T>]) -> Result<DensityMatrix4<T>> {
    let first = rhos.first().ok_or(Error::Empty("density matrix list"))?;
    if rhos.iter().any(|r| r.basis != first.basis) {
        return Err(Error::InvalidArgument("density matrices use different basis maps".into()));
    }
    let mut acc = Mat4::zeros();
    for r in rhos {
        acc = acc + r.matrix;
    }
    let inv = T::from_usize_lossy(rhos.len()).recip();
    Ok(DensityMatrix4 { matrix: acc.scale_real(inv).hermitian_part(), basis: first.basis })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn state_is_normalized_with_negated_partner() {
        let s = make_state(0, 1, 0.3_f64).unwrap();
        let n: f64 = s.coefficients.iter().map(|c| c.norm_sqr()).sum();
        assert!((n - 1.0).abs() < 1e-12);
        assert_eq!(s.basis_map.b, [0, -1]);
        assert!(make_state(2, 2, 0.0_f64).is_err());
    }

    #[test]
    fn catalog_charges() {
        let c = catalog::<f64>();
        assert_eq!(c.len(), 10);
        let mut charges: Vec<i32> = c.iter().map(|e| e.skyrmion_number).collect();
        charges.sort();
        assert_eq!(charges, vec![-5, -3, -2, -1, -1, 1, 1, 2, 3, 5]);
        assert!(catalog_state::<f64>("l0_3").is_ok());
        assert!(catalog_state::<f64>("nope").is_err());
    }

    #[test]
    fn tomography_set_enumeration() {
        let set = tomography_set::<f64>();
        assert_eq!(set.len(), 36);
        assert_eq!(set[0].0.label, Some(ProjectorLabel::Z0));
        assert_eq!(set[0].1.label, Some(ProjectorLabel::Z0));
        assert!(set.iter().any(|(a, b)| a.label == Some(ProjectorLabel::S90) && b.label == Some(ProjectorLabel::S270)));
        assert!(set.iter().all(|(a, b)| a.norm_error() < 1e-15 && b.norm_error() < 1e-15));
    }

    #[test]
    fn partial_trace_of_product_state() {
        let zero = Mat2::<f64>::outer(&[Complex::one(), Complex::zero()]);
        let plus = Projector::<f64>::from_label(ProjectorLabel::S0).matrix();
        let rho = DensityMatrix4::new(zero.kron(&plus)).unwrap();
        assert!((partial_trace(&rho, Subsystem::A) - zero).frobenius_norm() < 1e-15);
        assert!((partial_trace(&rho, Subsystem::B) - plus).frobenius_norm() < 1e-15);
    }

    #[test]
    fn validation_rejects_bad_matrices() {
        let mut m = Mat4::<f64>::identity().scale_real(0.25);
        m[(0, 1)] = Complex::new(0.1, 0.0);
        assert!(DensityMatrix4::new(m).is_err());
        assert!(DensityMatrix4::new(Mat4::<f64>::identity()).is_err());
        assert!(DensityMatrix4::new(Mat4::<f64>::diagonal(&[1.5, -0.5, 0.0, 0.0])).is_err());
        let p = DensityMatrix4::project(&Mat4::<f64>::diagonal(&[1.5, -0.5, 0.0, 0.0])).unwrap();
        assert_eq!(p.eigenvalues()[3], 1.0);
    }

    #[test]
    fn ensemble_average_rejects_mixed_bases() {
        let a = make_state(0, 1, 0.0_f64).unwrap().density();
        let b = make_state(0, 2, 0.0_f64).unwrap().density();
        assert!(ensemble_average(&[a, b]).is_err());
        assert!(ensemble_average::<f64>(&[]).is_err());
        assert_eq!(ensemble_average(&[a]).unwrap(), a);
    }
}
