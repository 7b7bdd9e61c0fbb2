//! Entanglement and correlation measures on two-qubit density matrices.
//!
//! Entropies are in bits. Classical correlation and discord measure photon B
//! with projectors `|ψ(θ,φ)⟩ = cos(θ/2)|0⟩ + e^{iφ} sin(θ/2)|1⟩` and their
//! complements.

use num_complex::Complex;
use num_traits::Float;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::linalg::{pauli, CMatrix, Mat2, Mat4};
use crate::real::Real;
use crate::state::{partial_trace, DensityMatrix4, Subsystem};

/// Discord values down to this are clamped to zero.
pub const DISCORD_TOLERANCE: f64 = 1e-8;

/// Reference discord below this is treated as zero when normalizing.
pub const MIN_REFERENCE_DISCORD: f64 = 1e-6;

/// Wootters concurrence.
pub fn concurrence<T: Real>(rho: &DensityMatrix4<T>) -> T {
    let p = pauli::<T>();
    let yy = p[2].kron(&p[2]);
    let m = *rho.matrix();
    let tilde = yy * m.conj() * yy;
    let s = m.psd_sqrt();
    let r = s * tilde * s;
    let mut lambda = r.hermitian_eigen().values.map(|l| Float::max(l, T::zero()).sqrt());
    lambda.sort_by(|a, b| b.partial_cmp(a).unwrap_or(std::cmp::Ordering::Equal));
    Float::max(lambda[0] - lambda[1] - lambda[2] - lambda[3], T::zero())
}

/// Uhlmann fidelity `(Tr √(√σ ρ √σ))²`.
pub fn fidelity<T: Real>(rho: &DensityMatrix4<T>, reference: &DensityMatrix4<T>) -> T {
    let s = reference.matrix().psd_sqrt();
    let inner = s * *rho.matrix() * s;
    let tr: T = inner.hermitian_eigen().values.iter().map(|&l| Float::max(l, T::zero()).sqrt()).sum();
    Float::min(tr * tr, T::one())
}

/// `Tr(ρ²)`.
pub fn purity<T: Real>(rho: &DensityMatrix4<T>) -> T {
    rho.matrix().trace_product(rho.matrix()).re
}

/// `−Tr(ρ log₂ ρ)` with eigenvalues clamped to `[0, 1]`.
pub fn von_neumann_entropy<T: Real, const D: usize>(rho: &CMatrix<T, D>) -> T {
    if D == 2 {
        let p = pauli::<T>();
        let m = Mat2::from_fn(|i, j| rho[(i, j)]);
        let r = (0..3).map(|k| m.trace_product(&p[k + 1]).re).map(|x| x * x).sum::<T>().sqrt();
        return binary_entropy((T::one() + r) / T::lit(2.0));
    }
    rho.hermitian_eigen().values.iter().map(|&l| entropy_term(l)).sum()
}

fn entropy_term<T: Real>(l: T) -> T {
    let l = Float::min(Float::max(l, T::zero()), T::one());
    if l <= T::zero() {
        T::zero()
    } else {
        -l * l.log2()
    }
}

fn binary_entropy<T: Real>(p: T) -> T {
    entropy_term(p) + entropy_term(T::one() - p)
}

pub fn mutual_information<T: Real>(rho: &DensityMatrix4<T>) -> T {
    let sa = von_neumann_entropy(&partial_trace(rho, Subsystem::A));
    let sb = von_neumann_entropy(&partial_trace(rho, Subsystem::B));
    sa + sb - von_neumann_entropy(rho.matrix())
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MeasurementAngles<T> {
    pub theta: T,
    pub phi: T,
}

impl<T: Real> MeasurementAngles<T> {
    /// Clamps θ into `[0, π]` and wraps φ into `[0, 2π)`.
    pub fn canonical(theta: T, phi: T) -> Self {
        let theta = Float::min(Float::max(theta, T::zero()), T::PI());
        let tau = T::TAU();
        let mut phi = phi % tau;
        if phi < T::zero() {
            phi += tau;
        }
        Self { theta, phi }
    }

    pub fn direction(&self) -> [T; 3] {
        let (st, ct) = self.theta.sin_cos();
        let (sp, cp) = self.phi.sin_cos();
        [st * cp, st * sp, ct]
    }

    /// Angles of a nonzero direction; φ = 0 on the poles.
    pub fn from_direction(d: [T; 3]) -> Self {
        let norm = (d[0] * d[0] + d[1] * d[1] + d[2] * d[2]).sqrt();
        let z = Float::max(Float::min(d[2] / norm, T::one()), -T::one());
        Self::canonical(z.acos(), d[1].atan2(d[0]))
    }

    /// The projector state `|ψ(θ, φ)⟩`.
    pub fn state(&self) -> [Complex<T>; 2] {
        let half = self.theta / T::lit(2.0);
        [Complex::new(half.cos(), T::zero()), Complex::from_polar(half.sin(), self.phi)]
    }
}

/// Pauli coefficients `R_{μν} = Tr[(σ_μ ⊗ σ_ν) ρ]`.
fn correlation_tensor<T: Real>(rho: &Mat4<T>) -> [[T; 4]; 4] {
    let p = pauli::<T>();
    let mut r = [[T::zero(); 4]; 4];
    for (mu, row) in r.iter_mut().enumerate() {
        for (nu, v) in row.iter_mut().enumerate() {
            *v = p[mu].kron(&p[nu]).trace_product(rho).re;
        }
    }
    r
}

/// `S(ρ_A) − Σ_k p_k S(ρ_{A|k})` for a measurement of B along `n`.
fn conditional_information<T: Real>(r: &[[T; 4]; 4], s_a: T, n: [T; 3]) -> T {
    let mut acc = T::zero();
    for sign in [T::one(), -T::one()] {
        let proj_b: T = (0..3).map(|j| r[0][j + 1] * n[j]).sum();
        let weight = T::one() + sign * proj_b;
        let p = weight / T::lit(2.0);
        if p <= T::zero() {
            continue;
        }
        let a: [T; 3] =
            std::array::from_fn(|i| (r[i + 1][0] + sign * (0..3).map(|j| r[i + 1][j + 1] * n[j]).sum::<T>()) / weight);
        let len = a.iter().map(|x| *x * *x).sum::<T>().sqrt();
        acc += p * binary_entropy((T::one() + Float::min(len, T::one())) / T::lit(2.0));
    }
    s_a - acc
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassicalCorrelation<T> {
    pub value: T,
    pub angles: MeasurementAngles<T>,
    pub grid_floor: T,
    pub starts: usize,
    /// Index of the start that produced `value`; `None` if no start beat the
    /// grid floor.
    pub best_start: Option<usize>,
    /// Set when every local search failed and the grid floor was returned.
    pub degraded: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SearchOptions {
    pub grid_theta: usize,
    pub grid_phi: usize,
    pub max_iterations: usize,
}

impl Default for SearchOptions {
    fn default() -> Self {
        Self { grid_theta: 32, grid_phi: 64, max_iterations: 200 }
    }
}

/// The eight fixed starts: θ ∈ {π/4, 3π/4} × φ ∈ {π/4, 3π/4, 5π/4, 7π/4}.
pub fn default_starts<T: Real>() -> Vec<MeasurementAngles<T>> {
    let q = T::FRAC_PI_4();
    let mut out = Vec::with_capacity(8);
    for t in [1, 3] {
        for f in [1, 3, 5, 7] {
            out.push(MeasurementAngles {
                theta: q * T::from_i32(t).unwrap_or_else(T::one),
                phi: q * T::from_i32(f).unwrap_or_else(T::one),
            });
        }
    }
    out
}

pub fn classical_correlation<T: Real>(rho: &DensityMatrix4<T>) -> ClassicalCorrelation<T> {
    classical_correlation_with(rho, &SearchOptions::default())
}

/// Maximizes the classical correlation `J(A|B)` over projective measurements
/// on photon B: a dense `(θ, φ)` grid scan provides a floor, then bounded
/// gradient ascent runs from the eight fixed starts in parallel.
pub fn classical_correlation_with<T: Real>(
    rho: &DensityMatrix4<T>,
    options: &SearchOptions,
) -> ClassicalCorrelation<T> {
    let r = correlation_tensor(rho.matrix());
    let s_a = von_neumann_entropy(&partial_trace(rho, Subsystem::A));
    let f = |a: &MeasurementAngles<T>| conditional_information(&r, s_a, a.direction());

    let (grid_floor, grid_best) = grid_scan(&f, options.grid_theta, options.grid_phi);
    let starts = default_starts::<T>();
    let results: Vec<Option<(T, MeasurementAngles<T>)>> =
        starts.par_iter().map(|s| ascend(&f, *s, options.max_iterations)).collect();

    let mut best = (grid_floor, grid_best, None);
    for (idx, res) in results.iter().enumerate() {
        if let Some((v, a)) = res {
            if *v > best.0 {
                best = (*v, *a, Some(idx));
            }
        }
    }
    let degraded = results.iter().all(Option::is_none);
    ClassicalCorrelation {
        value: best.0,
        angles: best.1,
        grid_floor,
        starts: starts.len(),
        best_start: best.2,
        degraded,
    }
}

/// Best value over a `nt × np` grid covering θ ∈ [0, π], φ ∈ [0, 2π).
pub fn grid_scan<T: Real>(
    f: &(impl Fn(&MeasurementAngles<T>) -> T + Sync),
    nt: usize,
    np: usize,
) -> (T, MeasurementAngles<T>) {
    let nt = nt.max(2);
    let np = np.max(1);
    let mut best = (T::neg_infinity(), MeasurementAngles { theta: T::zero(), phi: T::zero() });
    for i in 0..nt {
        let theta = T::PI() * T::from_usize_lossy(i) / T::from_usize_lossy(nt - 1);
        for j in 0..np {
            let phi = T::TAU() * T::from_usize_lossy(j) / T::from_usize_lossy(np);
            let a = MeasurementAngles { theta, phi };
            let v = f(&a);
            if v > best.0 {
                best = (v, a);
            }
        }
    }
    best
}

/// Newton ascent on the sphere of measurement directions, in a tangent chart
/// rebuilt at every iterate so the poles need no special care. Falls back to
/// the gradient when the Hessian is not negative definite; every accepted step
/// increases `f`. `None` if the objective is not finite at the start.
fn ascend<T: Real>(
    f: &impl Fn(&MeasurementAngles<T>) -> T,
    start: MeasurementAngles<T>,
    max_iterations: usize,
) -> Option<(T, MeasurementAngles<T>)> {
    let mut n = start.direction();
    let mut fx = f(&start);
    if !fx.is_finite() {
        return None;
    }
    let two = T::lit(2.0);
    let h = T::epsilon().powf(T::lit(0.25));
    for _ in 0..max_iterations {
        let (e1, e2) = tangent_basis(n);
        let g = |u: T, v: T| f(&MeasurementAngles::from_direction(chart(n, e1, e2, u, v)));
        let (gp, gm, gq, gr) = (g(h, T::zero()), g(-h, T::zero()), g(T::zero(), h), g(T::zero(), -h));
        let grad = [(gp - gm) / (two * h), (gq - gr) / (two * h)];
        let huu = (gp - two * fx + gm) / (h * h);
        let hvv = (gq - two * fx + gr) / (h * h);
        let huv = (g(h, h) - g(h, -h) - g(-h, h) + g(-h, -h)) / (T::lit(4.0) * h * h);
        let gnorm = (grad[0] * grad[0] + grad[1] * grad[1]).sqrt();
        if !gnorm.is_finite() || gnorm < T::epsilon().sqrt() * T::lit(1e-2) {
            break;
        }
        let det = huu * hvv - huv * huv;
        let mut d = if huu < T::zero() && det > T::zero() {
            [-(hvv * grad[0] - huv * grad[1]) / det, -(huu * grad[1] - huv * grad[0]) / det]
        } else {
            [grad[0] / gnorm * T::lit(0.25), grad[1] / gnorm * T::lit(0.25)]
        };
        let len = (d[0] * d[0] + d[1] * d[1]).sqrt();
        if len > T::one() {
            d = [d[0] / len, d[1] / len];
        }
        let mut accepted = false;
        let mut s = T::one();
        for _ in 0..50 {
            let cand = chart(n, e1, e2, s * d[0], s * d[1]);
            let ft = f(&MeasurementAngles::from_direction(cand));
            if ft.is_finite() && ft > fx {
                n = cand;
                fx = ft;
                accepted = true;
                break;
            }
            s *= T::lit(0.5);
        }
        if !accepted {
            break;
        }
    }
    Some((fx, MeasurementAngles::from_direction(n)))
}

/// Unit vector `n + u·e1 + v·e2`, normalized.
fn chart<T: Real>(n: [T; 3], e1: [T; 3], e2: [T; 3], u: T, v: T) -> [T; 3] {
    let p: [T; 3] = std::array::from_fn(|i| n[i] + u * e1[i] + v * e2[i]);
    let norm = (p[0] * p[0] + p[1] * p[1] + p[2] * p[2]).sqrt();
    p.map(|x| x / norm)
}

fn tangent_basis<T: Real>(n: [T; 3]) -> ([T; 3], [T; 3]) {
    // Cross with the axis least aligned with n.
    let axis = if Float::abs(n[0]) < T::lit(0.6) {
        [T::one(), T::zero(), T::zero()]
    } else {
        [T::zero(), T::one(), T::zero()]
    };
    let cross =
        |a: [T; 3], b: [T; 3]| [a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]];
    let e1 = cross(n, axis);
    let norm = (e1[0] * e1[0] + e1[1] * e1[1] + e1[2] * e1[2]).sqrt();
    let e1 = e1.map(|x| x / norm);
    (e1, cross(n, e1))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Discord<T> {
    /// `I − J`, clamped at zero.
    pub value: T,
    /// Unclamped difference.
    pub raw: T,
    /// Raw discord fell below `-DISCORD_TOLERANCE`.
    pub below_tolerance: bool,
    pub mutual_information: T,
    pub classical: ClassicalCorrelation<T>,
}

pub fn discord<T: Real>(rho: &DensityMatrix4<T>) -> Discord<T> {
    let mi = mutual_information(rho);
    let classical = classical_correlation(rho);
    let raw = mi - classical.value;
    Discord {
        value: Float::max(raw, T::zero()),
        raw,
        below_tolerance: raw < -T::lit(DISCORD_TOLERANCE),
        mutual_information: mi,
        classical,
    }
}

/// `D / D0`; `None` when the reference discord is too small to divide by.
pub fn normalized_discord<T: Real>(d: T, reference: T) -> Option<T> {
    (reference >= T::lit(MIN_REFERENCE_DISCORD)).then(|| d / reference)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WitnessReport<T> {
    pub concurrence: T,
    pub fidelity_to_reference: Option<T>,
    pub purity: T,
    pub mutual_information: T,
    pub classical_correlation: T,
    pub discord: T,
    pub discord_normalized: Option<T>,
    /// Raised when the reference discord was too small to normalize by.
    pub normalization_skipped: bool,
    pub optimizer: OptimizerDiagnostics<T>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OptimizerDiagnostics<T> {
    pub starts: usize,
    pub best_start: Option<usize>,
    pub theta: T,
    pub phi: T,
    pub grid_floor: T,
    pub degraded: bool,
    /// Unclamped `I − J`.
    pub residual: T,
}

/// All witnesses of `rho`; `reference` is the ideal state for the fidelity and
/// `reference_discord` the zero-turbulence discord `D0`.
pub fn witness_report<T: Real>(
    rho: &DensityMatrix4<T>,
    reference: Option<&DensityMatrix4<T>>,
    reference_discord: Option<T>,
) -> WitnessReport<T> {
    let d = discord(rho);
    let discord_normalized = reference_discord.and_then(|d0| normalized_discord(d.value, d0));
    WitnessReport {
        concurrence: concurrence(rho),
        fidelity_to_reference: reference.map(|r| fidelity(rho, r)),
        purity: purity(rho),
        mutual_information: d.mutual_information,
        classical_correlation: d.classical.value,
        discord: d.value,
        discord_normalized,
        normalization_skipped: reference_discord.is_some() && discord_normalized.is_none(),
        optimizer: OptimizerDiagnostics {
            starts: d.classical.starts,
            best_start: d.classical.best_start,
            theta: d.classical.angles.theta,
            phi: d.classical.angles.phi,
            grid_floor: d.classical.grid_floor,
            degraded: d.classical.degraded,
            residual: d.raw,
        },
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::state::make_state;
    use num_traits::{One, Zero};

    fn bell() -> DensityMatrix4<f64> {
        make_state(0, 1, 0.0).unwrap().density()
    }

    fn classical_mixture() -> DensityMatrix4<f64> {
        DensityMatrix4::new(Mat4::diagonal(&[0.5, 0.0, 0.0, 0.5])).unwrap()
    }

    #[test]
    fn bell_values() {
        let b = bell();
        assert!((concurrence(&b) - 1.0).abs() < 1e-9);
        assert!((purity(&b) - 1.0).abs() < 1e-12);
        assert!((mutual_information(&b) - 2.0).abs() < 1e-9);
        let d = discord(&b);
        assert!((d.classical.value - 1.0).abs() < 1e-9);
        assert!((d.value - 1.0).abs() < 1e-9);
    }

    #[test]
    fn mixed_and_classical_values() {
        let m = DensityMatrix4::<f64>::maximally_mixed();
        assert_eq!(concurrence(&m), 0.0);
        assert!((purity(&m) - 0.25).abs() < 1e-15);
        assert!((von_neumann_entropy(m.matrix()) - 2.0).abs() < 1e-12);
        assert!(mutual_information(&m).abs() < 1e-12);
        assert!(classical_correlation(&m).value.abs() < 1e-12);
        let c = classical_mixture();
        let j = classical_correlation(&c);
        assert!((j.value - 1.0).abs() < 1e-9);
        assert!(discord(&c).value < 1e-9);
    }

    #[test]
    fn single_qubit_entropy() {
        let half = Mat2::<f64>::identity().scale_real(0.5);
        assert!((von_neumann_entropy(&half) - 1.0).abs() < 1e-15);
        let pure = Mat2::<f64>::outer(&[Complex::one(), Complex::zero()]);
        assert_eq!(von_neumann_entropy(&pure), 0.0);
    }

    #[test]
    fn fidelity_basics() {
        let b = bell();
        assert!((fidelity(&b, &b) - 1.0).abs() < 1e-9);
        assert!((fidelity(&b, &DensityMatrix4::maximally_mixed()) - 0.25).abs() < 1e-9);
        let other =
            DensityMatrix4::from_pure(&[Complex::zero(), Complex::one(), Complex::zero(), Complex::zero()]).unwrap();
        assert!(fidelity(&b, &other) < 1e-9);
    }

    #[test]
    fn normalization_guard() {
        assert_eq!(normalized_discord(0.5, 1.0), Some(0.5));
        assert_eq!(normalized_discord(0.5, 1e-9), None);
    }

    #[test]
    fn angles_are_canonical() {
        let a = MeasurementAngles::canonical(4.0_f64, -0.5);
        assert_eq!(a.theta, std::f64::consts::PI);
        assert!((a.phi - (std::f64::consts::TAU - 0.5)).abs() < 1e-15);
    }
}
