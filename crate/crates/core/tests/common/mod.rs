#![allow(dead_code)]

use num_complex::Complex64 as C;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::StandardNormal;
use skysim::linalg::{Mat2, Mat4};
use skysim::state::DensityMatrix4;
use skysim::Density;

pub fn rng(seed: u64) -> ChaCha20Rng {
    ChaCha20Rng::seed_from_u64(seed)
}

fn gauss(rng: &mut ChaCha20Rng) -> C {
    C::new(rng.sample(StandardNormal), rng.sample(StandardNormal))
}

pub fn random_amplitudes(rng: &mut ChaCha20Rng) -> [C; 4] {
    let v: [C; 4] = std::array::from_fn(|_| gauss(rng));
    let norm = v.iter().map(|x| x.norm_sqr()).sum::<f64>().sqrt();
    v.map(|x| x / norm)
}

/// `G G† / Tr` with `G` a 4×rank Ginibre matrix.
pub fn random_density(rng: &mut ChaCha20Rng, rank: usize) -> Density {
    let cols: Vec<[C; 4]> = (0..rank).map(|_| std::array::from_fn(|_| gauss(rng))).collect();
    let m = Mat4::from_fn(|i, j| cols.iter().map(|c| c[i] * c[j].conj()).sum());
    let tr = m.trace().re;
    DensityMatrix4::new(m.scale_real(1.0 / tr)).unwrap()
}

/// Haar-ish 2×2 unitary from a QR of a Ginibre matrix.
pub fn random_unitary(rng: &mut ChaCha20Rng) -> Mat2<f64> {
    let a = [gauss(rng), gauss(rng)];
    let na = (a[0].norm_sqr() + a[1].norm_sqr()).sqrt();
    let u0 = [a[0] / na, a[1] / na];
    let phase = C::from_polar(1.0, rng.random_range(0.0..std::f64::consts::TAU));
    let u1 = [-u0[1].conj() * phase, u0[0].conj() * phase];
    Mat2::from_rows([[u0[0], u1[0]], [u0[1], u1[1]]])
}

pub fn bell() -> Density {
    let s = std::f64::consts::FRAC_1_SQRT_2;
    DensityMatrix4::from_pure(&[C::new(s, 0.0), C::new(0.0, 0.0), C::new(0.0, 0.0), C::new(s, 0.0)]).unwrap()
}

pub fn werner(p: f64) -> Density {
    let m = bell().matrix().scale_real(p) + Mat4::identity().scale_real((1.0 - p) / 4.0);
    DensityMatrix4::new(m).unwrap()
}

/// `(|00⟩⟨00| + |11⟩⟨11|) / 2`.
pub fn classical_mixture() -> Density {
    DensityMatrix4::new(Mat4::diagonal(&[0.5, 0.0, 0.0, 0.5])).unwrap()
}

fn entropy2(m: [[C; 2]; 2]) -> f64 {
    let tr = m[0][0].re + m[1][1].re;
    let gap = ((m[0][0].re - m[1][1].re).powi(2) + 4.0 * m[0][1].norm_sqr()).sqrt();
    [(tr + gap) / 2.0, (tr - gap) / 2.0].iter().map(|&l| if l > 1e-15 { -l * l.log2() } else { 0.0 }).sum()
}

/// Reduced state of A after projecting B onto `v`, unnormalized.
fn conditional_a(rho: &Density, v: [C; 2]) -> [[C; 2]; 2] {
    let m = rho.matrix();
    let mut out = [[C::new(0.0, 0.0); 2]; 2];
    for (i, row) in out.iter_mut().enumerate() {
        for (k, cell) in row.iter_mut().enumerate() {
            for j in 0..2 {
                for n in 0..2 {
                    *cell += v[j].conj() * m[(2 * i + j, 2 * k + n)] * v[n];
                }
            }
        }
    }
    out
}

/// `J(A|B)` for the measurement on B along `(θ, φ)`, evaluated from the
/// post-measurement states.
pub fn j_at(rho: &Density, theta: f64, phi: f64) -> f64 {
    let (c, s) = ((theta / 2.0).cos(), (theta / 2.0).sin());
    let up = [C::new(c, 0.0), C::from_polar(s, phi)];
    let down = [C::new(-s, 0.0), C::from_polar(c, phi)];
    let mut total = [[C::new(0.0, 0.0); 2]; 2];
    let mut cond = 0.0;
    for v in [up, down] {
        let a = conditional_a(rho, v);
        for i in 0..2 {
            for k in 0..2 {
                total[i][k] += a[i][k];
            }
        }
        let p = a[0][0].re + a[1][1].re;
        if p > 1e-15 {
            cond += p * entropy2(a.map(|r| r.map(|x| x / p)));
        }
    }
    entropy2(total) - cond
}

/// Best `J` on an `nt × np` grid over θ ∈ [0, π], φ ∈ [0, 2π).
pub fn dense_grid_j(rho: &Density, nt: usize, np: usize) -> f64 {
    let mut best = f64::NEG_INFINITY;
    for i in 0..nt {
        let theta = std::f64::consts::PI * i as f64 / (nt - 1) as f64;
        for j in 0..np {
            best = best.max(j_at(rho, theta, std::f64::consts::TAU * j as f64 / np as f64));
        }
    }
    best
}

/// `S(ρ_A) + S(ρ_B) − S(ρ)` with the 4×4 spectrum from the library's
/// eigensolver, whose spectrum the witness suite checks against trace powers.
pub fn mutual_information_oracle(rho: &Density) -> f64 {
    let m = rho.matrix();
    let a = [[m[(0, 0)] + m[(1, 1)], m[(0, 2)] + m[(1, 3)]], [m[(2, 0)] + m[(3, 1)], m[(2, 2)] + m[(3, 3)]]];
    let b = [[m[(0, 0)] + m[(2, 2)], m[(0, 1)] + m[(2, 3)]], [m[(1, 0)] + m[(3, 2)], m[(1, 1)] + m[(3, 3)]]];
    let s: f64 = rho.eigenvalues().iter().map(|&l| if l > 1e-15 { -l * l.log2() } else { 0.0 }).sum();
    entropy2(a) + entropy2(b) - s
}

pub fn percentile(values: &mut [f64], q: f64) -> f64 {
    values.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let idx = ((values.len() - 1) as f64 * q).round() as usize;
    values[idx]
}

/// Bessel J0 by the integral representation `(1/π)∫₀^π cos(x sin t) dt`.
pub fn bessel_j0(x: f64) -> f64 {
    // The trapezoid rule is spectrally accurate once nodes outnumber x.
    let m = 64 + (1.5 * x.abs()) as usize;
    let h = std::f64::consts::PI / m as f64;
    let mut s = 0.0;
    for k in 0..=m {
        let w = if k == 0 || k == m { 0.5 } else { 1.0 };
        s += w * (x * (k as f64 * h).sin()).cos();
    }
    s * h / std::f64::consts::PI
}

/// `D(r) = 4π ∫ f Φ(f) [1 − J0(2π f r)] df`, integrated in log f.
pub fn structure_from_psd(r: f64, r0: f64) -> f64 {
    // Below the lower limit the integrand is ~ f^{1/3}; the cut costs < 1e-4.
    let (lo, hi, m) = ((1e-12 / r).ln(), (1e3 / r).ln(), 8000);
    let h = (hi - lo) / m as f64;
    let mut s = 0.0;
    for k in 0..=m {
        let f = (lo + k as f64 * h).exp();
        let w = if k == 0 || k == m { 0.5 } else { 1.0 };
        let psd = skysim::turbulence::kolmogorov_psd(f, r0).unwrap();
        s += w * f * f * psd * (1.0 - bessel_j0(2.0 * std::f64::consts::PI * f * r));
    }
    4.0 * std::f64::consts::PI * s * h
}
