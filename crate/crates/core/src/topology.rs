//! Position-conditioned density matrices, Bloch fields and the skyrmion
//! number.
//!
//! Photon A is projected onto transverse position `r`, leaving photon B in
//! `ρ(r) = Σ_{i,m} LG_{ℓ_i}(r)·conj(LG_{ℓ_m}(r))·ρ_{(i j),(m n)} |j⟩⟨n|`. With
//! this orientation the untouched reference state `(0, 1)` has `N = +1`.
//!
//! `N` is the sum of signed spherical-triangle areas over the pixel plaquettes
//! inside the aperture, divided by 4π. Beyond the aperture the Bloch vector
//! approaches a fixed direction set by the larger-|ℓ| mode, so the remaining
//! exterior is closed by a cone from the aperture boundary to that direction.

use num_complex::Complex;
use num_traits::Float;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{pauli, Mat2};
use crate::optics::{lg_field, Grid2D, LgMode};
use crate::real::Real;
use crate::state::{BasisMap, DensityMatrix4};

/// Default centering threshold as a fraction of the largest centered vector.
pub const DEFAULT_EPSILON: f64 = 1e-3;

/// Largest allowed fraction of aperture pixels dropped by centering.
pub const MAX_EXCLUDED_FRACTION: f64 = 0.2;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModeMap<T> {
    /// Photon-A OAM labels of `|0⟩` and `|1⟩`.
    pub ell: [i32; 2],
    pub w0: T,
}

impl<T: Real> ModeMap<T> {
    pub fn max_abs_ell(&self) -> i32 {
        self.ell[0].abs().max(self.ell[1].abs())
    }

    /// `3·w0·sqrt(|ℓ|max + 1)`.
    pub fn default_aperture(&self) -> T {
        T::lit(3.0) * crate::optics::effective_radius(self.max_abs_ell(), self.w0)
    }

    /// Index of the mode that dominates far from the axis, if one does.
    fn outer_mode(&self) -> Option<usize> {
        match self.ell[0].abs().cmp(&self.ell[1].abs()) {
            std::cmp::Ordering::Less => Some(1),
            std::cmp::Ordering::Greater => Some(0),
            std::cmp::Ordering::Equal => None,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SpatialDensity<T> {
    pub grid: Grid2D<T>,
    pub blocks: Vec<Mat2<T>>,
    pub mode_map: ModeMap<T>,
    /// Unit-trace photon-B state that ρ(r) tends to as `r → ∞`.
    pub asymptote: Option<Mat2<T>>,
}

pub fn spatial_density<T: Real>(
    rho: &DensityMatrix4<T>,
    mode_map: &ModeMap<T>,
    grid: &Grid2D<T>,
) -> Result<SpatialDensity<T>> {
    if let Some(b) = rho.basis() {
        if b.a != mode_map.ell {
            return Err(Error::InvalidArgument(format!(
                "mode map labels {:?} do not match the density basis {:?}",
                mode_map.ell, b.a
            )));
        }
    }
    let f0 = lg_field(&LgMode::new(mode_map.ell[0], mode_map.w0)?, grid)?;
    let f1 = lg_field(&LgMode::new(mode_map.ell[1], mode_map.w0)?, grid)?;
    let m = *rho.matrix();
    let blocks = f0
        .samples()
        .par_iter()
        .zip(f1.samples().par_iter())
        .map(|(&u0, &u1)| {
            let u = [u0, u1];
            Mat2::from_fn(|j, n| {
                let mut acc = Complex::new(T::zero(), T::zero());
                for i in 0..2 {
                    for k in 0..2 {
                        acc += u[i] * u[k].conj() * m[(2 * i + j, 2 * k + n)];
                    }
                }
                acc
            })
            .hermitian_part()
        })
        .collect();
    let asymptote = mode_map.outer_mode().and_then(|b| {
        let block = Mat2::from_fn(|j, n| m[(2 * b + j, 2 * b + n)]);
        let tr = block.trace().re;
        (tr > T::zero()).then(|| block.scale_real(tr.recip()).hermitian_part())
    });
    Ok(SpatialDensity { grid: *grid, blocks, mode_map: *mode_map, asymptote })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BlochField<T> {
    pub grid: Grid2D<T>,
    /// Raw `Tr(σ_k ρ(r))` before centering, or unit vectors after.
    pub b: Vec<[T; 3]>,
    /// Per-pixel `Tr ρ(r)`.
    pub trace: Vec<T>,
    pub center_offset: [T; 3],
    pub normalized: bool,
    /// Pixels dropped by centering.
    pub excluded: Vec<bool>,
    /// Bloch direction as `r → ∞`: unit-trace and raw before centering,
    /// centered and normalized after.
    pub asymptote: Option<[T; 3]>,
    pub aperture_radius: T,
    pub epsilon: T,
}

fn bloch_of<T: Real>(m: &Mat2<T>) -> [T; 3] {
    let p = pauli::<T>();
    [m.trace_product(&p[1]).re, m.trace_product(&p[2]).re, m.trace_product(&p[3]).re]
}

pub fn bloch_field<T: Real>(sd: &SpatialDensity<T>) -> BlochField<T> {
    let b = sd.blocks.par_iter().map(bloch_of).collect();
    let trace = sd.blocks.iter().map(|m| Float::max(m.trace().re, T::zero())).collect();
    BlochField {
        grid: sd.grid,
        b,
        trace,
        center_offset: [T::zero(); 3],
        normalized: false,
        excluded: vec![false; sd.grid.len()],
        asymptote: sd.asymptote.as_ref().map(bloch_of),
        aperture_radius: sd.mode_map.default_aperture(),
        epsilon: T::zero(),
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CenterEstimator {
    /// `Σ b(r) / Σ Tr ρ(r)` over the aperture.
    #[default]
    IntensityWeighted,
    /// Plain mean of the per-pixel unit-trace Bloch vectors.
    Unweighted,
}

fn valid_trace<T: Real>(t: T) -> bool {
    t > T::min_positive_value().sqrt()
}

fn in_aperture<T: Real>(grid: &Grid2D<T>, idx: usize, radius: T) -> bool {
    let (x, y) = grid.position(idx);
    x * x + y * y <= radius * radius
}

/// Centering estimate of the raw field over the aperture.
pub fn field_centroid<T: Real>(bf: &BlochField<T>, aperture: T, estimator: CenterEstimator) -> Result<[T; 3]> {
    let mut acc = [T::zero(); 3];
    let mut weight = T::zero();
    for idx in 0..bf.b.len() {
        let t = bf.trace[idx];
        if !in_aperture(&bf.grid, idx, aperture) || !valid_trace(t) {
            continue;
        }
        match estimator {
            CenterEstimator::IntensityWeighted => {
                for k in 0..3 {
                    acc[k] += bf.b[idx][k];
                }
                weight += t;
            }
            CenterEstimator::Unweighted => {
                for k in 0..3 {
                    acc[k] += bf.b[idx][k] / t;
                }
                weight += T::one();
            }
        }
    }
    if !(weight > T::zero()) {
        return Err(Error::InvalidArgument("Bloch field has no intensity inside the aperture".into()));
    }
    Ok(acc.map(|a| a / weight))
}

pub fn center_and_normalize<T: Real>(bf: &BlochField<T>, epsilon: T) -> Result<BlochField<T>> {
    center_and_normalize_with(bf, epsilon, bf.aperture_radius, CenterEstimator::IntensityWeighted)
}

/// Subtracts the centroid from the per-pixel unit-trace Bloch vectors inside
/// the aperture and scales the results to unit length. Pixels closer to the
/// centroid than `epsilon` times the largest centered length are excluded,
/// as are pixels without intensity.
pub fn center_and_normalize_with<T: Real>(
    bf: &BlochField<T>,
    epsilon: T,
    aperture: T,
    estimator: CenterEstimator,
) -> Result<BlochField<T>> {
    if bf.normalized {
        return Err(Error::InvalidArgument("Bloch field is already centered and normalized".into()));
    }
    let c = field_centroid(bf, aperture, estimator)?;
    let n = bf.b.len();
    let mut centered = vec![[T::zero(); 3]; n];
    let mut lengths = vec![T::zero(); n];
    let mut inside = vec![false; n];
    let mut max_len = T::zero();
    for idx in 0..n {
        let t = bf.trace[idx];
        if !in_aperture(&bf.grid, idx, aperture) {
            continue;
        }
        inside[idx] = true;
        if !valid_trace(t) {
            continue;
        }
        let v: [T; 3] = std::array::from_fn(|k| bf.b[idx][k] / t - c[k]);
        let len = v.iter().map(|x| *x * *x).sum::<T>().sqrt();
        centered[idx] = v;
        lengths[idx] = len;
        max_len = Float::max(max_len, len);
    }
    let threshold = epsilon * max_len;
    let total = inside.iter().filter(|&&i| i).count();
    let mut excluded = vec![false; n];
    let mut count = 0;
    let mut b = vec![[T::zero(); 3]; n];
    for idx in 0..n {
        if !inside[idx] {
            continue;
        }
        if !valid_trace(bf.trace[idx]) || !(lengths[idx] > threshold) || !(lengths[idx] > T::zero()) {
            excluded[idx] = true;
            count += 1;
            continue;
        }
        b[idx] = centered[idx].map(|x| x / lengths[idx]);
    }
    if total == 0 || (count as f64) > MAX_EXCLUDED_FRACTION * total as f64 {
        return Err(Error::DegenerateField { excluded: count, total });
    }
    let asymptote = bf.asymptote.and_then(|a| {
        let v: [T; 3] = std::array::from_fn(|k| a[k] - c[k]);
        let len = v.iter().map(|x| *x * *x).sum::<T>().sqrt();
        (len > threshold && len > T::zero()).then(|| v.map(|x| x / len))
    });
    Ok(BlochField {
        grid: bf.grid,
        b,
        trace: bf.trace.clone(),
        center_offset: c,
        normalized: true,
        excluded,
        asymptote,
        aperture_radius: aperture,
        epsilon,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CoverageSample<T> {
    pub x: T,
    pub y: T,
    pub b: [T; 3],
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TopologyReport<T> {
    pub skyrmion_number: T,
    /// Contribution of the aperture plaquettes alone.
    pub aperture_number: T,
    pub aperture_radius: T,
    pub epsilon: T,
    pub excluded_pixels: usize,
    pub aperture_pixels: usize,
    pub center_offset: [T; 3],
    pub closed: bool,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub coverage: Vec<CoverageSample<T>>,
}

impl<T: Real> TopologyReport<T> {
    pub fn without_coverage(&self) -> Self {
        Self { coverage: Vec::new(), ..self.clone() }
    }
}

/// Signed solid angle of the spherical triangle `(a, b, c)`.
pub fn triangle_solid_angle<T: Real>(a: &[T; 3], b: &[T; 3], c: &[T; 3]) -> T {
    let cross = [b[1] * c[2] - b[2] * c[1], b[2] * c[0] - b[0] * c[2], b[0] * c[1] - b[1] * c[0]];
    let triple = a[0] * cross[0] + a[1] * cross[1] + a[2] * cross[2];
    let dot = |u: &[T; 3], v: &[T; 3]| u[0] * v[0] + u[1] * v[1] + u[2] * v[2];
    T::lit(2.0) * Float::atan2(triple, T::one() + dot(a, b) + dot(b, c) + dot(c, a))
}

/// Skyrmion number of a centered and normalized field over a disk of radius
/// `aperture`.
pub fn skyrmion_number<T: Real>(bf: &BlochField<T>, aperture: T) -> Result<TopologyReport<T>> {
    if !bf.normalized {
        return Err(Error::InvalidArgument("skyrmion number needs a centered, normalized field".into()));
    }
    let grid = bf.grid;
    let n = grid.n();
    let half_extent = grid.coord(n - 1).min(-grid.coord(0));
    if !(aperture > T::zero()) || aperture > half_extent {
        return Err(Error::InvalidArgument(format!("aperture {aperture:e} m does not fit the grid")));
    }
    let tol = T::lit(1e-6).max(T::epsilon() * T::lit(1e3));
    for idx in 0..bf.b.len() {
        if in_aperture(&grid, idx, aperture) && !bf.excluded[idx] {
            let len2 = bf.b[idx].iter().map(|x| *x * *x).sum::<T>();
            if Float::abs(len2 - T::one()) > tol {
                return Err(Error::InvalidArgument("field vectors are not unit length".into()));
            }
        }
    }
    // Plaquette (i, j) spans pixels (i, j), (i+1, j), (i+1, j+1), (i, j+1)
    // with i along x; it is counted when all corners lie in the aperture.
    let plaquette_in = |i: usize, j: usize| -> bool {
        i + 1 < n
            && j + 1 < n
            && [(i, j), (i + 1, j), (i + 1, j + 1), (i, j + 1)]
                .iter()
                .all(|&(x, y)| in_aperture(&grid, y * n + x, aperture))
    };
    let usable = |i: usize, j: usize| -> bool {
        [(i, j), (i + 1, j), (i + 1, j + 1), (i, j + 1)].iter().all(|&(x, y)| !bf.excluded[y * n + x])
    };
    let v = |x: usize, y: usize| &bf.b[y * n + x];
    let rows: Vec<(T, T)> = (0..n.saturating_sub(1))
        .into_par_iter()
        .map(|j| {
            let mut area = T::zero();
            let mut cone = T::zero();
            for i in 0..n - 1 {
                if !plaquette_in(i, j) || !usable(i, j) {
                    continue;
                }
                let (p00, p10, p11, p01) = (v(i, j), v(i + 1, j), v(i + 1, j + 1), v(i, j + 1));
                area += triangle_solid_angle(p00, p10, p11) + triangle_solid_angle(p00, p11, p01);
                if let Some(inf) = &bf.asymptote {
                    // Edges in counter-clockwise order with the neighbour across each.
                    let edges: [(&[T; 3], &[T; 3], bool); 4] = [
                        (p00, p10, j > 0 && plaquette_in(i, j - 1)),
                        (p10, p11, plaquette_in(i + 1, j)),
                        (p11, p01, plaquette_in(i, j + 1)),
                        (p01, p00, i > 0 && plaquette_in(i - 1, j)),
                    ];
                    for (a, b, shared) in edges {
                        if !shared {
                            cone += triangle_solid_angle(b, a, inf);
                        }
                    }
                }
            }
            (area, cone)
        })
        .collect();
    let four_pi = T::lit(4.0) * T::PI();
    let area: T = rows.iter().map(|r| r.0).sum();
    let cone: T = rows.iter().map(|r| r.1).sum();
    let aperture_pixels = (0..bf.b.len()).filter(|&i| in_aperture(&grid, i, aperture)).count();
    let excluded_pixels = (0..bf.b.len()).filter(|&i| in_aperture(&grid, i, aperture) && bf.excluded[i]).count();
    let closed = bf.asymptote.is_some();
    Ok(TopologyReport {
        skyrmion_number: (area + cone) / four_pi,
        aperture_number: area / four_pi,
        aperture_radius: aperture,
        epsilon: bf.epsilon,
        excluded_pixels,
        aperture_pixels,
        center_offset: bf.center_offset,
        closed,
        coverage: Vec::new(),
    })
}

/// Subsampled unit-trace Bloch vectors of a raw field inside `aperture`,
/// at most `max_per_side` samples along each axis.
pub fn coverage_samples<T: Real>(bf: &BlochField<T>, aperture: T, max_per_side: usize) -> Vec<CoverageSample<T>> {
    let n = bf.grid.n();
    let stride = n.div_ceil(max_per_side.max(1)).max(1);
    let mut out = Vec::new();
    for y in (0..n).step_by(stride) {
        for x in (0..n).step_by(stride) {
            let idx = y * n + x;
            let t = bf.trace[idx];
            if !in_aperture(&bf.grid, idx, aperture) || !valid_trace(t) {
                continue;
            }
            let (px, py) = bf.grid.position(idx);
            out.push(CoverageSample { x: px, y: py, b: bf.b[idx].map(|c| c / t) });
        }
    }
    out
}

pub fn coverage_csv<T: Real>(samples: &[CoverageSample<T>]) -> String {
    let mut s = String::from("x,y,b_x,b_y,b_z\n");
    for c in samples {
        s.push_str(&format!(
            "{:e},{:e},{:e},{:e},{:e}\n",
            c.x.as_f64(),
            c.y.as_f64(),
            c.b[0].as_f64(),
            c.b[1].as_f64(),
            c.b[2].as_f64()
        ));
    }
    s
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TopologyOptions<T> {
    pub epsilon: T,
    /// Defaults to `3·w0·sqrt(|ℓ|max + 1)`.
    pub aperture: Option<T>,
    pub estimator: CenterEstimator,
    /// Coverage samples per side; zero disables export.
    pub coverage_per_side: usize,
}

impl<T: Real> Default for TopologyOptions<T> {
    fn default() -> Self {
        Self {
            epsilon: T::lit(DEFAULT_EPSILON),
            aperture: None,
            estimator: CenterEstimator::IntensityWeighted,
            coverage_per_side: 0,
        }
    }
}

/// Full pipeline from a two-qubit state to its topology report.
pub fn topology_report<T: Real>(
    rho: &DensityMatrix4<T>,
    mode_map: &ModeMap<T>,
    grid: &Grid2D<T>,
    options: &TopologyOptions<T>,
) -> Result<TopologyReport<T>> {
    let sd = spatial_density(rho, mode_map, grid)?;
    let raw = bloch_field(&sd);
    let aperture = options.aperture.unwrap_or_else(|| mode_map.default_aperture());
    let normalized = center_and_normalize_with(&raw, options.epsilon, aperture, options.estimator)?;
    let mut report = skyrmion_number(&normalized, aperture)?;
    if options.coverage_per_side > 0 {
        report.coverage = coverage_samples(&raw, aperture, options.coverage_per_side);
    }
    Ok(report)
}

/// Mode map of a basis map with waist `w0`.
pub fn mode_map_of<T: Real>(basis: &BasisMap, w0: T) -> ModeMap<T> {
    ModeMap { ell: basis.a, w0 }
}

/// Applies one rotation matrix to every retained vector of a normalized field.
pub fn rotate_field<T: Real>(bf: &BlochField<T>, rotation: &[[T; 3]; 3]) -> BlochField<T> {
    let rot = |v: &[T; 3]| -> [T; 3] {
        std::array::from_fn(|i| rotation[i][0] * v[0] + rotation[i][1] * v[1] + rotation[i][2] * v[2])
    };
    BlochField { b: bf.b.iter().map(rot).collect(), asymptote: bf.asymptote.as_ref().map(rot), ..bf.clone() }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::state::make_state;

    fn grid() -> Grid2D<f64> {
        Grid2D::new(128, 0.012).unwrap()
    }

    #[test]
    fn reference_state_has_unit_charge() {
        let s = make_state(0, 1, 0.0_f64).unwrap().with_waist(1e-3);
        let mm = mode_map_of(&s.basis_map, s.w0);
        let r = topology_report(&s.density(), &mm, &grid(), &TopologyOptions::default()).unwrap();
        assert!((r.skyrmion_number - 1.0).abs() < 0.02, "{}", r.skyrmion_number);
        assert!(r.aperture_number < r.skyrmion_number);
    }

    #[test]
    fn poles_of_reference_state() {
        let s = make_state(0, 1, 0.0_f64).unwrap().with_waist(1e-3);
        let sd = spatial_density(&s.density(), &mode_map_of(&s.basis_map, s.w0), &grid()).unwrap();
        let bf = bloch_field(&sd);
        let center = 64 * 128 + 64;
        assert!(bf.b[center][2] > 0.0);
        let far = 64 * 128 + 64 + 40;
        assert!(bf.b[far][2] < 0.0);
        assert_eq!(bf.asymptote, Some([0.0, 0.0, -1.0]));
    }

    #[test]
    fn mixed_identity_blocks_vanish() {
        let mm = ModeMap { ell: [0, 1], w0: 1e-3 };
        let sd = spatial_density(&DensityMatrix4::maximally_mixed(), &mm, &grid()).unwrap();
        let bf = bloch_field(&sd);
        assert!(bf.b.iter().all(|v| v.iter().all(|x| x.abs() < 1e-15)));
        assert!(matches!(center_and_normalize(&bf, 1e-3), Err(Error::DegenerateField { .. })));
    }

    #[test]
    fn basis_mismatch_is_rejected() {
        let s = make_state(0, 2, 0.0_f64).unwrap();
        let mm = ModeMap { ell: [0, 1], w0: 1e-3 };
        assert!(spatial_density(&s.density(), &mm, &grid()).is_err());
    }

    #[test]
    fn solid_angle_of_octant() {
        let a = [1.0, 0.0, 0.0];
        let b = [0.0, 1.0, 0.0];
        let c = [0.0, 0.0, 1.0];
        let w = triangle_solid_angle(&a, &b, &c);
        assert!((w - std::f64::consts::FRAC_PI_2).abs() < 1e-14);
        assert!((triangle_solid_angle(&a, &c, &b) + w).abs() < 1e-14);
    }

    #[test]
    fn raw_field_is_rejected() {
        let mm = ModeMap { ell: [0, 1], w0: 1e-3 };
        let s = make_state(0, 1, 0.0_f64).unwrap();
        let bf = bloch_field(&spatial_density(&s.density(), &mm, &grid()).unwrap());
        assert!(skyrmion_number(&bf, 3e-3).is_err());
    }
}
