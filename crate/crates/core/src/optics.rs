//! Transverse grids, Laguerre-Gaussian modes and OAM decomposition.
//!
//! Azimuthal convention: the mode `|ℓ⟩` carries `exp(+iℓφ)` with
//! `φ = atan2(y, x)`. Samples are stored row-major with the row index along
//! `y`, and pixel `i` sits at `(i - n/2)·dx`.

use std::io::{Read, Write};
use std::sync::Arc;

use num_complex::Complex;
use num_traits::{Float, Zero};
use rayon::prelude::*;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::real::Real;

const SKYF_MAGIC: &[u8; 4] = b"SKYF";
const SKYF_VERSION: u16 = 1;
const SKYF_HEADER: usize = 32;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Grid2D<T> {
    n: usize,
    dx: T,
}

impl<T: Real> Grid2D<T> {
    /// Square grid with `n` samples per side spanning `extent` meters.
    pub fn new(n: usize, extent: T) -> Result<Self> {
        if n < 16 {
            return Err(Error::Grid(format!("n = {n} is below the minimum of 16")));
        }
        if !n.is_multiple_of(2) {
            return Err(Error::Grid(format!("n = {n} must be even")));
        }
        if !(extent > T::zero()) || !extent.is_finite() {
            return Err(Error::Grid(format!("extent must be positive and finite, got {extent}")));
        }
        Ok(Self { n, dx: extent / T::from_usize_lossy(n) })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn dx(&self) -> T {
        self.dx
    }

    pub fn extent(&self) -> T {
        self.dx * T::from_usize_lossy(self.n)
    }

    pub fn len(&self) -> usize {
        self.n * self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn pixel_area(&self) -> T {
        self.dx * self.dx
    }

    /// Coordinate of sample `i` along either axis.
    #[inline]
    pub fn coord(&self, i: usize) -> T {
        (T::from_usize_lossy(i) - T::from_usize_lossy(self.n / 2)) * self.dx
    }

    pub fn coords(&self) -> Vec<T> {
        (0..self.n).map(|i| self.coord(i)).collect()
    }

    /// `(x, y)` of the flat sample index `idx`.
    #[inline]
    pub fn position(&self, idx: usize) -> (T, T) {
        (self.coord(idx % self.n), self.coord(idx / self.n))
    }

    pub fn same_as(&self, other: &Self) -> bool {
        self.n == other.n && self.dx == other.dx
    }
}

/// `LG_p^ℓ` with `p = 0`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LgMode<T> {
    pub ell: i32,
    pub p: u32,
    pub w0: T,
}

impl<T: Real> LgMode<T> {
    pub fn new(ell: i32, w0: T) -> Result<Self> {
        if !(w0 > T::zero()) || !w0.is_finite() {
            return Err(Error::InvalidArgument(format!("waist must be positive, got {w0}")));
        }
        Ok(Self { ell, p: 0, w0 })
    }

    /// Closed-form amplitude at `(x, y)`, normalized over the continuous plane.
    pub fn amplitude(&self, x: T, y: T) -> Complex<T> {
        let l = self.ell.unsigned_abs();
        let r2 = x * x + y * y;
        let w2 = self.w0 * self.w0;
        let norm = (T::lit(2.0) / (T::PI() * T::lit(factorial(l)))).sqrt() / self.w0;
        let radial = (T::lit(2.0) * r2 / w2).sqrt().powi(l as i32) * (-r2 / w2).exp();
        let phase = T::from_i32(self.ell).unwrap_or_else(T::zero) * Float::atan2(y, x);
        Complex::from_polar(norm * radial, phase)
    }
}

fn factorial(l: u32) -> f64 {
    (1..=l).map(f64::from).product()
}

/// `w0·sqrt(|ℓ| + 1)`, the radius that sets the mode's turbulence strength.
pub fn effective_radius<T: Real>(ell: i32, w0: T) -> T {
    w0 * T::from_u32(ell.unsigned_abs() + 1).unwrap_or_else(T::one).sqrt()
}

/// Checks that `mode` is well sampled by `grid`.
pub fn check_resolution<T: Real>(mode: &LgMode<T>, grid: &Grid2D<T>) -> Result<()> {
    let w = effective_radius(mode.ell, mode.w0);
    let lo = T::lit(8.0) * grid.dx();
    let hi = grid.extent() / T::lit(3.0);
    if w < lo {
        return Err(Error::Sampling(format!(
            "mode ell = {} has effective radius {w:e} m below 8 pixels ({lo:e} m)",
            mode.ell
        )));
    }
    if w > hi {
        return Err(Error::Sampling(format!(
            "mode ell = {} has effective radius {w:e} m above a third of the extent ({hi:e} m)",
            mode.ell
        )));
    }
    Ok(())
}

#[derive(Clone, Debug, PartialEq)]
pub struct ComplexField<T> {
    grid: Grid2D<T>,
    data: Vec<Complex<T>>,
}

impl<T: Real> ComplexField<T> {
    /// Wraps samples and rescales them to unit power.
    pub fn from_samples(grid: Grid2D<T>, data: Vec<Complex<T>>) -> Result<Self> {
        if data.len() != grid.len() {
            return Err(Error::GridMismatch(format!("{} samples for a {}x{} grid", data.len(), grid.n(), grid.n())));
        }
        let mut field = Self { grid, data };
        let p = field.power();
        if !(p > T::zero()) || !p.is_finite() {
            return Err(Error::InvalidArgument("field has no finite power".into()));
        }
        let s = p.sqrt().recip();
        field.data.iter_mut().for_each(|z| *z *= s);
        Ok(field)
    }

    pub(crate) fn from_raw(grid: Grid2D<T>, data: Vec<Complex<T>>) -> Self {
        debug_assert_eq!(data.len(), grid.len());
        Self { grid, data }
    }

    pub fn grid(&self) -> &Grid2D<T> {
        &self.grid
    }

    pub fn samples(&self) -> &[Complex<T>] {
        &self.data
    }

    /// `Σ|u|²·dx²`.
    pub fn power(&self) -> T {
        self.data.iter().map(|z| z.norm_sqr()).sum::<T>() * self.grid.pixel_area()
    }

    /// `⟨self|other⟩ = Σ conj(self)·other·dx²`.
    pub fn inner(&self, other: &Self) -> Result<Complex<T>> {
        if !self.grid.same_as(&other.grid) {
            return Err(Error::GridMismatch("overlap between fields on different grids".into()));
        }
        let acc =
            self.data.iter().zip(other.data.iter()).fold(Complex::zero(), |acc: Complex<T>, (a, b)| acc + a.conj() * b);
        Ok(acc * self.grid.pixel_area())
    }

    /// Linear combination `Σ cᵢ·fieldᵢ`, renormalized to unit power.
    pub fn superpose(terms: &[(Complex<T>, &Self)]) -> Result<Self> {
        let (_, first) = terms.first().ok_or(Error::Empty("superposition"))?;
        let grid = first.grid;
        let mut data = vec![Complex::zero(); grid.len()];
        for (c, f) in terms {
            if !f.grid.same_as(&grid) {
                return Err(Error::GridMismatch("superposition of fields on different grids".into()));
            }
            for (d, s) in data.iter_mut().zip(f.data.iter()) {
                *d += *s * *c;
            }
        }
        Self::from_samples(grid, data)
    }

    /// Serializes to the `SKYF` binary layout.
    pub fn write_skyf<W: Write>(&self, mut w: W) -> Result<()> {
        let mut header = [0u8; SKYF_HEADER];
        header[..4].copy_from_slice(SKYF_MAGIC);
        header[4..6].copy_from_slice(&SKYF_VERSION.to_le_bytes());
        header[6..10].copy_from_slice(&(self.grid.n() as u32).to_le_bytes());
        header[10..18].copy_from_slice(&self.grid.dx().as_f64().to_le_bytes());
        w.write_all(&header)?;
        let mut buf = Vec::with_capacity(self.data.len() * 16);
        for z in &self.data {
            buf.extend_from_slice(&z.re.as_f64().to_le_bytes());
            buf.extend_from_slice(&z.im.as_f64().to_le_bytes());
        }
        w.write_all(&buf)?;
        Ok(())
    }

    pub fn read_skyf<R: Read>(mut r: R) -> Result<Self> {
        let bad = |reason: String| Error::Format { kind: "SKYF", reason };
        let mut header = [0u8; SKYF_HEADER];
        r.read_exact(&mut header)?;
        if &header[..4] != SKYF_MAGIC {
            return Err(bad("bad magic".into()));
        }
        let version = u16::from_le_bytes([header[4], header[5]]);
        if version != SKYF_VERSION {
            return Err(bad(format!("unsupported version {version}")));
        }
        let n = u32::from_le_bytes(header[6..10].try_into().expect("slice length")) as usize;
        let dx = f64::from_le_bytes(header[10..18].try_into().expect("slice length"));
        let grid = Grid2D::new(n, T::lit(dx) * T::from_usize_lossy(n))?;
        let mut body = Vec::new();
        r.read_to_end(&mut body)?;
        if body.len() != n * n * 16 {
            return Err(bad(format!("expected {} data bytes, found {}", n * n * 16, body.len())));
        }
        let data = body
            .chunks_exact(16)
            .map(|c| {
                let re = f64::from_le_bytes(c[..8].try_into().expect("slice length"));
                let im = f64::from_le_bytes(c[8..].try_into().expect("slice length"));
                Complex::new(T::lit(re), T::lit(im))
            })
            .collect();
        Ok(Self { grid, data })
    }
}

/// Samples `mode` on `grid` and normalizes it to unit discrete power.
pub fn lg_field<T: Real>(mode: &LgMode<T>, grid: &Grid2D<T>) -> Result<ComplexField<T>> {
    check_resolution(mode, grid)?;
    let n = grid.n();
    let coords = grid.coords();
    let data: Vec<Complex<T>> =
        (0..n * n).into_par_iter().map(|idx| mode.amplitude(coords[idx % n], coords[idx / n])).collect();
    ComplexField::from_samples(*grid, data)
}

/// Power per OAM index over an inclusive range.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OamSpectrum<T> {
    pub ell_min: i32,
    pub ell_max: i32,
    /// Azimuthal power fraction per ℓ, summed over all radial orders.
    pub power: Vec<T>,
    /// `|⟨LG₀^ℓ|field⟩|²` per ℓ (radial order zero only).
    pub lg0_power: Vec<T>,
}

impl<T: Real> OamSpectrum<T> {
    pub fn ells(&self) -> impl Iterator<Item = i32> {
        self.ell_min..=self.ell_max
    }

    pub fn get(&self, ell: i32) -> Option<T> {
        if ell < self.ell_min || ell > self.ell_max {
            return None;
        }
        Some(self.power[(ell - self.ell_min) as usize])
    }

    pub fn total(&self) -> T {
        self.power.iter().copied().sum()
    }

    pub fn mean_ell(&self) -> T {
        let t = self.total();
        self.ells().zip(self.power.iter()).map(|(l, &p)| T::from_i32(l).unwrap_or_else(T::zero) * p).sum::<T>() / t
    }

    /// Variance of the ℓ distribution after renormalizing within the range.
    pub fn ell_variance(&self) -> T {
        let t = self.total();
        let m = self.mean_ell();
        self.ells()
            .zip(self.power.iter())
            .map(|(l, &p)| {
                let d = T::from_i32(l).unwrap_or_else(T::zero) - m;
                d * d * p
            })
            .sum::<T>()
            / t
    }
}

/// Decomposes `field` into OAM components `ℓ ∈ [ell_min, ell_max]`.
///
/// The field is resampled on a polar grid with bicubic interpolation out to
/// `extent/2 - 2·dx`, Fourier transformed around each ring and the azimuthal
/// powers are summed over radius. `power` is scaled so that the full azimuthal
/// sum equals the fraction of field power inside the resampled disk. The
/// radial-order-zero projections are reported alongside in `lg0_power`.
pub fn oam_spectrum<T: Real>(field: &ComplexField<T>, w0: T, ell_min: i32, ell_max: i32) -> Result<OamSpectrum<T>> {
    OamAnalyzer::new(*field.grid(), w0, ell_min, ell_max)?.analyze(field)
}

/// Reusable form of [`oam_spectrum`] with the reference modes and FFT plan
/// prepared once.
pub struct OamAnalyzer<T: Real> {
    grid: Grid2D<T>,
    ell_min: i32,
    ell_max: i32,
    modes: Vec<ComplexField<T>>,
    fft: Arc<dyn rustfft::Fft<T>>,
    angles: Vec<(T, T)>,
}

impl<T: Real> OamAnalyzer<T> {
    pub fn new(grid: Grid2D<T>, w0: T, ell_min: i32, ell_max: i32) -> Result<Self> {
        if ell_min > ell_max {
            return Err(Error::InvalidArgument(format!("empty ell range {ell_min}..={ell_max}")));
        }
        let modes =
            (ell_min..=ell_max).map(|ell| lg_field(&LgMode::new(ell, w0)?, &grid)).collect::<Result<Vec<_>>>()?;
        let nphi = ((grid.n() as f64 * 6.3).ceil() as usize).next_power_of_two();
        let fft = FftPlanner::new().plan_fft_forward(nphi);
        let angles =
            (0..nphi).map(|j| (T::TAU() * T::from_usize_lossy(j) / T::from_usize_lossy(nphi)).sin_cos()).collect();
        Ok(Self { grid, ell_min, ell_max, modes, fft, angles })
    }

    pub fn analyze(&self, field: &ComplexField<T>) -> Result<OamSpectrum<T>> {
        if !field.grid().same_as(&self.grid) {
            return Err(Error::GridMismatch("field and analyzer grids differ".into()));
        }
        let lg0_power = self.modes.iter().map(|m| m.inner(field).map(|c| c.norm_sqr())).collect::<Result<Vec<_>>>()?;
        let azimuthal = self.azimuthal_power(field);
        let nphi = azimuthal.len();
        let ring_total: T = azimuthal.iter().copied().sum();
        let total_power = field.power();
        let inside = power_inside(field, polar_radius(&self.grid));
        let scale = if ring_total > T::zero() && total_power > T::zero() {
            inside / total_power / ring_total
        } else {
            T::zero()
        };
        let power = (self.ell_min..=self.ell_max)
            .map(|ell| {
                if (ell.unsigned_abs() as usize) < nphi / 2 {
                    azimuthal[ell.rem_euclid(nphi as i32) as usize] * scale
                } else {
                    T::zero()
                }
            })
            .collect();
        Ok(OamSpectrum { ell_min: self.ell_min, ell_max: self.ell_max, power, lg0_power })
    }

    /// Radially integrated `|F_ℓ(r)|²·r·dr` per FFT bin of the azimuthal transform.
    fn azimuthal_power(&self, field: &ComplexField<T>) -> Vec<T> {
        let dr = self.grid.dx() / T::lit(2.0);
        let r_max = polar_radius(&self.grid);
        let nr = (r_max / dr).floor().to_usize().unwrap_or(0).max(1);
        let nphi = self.angles.len();
        let inv = T::from_usize_lossy(nphi).recip();
        let rings: Vec<Vec<T>> = (0..nr)
            .into_par_iter()
            .map(|ir| {
                let r = (T::from_usize_lossy(ir) + T::lit(0.5)) * dr;
                let mut ring: Vec<Complex<T>> =
                    self.angles.iter().map(|&(s, c)| bicubic(field, r * c, r * s)).collect();
                self.fft.process(&mut ring);
                let w = r * dr;
                ring.iter().map(|z| (*z * inv).norm_sqr() * w).collect()
            })
            .collect();
        let mut out = vec![T::zero(); nphi];
        for ring in rings {
            for (o, v) in out.iter_mut().zip(ring) {
                *o += v;
            }
        }
        out
    }
}

fn polar_radius<T: Real>(grid: &Grid2D<T>) -> T {
    grid.extent() / T::lit(2.0) - T::lit(2.0) * grid.dx()
}

fn power_inside<T: Real>(field: &ComplexField<T>, radius: T) -> T {
    let grid = field.grid();
    let r2 = radius * radius;
    field
        .samples()
        .iter()
        .enumerate()
        .filter(|(idx, _)| {
            let (x, y) = grid.position(*idx);
            x * x + y * y <= r2
        })
        .map(|(_, z)| z.norm_sqr())
        .sum::<T>()
        * grid.pixel_area()
}

/// Keys cubic convolution kernel, `a = -1/2`.
fn keys<T: Real>(t: T) -> T {
    let a = T::lit(-0.5);
    let t = Float::abs(t);
    let one = T::one();
    let two = T::lit(2.0);
    if t <= one {
        ((a + two) * t - (a + T::lit(3.0))) * t * t + one
    } else if t < two {
        ((t - T::lit(5.0)) * t + T::lit(8.0)) * t * a - T::lit(4.0) * a
    } else {
        T::zero()
    }
}

fn bicubic<T: Real>(field: &ComplexField<T>, x: T, y: T) -> Complex<T> {
    let grid = field.grid();
    let n = grid.n() as i64;
    let half = T::from_usize_lossy(grid.n() / 2);
    let fx = x / grid.dx() + half;
    let fy = y / grid.dx() + half;
    let ix = fx.floor();
    let iy = fy.floor();
    let tx = fx - ix;
    let ty = fy - iy;
    let ix = ix.to_i64().unwrap_or(i64::MIN);
    let iy = iy.to_i64().unwrap_or(i64::MIN);
    let wx: [T; 4] = std::array::from_fn(|k| keys(tx - T::from_i32(k as i32 - 1).unwrap_or_else(T::zero)));
    let wy: [T; 4] = std::array::from_fn(|k| keys(ty - T::from_i32(k as i32 - 1).unwrap_or_else(T::zero)));
    let data = field.samples();
    let mut acc = Complex::zero();
    for (ky, &wyk) in wy.iter().enumerate() {
        let row = iy + ky as i64 - 1;
        if row < 0 || row >= n {
            continue;
        }
        let mut line = Complex::zero();
        for (kx, &wxk) in wx.iter().enumerate() {
            let col = ix + kx as i64 - 1;
            if col < 0 || col >= n {
                continue;
            }
            line += data[(row * n + col) as usize] * wxk;
        }
        acc += line * wyk;
    }
    acc
}
