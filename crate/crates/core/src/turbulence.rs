//! Kolmogorov phase screens by the Fourier method with subharmonic
//! compensation.
//!
//! Spatial frequencies are in cycles per meter. The FFT base screen draws one
//! circular Gaussian coefficient per frequency cell; the cells nearest DC and
//! all subharmonic cells use the PSD averaged over the cell area (weighted the
//! same way the structure function weights it) instead of the value at the
//! cell center. The innermost subharmonic level also absorbs the power of the
//! remaining unresolved center region, which for a `-11/3` law is a geometric
//! series in `3^{-1/3}`.

use std::io::{Read, Write};
use std::sync::OnceLock;

use num_complex::Complex;
use num_traits::Zero;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, StandardNormal};
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::optics::{effective_radius, Grid2D};
use crate::real::Real;

/// Kolmogorov PSD prefactor.
pub const KOLMOGOROV_PREFACTOR: f64 = 0.023;

/// Coefficient of the `(r/r0)^{5/3}` structure function.
pub const STRUCTURE_COEFFICIENT: f64 = 6.88;

/// Default number of subharmonic levels.
pub const DEFAULT_SUBHARMONICS: u32 = 5;

const SKYP_MAGIC: &[u8; 4] = b"SKYP";
const SKYP_VERSION: u16 = 1;
const SKYP_HEADER: usize = 36;

/// FFT cells with `|a|, |b| <= MOMENT_RING` get cell-averaged variances.
const MOMENT_RING: i32 = 3;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TurbulenceSpec<T> {
    pub r0: T,
    pub grid: Grid2D<T>,
    pub n_subharmonics: u32,
    pub seed: u64,
}

impl<T: Real> TurbulenceSpec<T> {
    pub fn new(r0: T, grid: Grid2D<T>, seed: u64) -> Self {
        Self { r0, grid, n_subharmonics: DEFAULT_SUBHARMONICS, seed }
    }

    pub fn with_subharmonics(mut self, n: u32) -> Self {
        self.n_subharmonics = n;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    /// True when the two specs differ at most in their seeds.
    pub fn same_statistics(&self, other: &Self) -> bool {
        self.r0 == other.r0 && self.grid.same_as(&other.grid) && self.n_subharmonics == other.n_subharmonics
    }

    fn validate(&self) -> Result<()> {
        if !(self.r0 > T::zero()) || !self.r0.is_finite() {
            return Err(Error::InvalidArgument(format!("r0 must be positive, got {}", self.r0)));
        }
        if self.r0 < T::lit(2.0) * self.grid.dx() {
            return Err(Error::Sampling(format!(
                "r0 = {:e} m is below two pixels ({:e} m)",
                self.r0,
                T::lit(2.0) * self.grid.dx()
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PhaseScreen<T> {
    pub grid: Grid2D<T>,
    pub phase: Vec<T>,
    /// `None` for screens that were not synthesized (identity or loaded).
    pub spec: Option<TurbulenceSpec<T>>,
}

impl<T: Real> PhaseScreen<T> {
    /// The identity channel.
    pub fn zero(grid: Grid2D<T>) -> Self {
        Self { grid, phase: vec![T::zero(); grid.len()], spec: None }
    }

    pub fn from_phase(grid: Grid2D<T>, phase: Vec<T>) -> Result<Self> {
        if phase.len() != grid.len() {
            return Err(Error::GridMismatch(format!("{} phase samples for {} pixels", phase.len(), grid.len())));
        }
        if phase.iter().any(|p| !p.is_finite()) {
            return Err(Error::InvalidArgument("phase screen has non-finite samples".into()));
        }
        Ok(Self { grid, phase, spec: None })
    }

    pub fn offset(&self, c: T) -> Self {
        Self { grid: self.grid, phase: self.phase.iter().map(|&p| p + c).collect(), spec: self.spec }
    }

    pub fn mean(&self) -> T {
        self.phase.iter().copied().sum::<T>() / T::from_usize_lossy(self.phase.len())
    }

    /// SHA-256 of the `SKYP` encoding, hex encoded.
    pub fn hash(&self) -> String {
        let mut buf = Vec::new();
        self.write_skyp(&mut buf).expect("writing to a Vec cannot fail");
        hex::encode(Sha256::digest(&buf))
    }

    pub fn write_skyp<W: Write>(&self, mut w: W) -> Result<()> {
        let (r0, seed, nsh) = match &self.spec {
            Some(s) => (s.r0.as_f64(), s.seed, s.n_subharmonics),
            None => (f64::INFINITY, 0, 0),
        };
        let mut header = Vec::with_capacity(SKYP_HEADER);
        header.extend_from_slice(SKYP_MAGIC);
        header.extend_from_slice(&SKYP_VERSION.to_le_bytes());
        header.extend_from_slice(&(self.grid.n() as u32).to_le_bytes());
        header.extend_from_slice(&self.grid.dx().as_f64().to_le_bytes());
        header.extend_from_slice(&r0.to_le_bytes());
        header.extend_from_slice(&seed.to_le_bytes());
        header.extend_from_slice(&(nsh.min(u16::MAX as u32) as u16).to_le_bytes());
        debug_assert_eq!(header.len(), SKYP_HEADER);
        w.write_all(&header)?;
        let mut body = Vec::with_capacity(self.phase.len() * 8);
        for p in &self.phase {
            body.extend_from_slice(&p.as_f64().to_le_bytes());
        }
        w.write_all(&body)?;
        Ok(())
    }

    pub fn read_skyp<R: Read>(mut r: R) -> Result<Self> {
        let bad = |reason: String| Error::Format { kind: "SKYP", reason };
        let mut h = [0u8; SKYP_HEADER];
        r.read_exact(&mut h)?;
        if &h[..4] != SKYP_MAGIC {
            return Err(bad("bad magic".into()));
        }
        let version = u16::from_le_bytes([h[4], h[5]]);
        if version != SKYP_VERSION {
            return Err(bad(format!("unsupported version {version}")));
        }
        let le8 = |s: &[u8]| -> [u8; 8] { s.try_into().expect("slice length") };
        let n = u32::from_le_bytes(h[6..10].try_into().expect("slice length")) as usize;
        let dx = f64::from_le_bytes(le8(&h[10..18]));
        let r0 = f64::from_le_bytes(le8(&h[18..26]));
        let seed = u64::from_le_bytes(le8(&h[26..34]));
        let nsh = u16::from_le_bytes([h[34], h[35]]);
        let grid = Grid2D::new(n, T::lit(dx) * T::from_usize_lossy(n))?;
        let mut body = Vec::new();
        r.read_to_end(&mut body)?;
        if body.len() != n * n * 8 {
            return Err(bad(format!("expected {} data bytes, found {}", n * n * 8, body.len())));
        }
        let phase = body.chunks_exact(8).map(|c| T::lit(f64::from_le_bytes(le8(c)))).collect();
        let spec =
            r0.is_finite().then(|| TurbulenceSpec { r0: T::lit(r0), grid, n_subharmonics: u32::from(nsh), seed });
        Ok(Self { grid, phase, spec })
    }
}

/// `r0 = 2·w0·sqrt(|ℓ|+1)/Ω`.
pub fn omega_to_fried<T: Real>(omega: T, ell: i32, w0: T) -> Result<T> {
    if !(omega > T::zero()) || !omega.is_finite() {
        return Err(Error::InvalidArgument(format!("turbulence strength must be positive, got {omega}")));
    }
    Ok(T::lit(2.0) * effective_radius(ell, w0) / omega)
}

/// `Φ(f) = 0.023·r0^{-5/3}·f^{-11/3}` with `f` in cycles per meter.
pub fn kolmogorov_psd<T: Real>(f: T, r0: T) -> Result<T> {
    if !(f > T::zero()) {
        return Err(Error::InvalidArgument(format!("spatial frequency must be positive, got {f}")));
    }
    if !(r0 > T::zero()) {
        return Err(Error::InvalidArgument(format!("r0 must be positive, got {r0}")));
    }
    Ok(psd_unchecked(f, r0))
}

#[inline]
fn psd_unchecked<T: Real>(f: T, r0: T) -> T {
    T::lit(KOLMOGOROV_PREFACTOR) * r0.powf(T::lit(-5.0 / 3.0)) * f.powf(T::lit(-11.0 / 3.0))
}

/// `m(a, b)·(a² + b²)^{5/6}` where `m` is the integral of `|u|^{-5/3}` over
/// the unit cell centered at `(a, b)`; indexed by `(a + 3, b + 3)`.
fn moment_factors() -> &'static [[f64; 7]; 7] {
    static TABLE: OnceLock<[[f64; 7]; 7]> = OnceLock::new();
    TABLE.get_or_init(|| {
        const M: usize = 64;
        let mut t = [[1.0; 7]; 7];
        for a in -MOMENT_RING..=MOMENT_RING {
            for b in -MOMENT_RING..=MOMENT_RING {
                if a == 0 && b == 0 {
                    continue;
                }
                let mut acc = 0.0;
                for i in 0..M {
                    let u = f64::from(a) + (i as f64 + 0.5) / M as f64 - 0.5;
                    for j in 0..M {
                        let v = f64::from(b) + (j as f64 + 0.5) / M as f64 - 0.5;
                        acc += (u * u + v * v).powf(-5.0 / 6.0);
                    }
                }
                let m = acc / (M * M) as f64;
                t[(a + 3) as usize][(b + 3) as usize] = m * f64::from(a * a + b * b).powf(5.0 / 6.0);
            }
        }
        t
    })
}

fn moment_factor(a: i32, b: i32) -> f64 {
    if a.abs() <= MOMENT_RING && b.abs() <= MOMENT_RING {
        moment_factors()[(a + 3) as usize][(b + 3) as usize]
    } else {
        1.0
    }
}

/// Signed FFT index.
#[inline]
fn signed_index(k: usize, n: usize) -> i32 {
    if k < n / 2 {
        k as i32
    } else {
        k as i32 - n as i32
    }
}

/// Synthesizes one screen. The RNG stream is ChaCha20 seeded from
/// `spec.seed`; FFT coefficients are drawn first in row-major order over FFT
/// indices, then subharmonic levels `1..=n` with cells ordered by `a` then
/// `b` in `{-1, 0, 1}`.
pub fn generate_screen<T: Real>(spec: &TurbulenceSpec<T>) -> Result<PhaseScreen<T>> {
    spec.validate()?;
    let grid = spec.grid;
    let n = grid.n();
    let extent = grid.extent().as_f64();
    let r0 = spec.r0.as_f64();
    let df = 1.0 / extent;
    let mut rng = ChaCha20Rng::seed_from_u64(spec.seed);
    let mut normal = || -> f64 { StandardNormal.sample(&mut rng) };

    let mut spectrum: Vec<Complex<T>> = Vec::with_capacity(n * n);
    for v in 0..n {
        let b = signed_index(v, n);
        for u in 0..n {
            let a = signed_index(u, n);
            let (re, im) = (normal(), normal());
            if a == 0 && b == 0 {
                spectrum.push(Complex::zero());
                continue;
            }
            let f = df * f64::from(a * a + b * b).sqrt();
            let var = psd_unchecked(f, r0) * df * df * moment_factor(a, b);
            let sd = var.sqrt();
            let sign = if (u + v) % 2 == 0 { 1.0 } else { -1.0 };
            spectrum.push(Complex::new(T::lit(re * sd * sign), T::lit(im * sd * sign)));
        }
    }
    let fft = FftPlanner::new().plan_fft_inverse(n);
    for row in spectrum.chunks_exact_mut(n) {
        fft.process(row);
    }
    transpose(&mut spectrum, n);
    for col in spectrum.chunks_exact_mut(n) {
        fft.process(col);
    }
    transpose(&mut spectrum, n);
    let mut phase: Vec<f64> = spectrum.iter().map(|z| z.re.as_f64()).collect();

    let fold = 1.0 / (1.0 - 3f64.powf(-1.0 / 3.0));
    let coords: Vec<f64> = grid.coords().iter().map(|c| c.as_f64()).collect();
    for level in 1..=spec.n_subharmonics {
        let d = df / 3f64.powi(level as i32);
        for a in -1i32..=1 {
            for b in -1i32..=1 {
                if a == 0 && b == 0 {
                    continue;
                }
                let (re, im) = (normal(), normal());
                let f = d * f64::from(a * a + b * b).sqrt();
                let mut var = psd_unchecked(f, r0) * d * d * moment_factor(a, b);
                if level == spec.n_subharmonics {
                    var *= fold;
                }
                let c = Complex::new(re, im) * var.sqrt();
                let tau = std::f64::consts::TAU;
                let ex: Vec<Complex<f64>> =
                    coords.iter().map(|&x| Complex::from_polar(1.0, tau * f64::from(a) * d * x)).collect();
                for (iy, &y) in coords.iter().enumerate() {
                    let ey = c * Complex::from_polar(1.0, tau * f64::from(b) * d * y);
                    for (p, e) in phase[iy * n..(iy + 1) * n].iter_mut().zip(ex.iter()) {
                        *p += (ey * e).re;
                    }
                }
            }
        }
    }
    let mean = phase.iter().sum::<f64>() / phase.len() as f64;
    let phase = phase.into_iter().map(|p| T::lit(p - mean)).collect();
    Ok(PhaseScreen { grid, phase, spec: Some(*spec) })
}

fn transpose<T: Copy>(data: &mut [T], n: usize) {
    for i in 0..n {
        for j in i + 1..n {
            data.swap(i * n + j, j * n + i);
        }
    }
}

/// Isotropic empirical structure function `⟨[φ(x+r) − φ(x)]²⟩`, averaged over
/// both axes, all pixel pairs and all screens. Separations are rounded to the
/// nearest whole pixel.
pub fn structure_function<T: Real>(screens: &[PhaseScreen<T>], separations: &[T]) -> Result<Vec<T>> {
    const MIN_SCREENS: usize = 50;
    if screens.len() < MIN_SCREENS {
        return Err(Error::InvalidArgument(format!(
            "structure function needs at least {MIN_SCREENS} screens, got {}",
            screens.len()
        )));
    }
    let first = &screens[0];
    for s in &screens[1..] {
        let same = match (&first.spec, &s.spec) {
            (Some(a), Some(b)) => a.same_statistics(b),
            (None, None) => first.grid.same_as(&s.grid),
            _ => false,
        };
        if !same {
            return Err(Error::InvalidArgument("screens with different specs cannot be pooled".into()));
        }
    }
    let grid = first.grid;
    let n = grid.n();
    let mut out = Vec::with_capacity(separations.len());
    for &r in separations {
        let s = (r / grid.dx()).round().to_usize().unwrap_or(0);
        if s == 0 || s >= n {
            return Err(Error::InvalidArgument(format!("separation {r:e} m is outside the grid")));
        }
        let mut acc = 0.0f64;
        for screen in screens {
            let p = &screen.phase;
            let mut sx = 0.0f64;
            let mut sy = 0.0f64;
            for row in 0..n {
                for col in 0..n - s {
                    let d = (p[row * n + col + s] - p[row * n + col]).as_f64();
                    sx += d * d;
                }
            }
            for row in 0..n - s {
                for col in 0..n {
                    let d = (p[(row + s) * n + col] - p[row * n + col]).as_f64();
                    sy += d * d;
                }
            }
            acc += 0.5 * (sx + sy) / (n * (n - s)) as f64;
        }
        out.push(T::lit(acc / screens.len() as f64));
    }
    Ok(out)
}

/// `6.88·(r/r0)^{5/3}`.
pub fn kolmogorov_structure<T: Real>(r: T, r0: T) -> T {
    T::lit(STRUCTURE_COEFFICIENT) * (r / r0).powf(T::lit(5.0 / 3.0))
}
