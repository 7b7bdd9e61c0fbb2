//! Phase-screen channel acting on photon B, modal crosstalk, detection
//! probabilities and the count model.

use num_complex::Complex;
use num_traits::{Float, Zero};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::Mat2;
use crate::optics::{lg_field, oam_spectrum, ComplexField, Grid2D, LgMode};
use crate::real::Real;
use crate::state::{BipartitePureState, Projector};
use crate::turbulence::PhaseScreen;

/// Pointwise `field·exp(i·phase)`.
pub fn apply_screen<T: Real>(field: &ComplexField<T>, screen: &PhaseScreen<T>) -> Result<ComplexField<T>> {
    if !field.grid().same_as(&screen.grid) {
        return Err(Error::GridMismatch("field and screen grids differ".into()));
    }
    let data =
        field.samples().iter().zip(screen.phase.iter()).map(|(z, &p)| *z * Complex::from_polar(T::one(), p)).collect();
    Ok(ComplexField::from_raw(*field.grid(), data))
}

/// `⟨LG₀^{ℓ_out}| e^{iφ} |LG₀^{ℓ_in}⟩`.
pub fn crosstalk_amplitude<T: Real>(ell_in: i32, ell_out: i32, screen: &PhaseScreen<T>, w0: T) -> Result<Complex<T>> {
    let grid = screen.grid;
    let input = lg_field(&LgMode::new(ell_in, w0)?, &grid)?;
    let output = lg_field(&LgMode::new(ell_out, w0)?, &grid)?;
    output.inner(&apply_screen(&input, screen)?)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CrosstalkMatrix<T> {
    pub ell_in: Vec<i32>,
    pub ell_out: Vec<i32>,
    /// `amplitude[i][o]` for input `ell_in[i]` and output `ell_out[o]`.
    pub amplitude: Vec<Vec<Complex<T>>>,
}

impl<T: Real> CrosstalkMatrix<T> {
    /// Captured power `Σ_out |c|²` of one input column.
    pub fn column_power(&self, input: usize) -> T {
        self.amplitude[input].iter().map(|c| c.norm_sqr()).sum()
    }

    /// Rows of `ell_in,ell_out,re,im`.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("ell_in,ell_out,re,im\n");
        for (i, li) in self.ell_in.iter().enumerate() {
            for (o, lo) in self.ell_out.iter().enumerate() {
                let c = self.amplitude[i][o];
                s.push_str(&format!("{li},{lo},{:e},{:e}\n", c.re.as_f64(), c.im.as_f64()));
            }
        }
        s
    }
}

/// Radial-order-zero crosstalk amplitudes between two inclusive ℓ ranges.
pub fn crosstalk_matrix<T: Real>(
    ell_in: (i32, i32),
    ell_out: (i32, i32),
    screen: &PhaseScreen<T>,
    w0: T,
) -> Result<CrosstalkMatrix<T>> {
    let grid = screen.grid;
    let ins: Vec<i32> = (ell_in.0..=ell_in.1).collect();
    let outs: Vec<i32> = (ell_out.0..=ell_out.1).collect();
    if ins.is_empty() || outs.is_empty() {
        return Err(Error::InvalidArgument("empty crosstalk range".into()));
    }
    let out_fields = outs.iter().map(|&l| lg_field(&LgMode::new(l, w0)?, &grid)).collect::<Result<Vec<_>>>()?;
    let mut amplitude = Vec::with_capacity(ins.len());
    for &l in &ins {
        let scattered = apply_screen(&lg_field(&LgMode::new(l, w0)?, &grid)?, screen)?;
        amplitude.push(out_fields.iter().map(|f| f.inner(&scattered)).collect::<Result<Vec<_>>>()?);
    }
    Ok(CrosstalkMatrix { ell_in: ins, ell_out: outs, amplitude })
}

/// Fraction of an `ℓ_in` beam's power that stays within
/// `ℓ_in ± window` OAM orders after the screen, all radial orders included.
pub fn captured_power<T: Real>(ell_in: i32, screen: &PhaseScreen<T>, w0: T, window: i32) -> Result<T> {
    let scattered = apply_screen(&lg_field(&LgMode::new(ell_in, w0)?, &screen.grid)?, screen)?;
    Ok(oam_spectrum(&scattered, w0, ell_in - window, ell_in + window)?.total())
}

/// `P(0) = [I₀(β) + I₁(β)]·e^{−β}` with `β = 1.8025·Ω^{5/3}`.
pub fn survival_probability_analytic<T: Real>(omega: T) -> Result<T> {
    if !(omega >= T::zero()) || !omega.is_finite() {
        return Err(Error::InvalidArgument(format!("turbulence strength must be nonnegative, got {omega}")));
    }
    let beta = 1.8025 * omega.as_f64().powf(5.0 / 3.0);
    Ok(T::lit(scaled_i0_plus_i1(beta)))
}

/// `[I₀(x) + I₁(x)]·e^{−x}` for `x ≥ 0`.
fn scaled_i0_plus_i1(x: f64) -> f64 {
    if x > 600.0 {
        // Hankel expansion; relative error below 1e-12 in this range.
        let t = 1.0 / (8.0 * x);
        let i0 = 1.0 + t + 9.0 / 2.0 * t * t + 225.0 / 6.0 * t * t * t;
        let i1 = 1.0 - 3.0 * t - 15.0 / 2.0 * t * t - 315.0 / 6.0 * t * t * t;
        return (i0 + i1) / (std::f64::consts::TAU * x).sqrt();
    }
    let q = 0.25 * x * x;
    let mut t0 = 1.0;
    let mut t1 = 0.5 * x;
    let mut s0 = t0;
    let mut s1 = t1;
    for k in 1..2000 {
        let k = k as f64;
        t0 *= q / (k * k);
        t1 *= q / (k * (k + 1.0));
        s0 += t0;
        s1 += t1;
        if t0 < 1e-17 * s0 && t1 < 1e-17 * s1 {
            break;
        }
    }
    (s0 + s1) * (-x).exp()
}

/// Photon-B transfer matrix within the qubit subspace.
///
/// `t[(q, k)] = ⟨LG_{b_q}| e^{iφ} |LG_{b_k}⟩` where `b` are photon B's OAM
/// labels; without a screen the identity is returned.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound(serialize = "T: Real + Serialize", deserialize = "T: Real + Deserialize<'de>"))]
pub struct ModeTransfer<T> {
    pub ells: [i32; 2],
    pub matrix: Mat2<T>,
}

impl<T: Real> ModeTransfer<T> {
    pub fn identity(ells: [i32; 2]) -> Self {
        Self { ells, matrix: Mat2::identity() }
    }

    pub fn from_modes(modes: &ModePair<T>, screen: &PhaseScreen<T>) -> Result<Self> {
        let scattered = [apply_screen(&modes.fields[0], screen)?, apply_screen(&modes.fields[1], screen)?];
        let mut matrix = Mat2::zeros();
        for q in 0..2 {
            for k in 0..2 {
                matrix[(q, k)] = modes.fields[q].inner(&scattered[k])?;
            }
        }
        Ok(Self { ells: modes.ells, matrix })
    }

    pub fn for_state(state: &BipartitePureState<T>, screen: Option<&PhaseScreen<T>>) -> Result<Self> {
        match screen {
            None => Ok(Self::identity(state.basis_map.b)),
            Some(s) => Self::from_modes(&ModePair::new(state.basis_map.b, state.w0, &s.grid)?, s),
        }
    }
}

/// Sampled photon-B modes of a state, reusable across screens.
#[derive(Clone, Debug)]
pub struct ModePair<T> {
    pub ells: [i32; 2],
    pub fields: [ComplexField<T>; 2],
}

impl<T: Real> ModePair<T> {
    pub fn new(ells: [i32; 2], w0: T, grid: &Grid2D<T>) -> Result<Self> {
        let f0 = lg_field(&LgMode::new(ells[0], w0)?, grid)?;
        let f1 = lg_field(&LgMode::new(ells[1], w0)?, grid)?;
        Ok(Self { ells, fields: [f0, f1] })
    }
}

/// Unnormalized post-channel amplitudes `ψ_{kq} = a_k·t_{qk}` over the
/// computational basis.
pub fn transmitted_amplitudes<T: Real>(state: &BipartitePureState<T>, transfer: &ModeTransfer<T>) -> [Complex<T>; 4] {
    let a = state.amplitudes();
    let mut out = [Complex::zero(); 4];
    for k in 0..2 {
        let ak = a[2 * k + k];
        for q in 0..2 {
            out[2 * k + q] = ak * transfer.matrix[(q, k)];
        }
    }
    out
}

pub(crate) fn probability_with_transfer<T: Real>(
    amplitudes: &[Complex<T>; 4],
    proj_a: &Projector<T>,
    proj_b: &Projector<T>,
) -> T {
    let mut overlap = Complex::zero();
    for i in 0..2 {
        for j in 0..2 {
            overlap += proj_a.vector[i].conj() * proj_b.vector[j].conj() * amplitudes[2 * i + j];
        }
    }
    Float::min(Float::max(overlap.norm_sqr(), T::zero()), T::one())
}

/// `Tr[(P_A ⊗ P_B) ρ]` for the state after photon B crosses `screen`.
pub fn projective_probability<T: Real>(
    state: &BipartitePureState<T>,
    proj_a: &Projector<T>,
    proj_b: &Projector<T>,
    screen: Option<&PhaseScreen<T>>,
) -> Result<T> {
    let tol = T::lit(1e-9).max(T::epsilon() * T::lit(16.0));
    for p in [proj_a, proj_b] {
        if p.norm_error() > tol {
            return Err(Error::InvalidArgument("projector is not normalized".into()));
        }
    }
    let transfer = ModeTransfer::for_state(state, screen)?;
    Ok(probability_with_transfer(&transmitted_amplitudes(state, &transfer), proj_a, proj_b))
}

/// Source and detector rates used to Poissonize tomography records.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CountModel<T> {
    /// Pairs per second reaching the detectors at unit projection probability.
    pub pair_rate: T,
    pub singles_rate_a: T,
    pub singles_rate_b: T,
    /// Coincidence gate τ (seconds).
    pub gate: T,
    /// Integration time per setting (seconds).
    pub integration: T,
}

impl<T: Real> Default for CountModel<T> {
    fn default() -> Self {
        Self {
            pair_rate: T::lit(1e4),
            singles_rate_a: T::lit(1e5),
            singles_rate_b: T::lit(1e5),
            gate: T::lit(2e-9),
            integration: T::one(),
        }
    }
}

impl<T: Real> CountModel<T> {
    pub fn validate(&self) -> Result<()> {
        let rates = [self.pair_rate, self.singles_rate_a, self.singles_rate_b];
        if rates.iter().any(|&r| !(r >= T::zero()) || !r.is_finite()) {
            return Err(Error::InvalidArgument("count rates must be nonnegative".into()));
        }
        if !(self.gate > T::zero()) || !(self.integration > T::zero()) {
            return Err(Error::InvalidArgument("gate and integration time must be positive".into()));
        }
        Ok(())
    }

    /// Expected accidental coincidences per setting, `τ·S_A·S_B·T`.
    pub fn accidentals(&self) -> T {
        self.gate * self.singles_rate_a * self.singles_rate_b * self.integration
    }

    /// Expected coincidences for a projection probability `p`.
    pub fn expected_coincidences(&self, p: T) -> T {
        self.pair_rate * self.integration * p + self.accidentals()
    }
}

/// `QC = (C/T)/(τ·S_A·S_B)`.
pub fn quantum_contrast<T: Real>(model: &CountModel<T>, coincidences: T) -> Result<T> {
    model.validate()?;
    if !(model.singles_rate_a > T::zero()) || !(model.singles_rate_b > T::zero()) {
        return Err(Error::InvalidArgument("quantum contrast is undefined for zero singles".into()));
    }
    Ok(coincidences / model.integration / (model.gate * model.singles_rate_a * model.singles_rate_b))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::state::{make_state, ProjectorLabel};

    #[test]
    fn bessel_values() {
        assert_eq!(survival_probability_analytic(0.0_f64).unwrap(), 1.0);
        assert!((survival_probability_analytic(1.0_f64).unwrap() - 0.546).abs() < 1e-3);
        let p2 = survival_probability_analytic(2.0_f64).unwrap();
        assert!((p2 - 0.326).abs() < 2e-3);
        assert!(survival_probability_analytic(-1.0_f64).is_err());
    }

    #[test]
    fn hankel_branch_is_continuous() {
        // The product with sqrt(x) is flat to first order across the switch.
        let below = scaled_i0_plus_i1(599.999) * 599.999f64.sqrt();
        let above = scaled_i0_plus_i1(600.001) * 600.001f64.sqrt();
        assert!((below - above).abs() / below < 1e-8);
    }

    #[test]
    fn contrast_arithmetic() {
        let m = CountModel::<f64>::default();
        assert!((quantum_contrast(&m, 100.0).unwrap() - 5.0).abs() < 1e-12);
        assert!((quantum_contrast(&m, m.accidentals()).unwrap() - 1.0).abs() < 1e-12);
        let z = CountModel { singles_rate_a: 0.0, ..m };
        assert!(quantum_contrast(&z, 1.0).is_err());
    }

    #[test]
    fn bell_statistics_without_screen() {
        let s = make_state(0, 1, 0.0_f64).unwrap();
        let z0 = Projector::from_label(ProjectorLabel::Z0);
        let plus = Projector::from_label(ProjectorLabel::S0);
        let minus = Projector::from_label(ProjectorLabel::S180);
        assert!((projective_probability(&s, &z0, &z0, None).unwrap() - 0.5).abs() < 1e-15);
        assert!(projective_probability(&s, &plus, &minus, None).unwrap() < 1e-15);
        let bad = Projector::custom([Complex::new(1.0, 0.0), Complex::new(1.0, 0.0)]);
        assert!(projective_probability(&s, &bad, &z0, None).is_err());
    }
}
