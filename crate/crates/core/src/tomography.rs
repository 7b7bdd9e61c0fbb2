//! Simulated projective tomography and density-matrix reconstruction.
//!
//! The fit model is `ρ = ¼ Σ r_{μν} σ_μ ⊗ σ_ν` with `r₀₀ = 1`, which makes
//! every setting probability linear in the remaining coefficients. The
//! linear least-squares estimate is returned when it is already positive
//! semidefinite; otherwise the record is refit with `ρ = G²/Tr(G²)` for
//! Hermitian `G` by Levenberg-Marquardt from several starts.

use num_complex::Complex;
use num_traits::Float;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, Poisson, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::channel::{probability_with_transfer, transmitted_amplitudes, CountModel, ModeTransfer};
use crate::error::{Error, Result};
use crate::linalg::{pauli, solve_spd, Mat4};
use crate::real::Real;
use crate::state::{tomography_set, BipartitePureState, DensityMatrix4, Projector, ProjectorLabel};
use crate::turbulence::PhaseScreen;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CountSample {
    pub coincidences: u64,
    pub singles_a: u64,
    pub singles_b: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TomographyEntry<T> {
    pub proj_a: ProjectorLabel,
    pub proj_b: ProjectorLabel,
    pub probability: T,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub counts: Option<CountSample>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub state_id: String,
    pub omega: f64,
    pub seed: Option<u64>,
    pub screen_hash: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TomographyRecord<T> {
    pub entries: Vec<TomographyEntry<T>>,
    pub provenance: Provenance,
}

impl<T: Real> TomographyRecord<T> {
    /// Record of exact probabilities `Tr[(P_a ⊗ P_b) ρ]`.
    pub fn from_density(rho: &DensityMatrix4<T>, provenance: Provenance) -> Self {
        let entries = tomography_set::<T>()
            .into_iter()
            .map(|(a, b)| {
                let m = a.matrix().kron(&b.matrix());
                TomographyEntry {
                    proj_a: a.label.expect("labelled projector"),
                    proj_b: b.label.expect("labelled projector"),
                    probability: clamp01(m.trace_product(rho.matrix()).re),
                    counts: None,
                }
            })
            .collect();
        Self { entries, provenance }
    }

    pub fn total_probability(&self) -> T {
        self.entries.iter().map(|e| e.probability).sum()
    }

    /// Mean quantum contrast over the entries that carry counts.
    pub fn mean_quantum_contrast(&self, model: &CountModel<T>) -> Option<T> {
        let qcs: Vec<T> = self
            .entries
            .iter()
            .filter_map(|e| e.counts)
            .filter(|c| c.singles_a > 0 && c.singles_b > 0)
            .map(|c| {
                let t = model.integration;
                let sa = T::lit(c.singles_a as f64) / t;
                let sb = T::lit(c.singles_b as f64) / t;
                T::lit(c.coincidences as f64) / t / (model.gate * sa * sb)
            })
            .collect();
        (!qcs.is_empty()).then(|| qcs.iter().copied().sum::<T>() / T::from_usize_lossy(qcs.len()))
    }
}

fn clamp01<T: Real>(p: T) -> T {
    Float::min(Float::max(p, T::zero()), T::one())
}

/// Measures all 36 settings with one screen on photon B.
///
/// With a count model each coincidence count is Poisson with mean
/// `N·T·p + τ·S_A·S_B·T` and singles are Poisson with mean `S·T`; the stored
/// probability is the accidental-subtracted rate over `N·T`.
pub fn simulate_tomography<T: Real>(
    state: &BipartitePureState<T>,
    screen: Option<&PhaseScreen<T>>,
    counts: Option<(&CountModel<T>, u64)>,
) -> Result<TomographyRecord<T>> {
    let transfer = ModeTransfer::for_state(state, screen)?;
    let mut record = simulate_with_transfer(state, &transfer, counts)?;
    record.provenance.screen_hash = screen.map(|s| s.hash());
    record.provenance.seed = screen.and_then(|s| s.spec.map(|sp| sp.seed));
    record.provenance.omega =
        screen.and_then(|s| s.spec).map(|sp| (T::lit(2.0) * state.w0 / sp.r0).as_f64()).unwrap_or(0.0);
    Ok(record)
}

/// As [`simulate_tomography`] with a precomputed photon-B transfer matrix.
pub fn simulate_with_transfer<T: Real>(
    state: &BipartitePureState<T>,
    transfer: &ModeTransfer<T>,
    counts: Option<(&CountModel<T>, u64)>,
) -> Result<TomographyRecord<T>> {
    if transfer.ells != state.basis_map.b {
        return Err(Error::InvalidArgument("transfer matrix does not match the state's photon-B modes".into()));
    }
    let amps = transmitted_amplitudes(state, transfer);
    if let Some((m, _)) = counts {
        m.validate()?;
    }
    let mut rng = counts.map(|(m, seed)| (m, ChaCha20Rng::seed_from_u64(seed)));
    let mut entries = Vec::with_capacity(36);
    for (a, b) in tomography_set::<T>() {
        let p = probability_with_transfer(&amps, &a, &b);
        let (probability, sample) = match rng.as_mut() {
            None => (p, None),
            Some((model, rng)) => {
                let sample = draw_counts(model, p, rng);
                let signal = T::lit(sample.coincidences as f64) - model.accidentals();
                let denom = model.pair_rate * model.integration;
                let est = if denom > T::zero() { clamp01(signal / denom) } else { T::zero() };
                (est, Some(sample))
            }
        };
        entries.push(TomographyEntry {
            proj_a: a.label.expect("labelled projector"),
            proj_b: b.label.expect("labelled projector"),
            probability,
            counts: sample,
        });
    }
    Ok(TomographyRecord { entries, provenance: Provenance { state_id: state.id.clone(), ..Provenance::default() } })
}

fn poisson<R: Rng>(mean: f64, rng: &mut R) -> u64 {
    if !(mean > 0.0) {
        return 0;
    }
    let d = Poisson::new(mean).expect("positive finite mean");
    d.sample(rng) as u64
}

fn draw_counts<T: Real, R: Rng>(model: &CountModel<T>, p: T, rng: &mut R) -> CountSample {
    let t = model.integration.as_f64();
    let coincidences = poisson(model.expected_coincidences(p).as_f64(), rng);
    let singles_a = poisson(model.singles_rate_a.as_f64() * t, rng);
    let singles_b = poisson(model.singles_rate_b.as_f64() * t, rng);
    CountSample { coincidences, singles_a, singles_b }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FitModel {
    /// Local Bloch terms and correlations (15 parameters).
    #[default]
    Full,
    /// Correlation coefficients only (9 parameters).
    Correlations,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReconstructionOptions {
    pub model: FitModel,
    pub restarts: usize,
    pub max_iterations: usize,
    pub seed: u64,
}

impl Default for ReconstructionOptions {
    fn default() -> Self {
        Self { model: FitModel::Full, restarts: 8, max_iterations: 400, seed: 0x5eed_0f70 }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FitMethod {
    Linear,
    Constrained,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound(serialize = "T: Real + Serialize", deserialize = "T: Real + Deserialize<'de>"))]
pub struct Reconstruction<T> {
    pub rho: DensityMatrix4<T>,
    /// Summed probability over the 36 settings divided by 9, i.e. the
    /// detected fraction inside the qubit subspace.
    pub renormalization: T,
    /// `Σ (p_model − p_measured)²` on the renormalized record.
    pub residual: T,
    pub method: FitMethod,
    pub converged: bool,
}

pub fn reconstruct_density<T: Real>(record: &TomographyRecord<T>) -> Result<Reconstruction<T>> {
    reconstruct_density_with(record, &ReconstructionOptions::default())
}

pub fn reconstruct_density_with<T: Real>(
    record: &TomographyRecord<T>,
    options: &ReconstructionOptions,
) -> Result<Reconstruction<T>> {
    let settings = settings_of(record)?;
    let total: f64 = record.entries.iter().map(|e| e.probability.as_f64()).sum();
    if !(total > 0.0) {
        return Err(Error::InvalidArgument("tomography record has no detected probability".into()));
    }
    let renorm = total / 9.0;
    let measured: Vec<f64> = record.entries.iter().map(|e| e.probability.as_f64() / renorm).collect();

    let params = linear_fit(&settings, &measured, options.model)?;
    let linear = pauli_density(&params, options.model);
    let min_eig = linear.hermitian_eigen().values[0];
    let tol = T::validity_tol().as_f64();
    let (matrix, method, converged) = if min_eig >= -tol {
        (linear, FitMethod::Linear, true)
    } else {
        let fit = constrained_fit(&settings, &measured, &linear, options);
        (fit.0, FitMethod::Constrained, fit.1)
    };
    let residual = residual_of(&settings, &measured, &matrix);
    let m_t = Mat4::<T>::from_fn(|i, j| Complex::new(T::lit(matrix[(i, j)].re), T::lit(matrix[(i, j)].im)));
    let rho = DensityMatrix4::project(&m_t)?;
    Ok(Reconstruction { rho, renormalization: T::lit(renorm), residual: T::lit(residual), method, converged })
}

struct Setting {
    /// Bloch vectors of photon A's and photon B's projectors.
    a: [f64; 3],
    b: [f64; 3],
    operator: Mat4<f64>,
}

fn settings_of<T: Real>(record: &TomographyRecord<T>) -> Result<Vec<Setting>> {
    if record.entries.len() != 36 {
        return Err(Error::InvalidArgument(format!(
            "tomography record needs 36 entries, found {}",
            record.entries.len()
        )));
    }
    record
        .entries
        .iter()
        .map(|e| {
            if !e.probability.is_finite() || e.probability < T::zero() {
                return Err(Error::InvalidArgument("tomography probabilities must be nonnegative".into()));
            }
            let pa = Projector::<f64>::from_label(e.proj_a);
            let pb = Projector::<f64>::from_label(e.proj_b);
            Ok(Setting { a: pa.bloch(), b: pb.bloch(), operator: pa.matrix().kron(&pb.matrix()) })
        })
        .collect()
}

/// Design row: the coefficients of the free parameters in `4·p − 1`.
fn design_row(s: &Setting, model: FitModel) -> Vec<f64> {
    let mut row = Vec::with_capacity(15);
    if model == FitModel::Full {
        row.extend_from_slice(&s.a);
        row.extend_from_slice(&s.b);
    }
    for i in 0..3 {
        for j in 0..3 {
            row.push(s.a[i] * s.b[j]);
        }
    }
    row
}

fn linear_fit(settings: &[Setting], measured: &[f64], model: FitModel) -> Result<Vec<f64>> {
    let rows: Vec<Vec<f64>> = settings.iter().map(|s| design_row(s, model)).collect();
    let k = rows[0].len();
    let mut ata = vec![vec![0.0; k]; k];
    let mut atb = vec![0.0; k];
    for (row, &p) in rows.iter().zip(measured) {
        let y = 4.0 * p - 1.0;
        for i in 0..k {
            atb[i] += row[i] * y;
            for j in 0..k {
                ata[i][j] += row[i] * row[j];
            }
        }
    }
    solve_spd(&ata, &atb)
        .ok_or_else(|| Error::InvalidArgument("measurement set is not tomographically complete".into()))
}

fn pauli_density(params: &[f64], model: FitModel) -> Mat4<f64> {
    let p = pauli::<f64>();
    let mut m = p[0].kron(&p[0]);
    let mut it = params.iter();
    if model == FitModel::Full {
        for i in 1..4 {
            m = m + p[i].kron(&p[0]).scale_real(*it.next().expect("parameter"));
        }
        for j in 1..4 {
            m = m + p[0].kron(&p[j]).scale_real(*it.next().expect("parameter"));
        }
    }
    for i in 1..4 {
        for j in 1..4 {
            m = m + p[i].kron(&p[j]).scale_real(*it.next().expect("parameter"));
        }
    }
    m.scale_real(0.25).hermitian_part()
}

fn residual_of(settings: &[Setting], measured: &[f64], rho: &Mat4<f64>) -> f64 {
    settings
        .iter()
        .zip(measured)
        .map(|(s, &p)| {
            let d = s.operator.trace_product(rho).re - p;
            d * d
        })
        .sum()
}

/// Hermitian basis: diagonal units, then `E_ij + E_ji` and `i(E_ji − E_ij)`
/// for `i < j`.
fn hermitian_basis() -> Vec<Mat4<f64>> {
    let mut out = Vec::with_capacity(16);
    for i in 0..4 {
        let mut m = Mat4::zeros();
        m[(i, i)] = Complex::new(1.0, 0.0);
        out.push(m);
    }
    for i in 0..4 {
        for j in i + 1..4 {
            let mut s = Mat4::zeros();
            s[(i, j)] = Complex::new(1.0, 0.0);
            s[(j, i)] = Complex::new(1.0, 0.0);
            out.push(s);
            let mut a = Mat4::zeros();
            a[(i, j)] = Complex::new(0.0, -1.0);
            a[(j, i)] = Complex::new(0.0, 1.0);
            out.push(a);
        }
    }
    out
}

fn from_params(basis: &[Mat4<f64>], g: &[f64]) -> Mat4<f64> {
    basis.iter().zip(g).fold(Mat4::zeros(), |acc, (b, &x)| acc + b.scale_real(x))
}

fn to_params(m: &Mat4<f64>) -> Vec<f64> {
    let mut out = Vec::with_capacity(16);
    for i in 0..4 {
        out.push(m[(i, i)].re);
    }
    for i in 0..4 {
        for j in i + 1..4 {
            out.push(m[(i, j)].re);
            out.push(-m[(i, j)].im);
        }
    }
    out
}

/// Residuals `Tr(M G²)/Tr(G²) − p` and their Jacobian in `g`.
fn residuals_and_jacobian(
    settings: &[Setting],
    measured: &[f64],
    basis: &[Mat4<f64>],
    g: &[f64],
) -> (Vec<f64>, Vec<Vec<f64>>) {
    let gm = from_params(basis, g);
    let g2 = gm * gm;
    let norm = g2.trace().re;
    let dnorm: Vec<f64> = basis.iter().map(|e| 2.0 * e.trace_product(&gm).re).collect();
    let mut res = Vec::with_capacity(settings.len());
    let mut jac = Vec::with_capacity(settings.len());
    for (s, &p) in settings.iter().zip(measured) {
        let num = s.operator.trace_product(&g2).re;
        res.push(num / norm - p);
        let mg = s.operator * gm;
        let row = basis
            .iter()
            .zip(&dnorm)
            .map(|(e, &dn)| {
                let dnum = 2.0 * mg.trace_product(e).re;
                (dnum * norm - num * dn) / (norm * norm)
            })
            .collect();
        jac.push(row);
    }
    (res, jac)
}

fn levenberg_marquardt(
    settings: &[Setting],
    measured: &[f64],
    basis: &[Mat4<f64>],
    start: Vec<f64>,
    max_iterations: usize,
) -> (Vec<f64>, f64, bool) {
    let cost = |r: &[f64]| r.iter().map(|x| x * x).sum::<f64>();
    let mut g = start;
    let (mut r, mut j) = residuals_and_jacobian(settings, measured, basis, &g);
    let mut c = cost(&r);
    let mut lambda = 1e-3;
    let k = g.len();
    for _ in 0..max_iterations {
        let mut jtj = vec![vec![0.0; k]; k];
        let mut jtr = vec![0.0; k];
        for (row, &ri) in j.iter().zip(&r) {
            for a in 0..k {
                jtr[a] += row[a] * ri;
                for b in 0..k {
                    jtj[a][b] += row[a] * row[b];
                }
            }
        }
        let grad = jtr.iter().map(|x| x * x).sum::<f64>().sqrt();
        if grad < 1e-14 || c < 1e-28 {
            return (g, c, true);
        }
        let mut accepted = false;
        for _ in 0..30 {
            let mut a = jtj.clone();
            for d in 0..k {
                a[d][d] += lambda * (1.0 + jtj[d][d]);
            }
            let rhs: Vec<f64> = jtr.iter().map(|x| -x).collect();
            let Some(step) = solve_spd(&a, &rhs) else {
                lambda *= 10.0;
                continue;
            };
            let trial: Vec<f64> = g.iter().zip(&step).map(|(x, s)| x + s).collect();
            let (tr, tj) = residuals_and_jacobian(settings, measured, basis, &trial);
            let tc = cost(&tr);
            if tc.is_finite() && tc < c {
                let rel = (c - tc) / c.max(1e-300);
                let step_norm = step.iter().map(|x| x * x).sum::<f64>().sqrt();
                let g_norm = g.iter().map(|x| x * x).sum::<f64>().sqrt();
                g = trial;
                r = tr;
                j = tj;
                c = tc;
                lambda = (lambda * 0.3).max(1e-12);
                accepted = true;
                if rel < 1e-12 || step_norm < 1e-12 * g_norm.max(1.0) {
                    return (g, c, true);
                }
                break;
            }
            lambda *= 10.0;
        }
        if !accepted {
            return (g, c, lambda > 1e10);
        }
    }
    (g, c, false)
}

fn constrained_fit(
    settings: &[Setting],
    measured: &[f64],
    linear: &Mat4<f64>,
    options: &ReconstructionOptions,
) -> (Mat4<f64>, bool) {
    let basis = hermitian_basis();
    let mut starts = vec![to_params(&linear.psd_sqrt())];
    let mut rng = ChaCha20Rng::seed_from_u64(options.seed);
    for _ in 0..options.restarts {
        starts.push((0..16).map(|_| StandardNormal.sample(&mut rng)).collect());
    }
    let mut best: Option<(Vec<f64>, f64, bool)> = None;
    for start in starts {
        let (g, c, ok) = levenberg_marquardt(settings, measured, &basis, start, options.max_iterations);
        if best.as_ref().is_none_or(|b| c < b.1) {
            best = Some((g, c, ok));
        }
    }
    let (g, _, ok) = best.expect("at least one start");
    let gm = from_params(&basis, &g);
    let g2 = gm * gm;
    let tr = g2.trace().re;
    (g2.scale_real(1.0 / tr).hermitian_part(), ok)
}
