//! Reflection positivity, rotational invariance and the translation rotations `O_{t,R}`.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::estimator::{
    centered_weights, estimate, pull_back, run_batches, sample_table, weighted_mean, ActionRegion,
    CylindricalFunctional, EstimateReport, EstimatorError, FunctionalKind, Model,
    PulledBackFunctional, SupportCap, TestFunction,
};
use crate::gaussian::{FreeFieldSampler, HalfSpaceDecomposition};
use crate::geometry::{build_quadrature, stereographic_inverse, GeometryError, Region, RegionKind};
use crate::harmonics::{analyze, basis_row, sobolev_norm, HarmonicsError, SpectralField};
use crate::quadrature::pairwise_sum;

/// Orthogonality tolerance for [`Rotation::new`].
pub const ORTHOGONALITY_TOL: f64 = 1e-10;

/// Tolerance of the common-random-numbers mode of the invariance suite.
pub const CRN_TOLERANCE: f64 = 1e-6;

/// Share of the `L²` power in the top degree above which rotating a field is reported
/// as possibly aliased.
pub const ALIASING_WARN_FRACTION: f64 = 1e-3;

/// Degrees per unit radius used by the translation sweep.
pub const DEFAULT_L_PER_RADIUS: f64 = 20.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SymmetryError {
    #[error("matrix is not orthogonal: max |OᵀO − I| = {0:e}")]
    NotOrthogonal(f64),
    #[error("rotation does not fix the y axis")]
    NotAxisFixing,
    #[error("rotation acts on dimension {got}, expected {expected}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("functional {index} is not supported in x_D > {delta:e}")]
    NotInPlusRegion { index: usize, delta: f64 },
    #[error("decomposition does not match the model: {0}")]
    DecompositionMismatch(String),
    #[error("the model carries no cutoff schedule")]
    NoSchedule,
    #[error("empty functional family")]
    EmptyFamily,
    #[error(transparent)]
    Estimator(#[from] EstimatorError),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Harmonics(#[from] HarmonicsError),
}

/// An element of `O(D + 1)` acting on unit vectors `(x_1, …, x_D, (y − R)/R)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Rotation {
    matrix: DMatrix<f64>,
}

impl Rotation {
    pub fn new(matrix: DMatrix<f64>) -> Result<Self, SymmetryError> {
        if !matrix.is_square() || matrix.nrows() < 2 {
            return Err(SymmetryError::NotOrthogonal(f64::INFINITY));
        }
        let n = matrix.nrows();
        let dev = (matrix.transpose() * &matrix - DMatrix::<f64>::identity(n, n)).amax();
        if !(dev <= ORTHOGONALITY_TOL) {
            return Err(SymmetryError::NotOrthogonal(dev));
        }
        Ok(Self { matrix })
    }

    pub fn identity(dim: usize) -> Self {
        Self {
            matrix: DMatrix::identity(dim + 1, dim + 1),
        }
    }

    /// Rotation by `angle` in the coordinate plane `(i, j)`, taking `e_i` towards `e_j`.
    pub fn plane(dim: usize, i: usize, j: usize, angle: f64) -> Self {
        assert!(i != j && i <= dim && j <= dim);
        let mut m = DMatrix::identity(dim + 1, dim + 1);
        let (s, c) = angle.sin_cos();
        m[(i, i)] = c;
        m[(j, j)] = c;
        m[(j, i)] = s;
        m[(i, j)] = -s;
        Self { matrix: m }
    }

    /// Rotation about the y axis by `angle` (D = 2).
    pub fn azimuthal(angle: f64) -> Self {
        Self::plane(2, 0, 1, angle)
    }

    /// `x_axis → −x_axis`. For D = 1 and `axis = 0` this is the half-turn about the y axis.
    pub fn reflection(dim: usize, axis: usize) -> Self {
        assert!(axis <= dim);
        let mut m = DMatrix::identity(dim + 1, dim + 1);
        m[(axis, axis)] = -1.0;
        Self { matrix: m }
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows() - 1
    }

    pub fn is_identity(&self) -> bool {
        let n = self.matrix.nrows();
        self.matrix == DMatrix::<f64>::identity(n, n)
    }

    pub fn determinant(&self) -> f64 {
        self.matrix.determinant()
    }

    /// Whether the rotation fixes the y axis and so belongs to the `O(D)` subgroup.
    pub fn fixes_y_axis(&self) -> bool {
        let d = self.dim();
        (0..=d).all(|i| {
            let want = if i == d { 1.0 } else { 0.0 };
            (self.matrix[(d, i)] - want).abs() <= ORTHOGONALITY_TOL
                && (self.matrix[(i, d)] - want).abs() <= ORTHOGONALITY_TOL
        })
    }

    /// `self ∘ other`: apply `other` first.
    pub fn compose(&self, other: &Rotation) -> Rotation {
        Rotation {
            matrix: &self.matrix * &other.matrix,
        }
    }

    pub fn inverse(&self) -> Rotation {
        Rotation {
            matrix: self.matrix.transpose(),
        }
    }

    pub fn apply(&self, u: &[f64]) -> Vec<f64> {
        (&self.matrix * DVector::from_column_slice(u))
            .as_slice()
            .to_vec()
    }
}

fn check_rotation(dim: usize, o: &Rotation) -> Result<(), SymmetryError> {
    if o.dim() != dim {
        return Err(SymmetryError::DimensionMismatch {
            expected: dim,
            got: o.dim(),
        });
    }
    Ok(())
}

fn basis_table(dim: usize, l_max: usize, units: &[Vec<f64>]) -> DMatrix<f64> {
    let n_c = crate::harmonics::coefficient_count(dim, l_max);
    let mut table = DMatrix::zeros(units.len(), n_c);
    let mut row = vec![0.0; n_c];
    for (i, u) in units.iter().enumerate() {
        basis_row(dim, l_max, u, &mut row);
        for (j, v) in row.iter().enumerate() {
            table[(i, j)] = *v;
        }
    }
    table
}

fn warn_if_aliased(f: &SpectralField) {
    let power = f.degree_power();
    let total: f64 = power.iter().sum();
    if total > 0.0 {
        let top = power.last().copied().unwrap_or(0.0) / total;
        if top > ALIASING_WARN_FRACTION {
            log::warn!(
                "rotating a field with {:.2e} of its power at the band limit {}",
                top,
                f.l_max()
            );
        }
    }
}

/// Coefficients of `θ ↦ f(O⁻¹θ)`, by resampling on the transform grid and re-analyzing.
pub fn rotate_function(f: &SpectralField, o: &Rotation) -> Result<SpectralField, SymmetryError> {
    check_rotation(f.dim(), o)?;
    if o.is_identity() {
        return Ok(f.clone());
    }
    warn_if_aliased(f);
    let (dim, l_max) = (f.dim(), f.l_max());
    let grid = build_quadrature(dim, f.radius(), l_max)?;
    let inv = o.inverse();
    let mut row = vec![0.0; f.len()];
    let values: Vec<f64> = grid
        .nodes()
        .iter()
        .map(|p| {
            basis_row(dim, l_max, &inv.apply(&p.unit()), &mut row);
            row.iter().zip(f.coeffs()).map(|(a, b)| a * b).sum()
        })
        .collect();
    Ok(analyze(&values, &grid)?)
}

/// Matrix `M` with `rotate_function(f, O).coeffs() = M · f.coeffs()` for every field of
/// this shape.
pub fn rotation_matrix(
    dim: usize,
    radius: f64,
    l_max: usize,
    o: &Rotation,
) -> Result<DMatrix<f64>, SymmetryError> {
    check_rotation(dim, o)?;
    let n_c = crate::harmonics::coefficient_count(dim, l_max);
    if o.is_identity() {
        return Ok(DMatrix::identity(n_c, n_c));
    }
    let grid = build_quadrature(dim, radius, l_max)?;
    let inv = o.inverse();
    let units: Vec<Vec<f64>> = grid.nodes().iter().map(|p| p.unit()).collect();
    let rotated: Vec<Vec<f64>> = units.iter().map(|u| inv.apply(u)).collect();
    let y = basis_table(dim, l_max, &units);
    let mut y_rot = basis_table(dim, l_max, &rotated);
    let scale = radius.powi(dim as i32);
    for (i, w) in grid.weights().iter().enumerate() {
        y_rot.row_mut(i).scale_mut(w / scale);
    }
    Ok(y.tr_mul(&y_rot))
}

/// `F̆_O`: every test field `t` replaced by `M t` and every cap rotated.
pub fn rotate_functional(
    f: &PulledBackFunctional,
    o: &Rotation,
    m: &DMatrix<f64>,
) -> PulledBackFunctional {
    if o.is_identity() {
        return f.clone();
    }
    let tests: Vec<SpectralField> = f
        .tests()
        .iter()
        .map(|t| {
            let c = m * DVector::from_column_slice(t.coeffs());
            SpectralField::from_coeffs(t.dim(), t.radius(), t.l_max(), c.as_slice().to_vec())
                .expect("shape")
        })
        .collect();
    let caps: Vec<SupportCap> = f
        .caps()
        .iter()
        .map(|c| SupportCap {
            center: o.apply(&c.center),
            ..c.clone()
        })
        .collect();
    if tests.is_empty() {
        return f.clone();
    }
    PulledBackFunctional::from_fields(f.kind(), tests, caps).expect("shape is preserved")
}

/// `O_{t,R}` with the data it was built from.
#[derive(Debug, Clone, PartialEq)]
pub struct TranslationWitness {
    pub t: Vec<f64>,
    pub radius: f64,
    pub rotation: Rotation,
}

/// The rotation in the plane of the pole axis and `𝔰⁻¹(t)` taking the south pole to
/// `𝔰⁻¹(t)`; it fixes the orthogonal complement of that plane.
pub fn build_translation_rotation(
    t: &[f64],
    radius: f64,
) -> Result<TranslationWitness, SymmetryError> {
    let dim = t.len();
    if t.iter().all(|v| *v == 0.0) {
        return Ok(TranslationWitness {
            t: t.to_vec(),
            radius,
            rotation: Rotation::identity(dim),
        });
    }
    let p = stereographic_inverse(t, radius)?.unit();
    let mut s = vec![0.0; dim + 1];
    s[dim] = -1.0;
    let cos: f64 = p.iter().zip(&s).map(|(a, b)| a * b).sum();
    let mut e: Vec<f64> = p.iter().zip(&s).map(|(a, b)| a - cos * b).collect();
    let sin = e.iter().map(|v| v * v).sum::<f64>().sqrt();
    e.iter_mut().for_each(|v| *v /= sin);
    let s = DVector::from_vec(s);
    let e = DVector::from_vec(e);
    let matrix = DMatrix::identity(dim + 1, dim + 1)
        + (&e * s.transpose() - &s * e.transpose()) * sin
        + (&s * s.transpose() + &e * e.transpose()) * (cos - 1.0);
    Ok(TranslationWitness {
        t: t.to_vec(),
        radius,
        rotation: Rotation { matrix },
    })
}

fn pulled_back_field(
    f: &TestFunction,
    radius: f64,
    l_max: usize,
) -> Result<SpectralField, SymmetryError> {
    let single = CylindricalFunctional::new(
        vec![f.clone()],
        FunctionalKind::ClampedIdentity { bound: 1.0 },
    )?;
    Ok(pull_back(&single, radius, l_max)?.tests()[0].clone())
}

/// `‖(t f) ∘ 𝔰 − O_{t,R}(f ∘ 𝔰)‖_{H^k}` at band limit `l_max`.
pub fn translation_residual(
    f: &TestFunction,
    t: &[f64],
    radius: f64,
    k: i32,
    l_max: usize,
) -> Result<f64, SymmetryError> {
    let witness = build_translation_rotation(t, radius)?;
    let moved = pulled_back_field(&f.translated(t), radius, l_max)?;
    let rotated = rotate_function(&pulled_back_field(f, radius, l_max)?, &witness.rotation)?;
    Ok(sobolev_norm(&moved.combine(1.0, &rotated, -1.0)?, k))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TranslationRow {
    pub radius: f64,
    pub l_max: usize,
    pub residual: f64,
    /// Residual divided by the `H^k` norm of the pulled-back function.
    pub relative: f64,
}

/// Band limit `⌈l_per_radius · R⌉`, at least 16.
pub fn sweep_band_limit(radius: f64, l_per_radius: f64) -> usize {
    ((l_per_radius * radius).ceil() as usize).max(16)
}

/// [`translation_residual`] over several radii.
pub fn translation_sweep(
    f: &TestFunction,
    t: &[f64],
    radii: &[f64],
    k: i32,
    l_per_radius: f64,
) -> Result<Vec<TranslationRow>, SymmetryError> {
    radii
        .par_iter()
        .map(|r| {
            let l_max = sweep_band_limit(*r, l_per_radius);
            let residual = translation_residual(f, t, *r, k, l_max)?;
            let norm = sobolev_norm(&pulled_back_field(f, *r, l_max)?, k);
            Ok(TranslationRow {
                radius: *r,
                l_max,
                residual,
                relative: residual / norm,
            })
        })
        .collect()
}

fn check_plus(family: &[&PulledBackFunctional], delta: f64) -> Result<(), SymmetryError> {
    if family.is_empty() {
        return Err(SymmetryError::EmptyFamily);
    }
    for (index, f) in family.iter().enumerate() {
        if !f.in_plus_region(delta) {
            return Err(SymmetryError::NotInPlusRegion { index, delta });
        }
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RPGramReport {
    pub p: usize,
    /// `gram[i][j]` estimates `I_n(F̆_i (F̆_j)_Θ)`, symmetrized per sample.
    pub gram: Vec<Vec<f64>>,
    pub std_errors: Vec<Vec<f64>>,
    /// Largest `|raw_ij − raw_ji|` over combined std errors, before symmetrization.
    pub max_asymmetry_z: f64,
    pub min_eigenvalue: f64,
    pub max_std_error: f64,
    pub collar_excluded: bool,
    /// `max_i ‖F_i‖²_∞ · 𝔐_n R_n^D / Λ_n`; zero when the model has no schedule.
    pub deviation_bound: f64,
    /// `−(deviation_bound + 3 max_std_error)`.
    pub tolerance: f64,
    pub passes: bool,
    pub schedule_rp_valid: Option<bool>,
    pub ess: f64,
    pub samples: usize,
    pub seed: u64,
    pub n: u32,
}

/// Gram matrix of the family under the collar-excluded action.
pub fn rp_gram(
    family: &[PulledBackFunctional],
    model: &Model,
    sampler: &FreeFieldSampler,
    samples: usize,
) -> Result<RPGramReport, SymmetryError> {
    let refs: Vec<&PulledBackFunctional> = family.iter().collect();
    check_plus(&refs, model.delta)?;
    let p = family.len();
    let reflected: Vec<PulledBackFunctional> = family.iter().map(|f| f.reflected()).collect();
    let mut all = refs.clone();
    all.extend(reflected.iter());
    let table = sample_table(&all, model, ActionRegion::CollarExcluded, sampler, samples)?;
    let a = &table.values[..p];
    let b = &table.values[p..];
    let mut gram = vec![vec![0.0; p]; p];
    let mut std_errors = vec![vec![0.0; p]; p];
    let mut raw = vec![vec![(0.0, 0.0); p]; p];
    let mut ess = samples as f64;
    for i in 0..p {
        for j in 0..p {
            let prod: Vec<f64> = a[i].iter().zip(&b[j]).map(|(x, y)| x * y).collect();
            let m = weighted_mean(&table.log_weights, &prod)?;
            raw[i][j] = (m.value, m.std_error);
            ess = m.ess;
        }
        for j in i..p {
            let sym: Vec<f64> = (0..samples)
                .map(|s| 0.5 * (a[i][s] * b[j][s] + a[j][s] * b[i][s]))
                .collect();
            let m = weighted_mean(&table.log_weights, &sym)?;
            gram[i][j] = m.value;
            gram[j][i] = m.value;
            std_errors[i][j] = m.std_error;
            std_errors[j][i] = m.std_error;
        }
    }
    let mut max_asymmetry_z: f64 = 0.0;
    for i in 0..p {
        for j in i + 1..p {
            let (x, sx) = raw[i][j];
            let (y, sy) = raw[j][i];
            let se = (sx * sx + sy * sy).sqrt();
            let z = if se > 0.0 {
                (x - y).abs() / se
            } else if x == y {
                0.0
            } else {
                f64::INFINITY
            };
            max_asymmetry_z = max_asymmetry_z.max(z);
        }
    }
    let g = DMatrix::from_fn(p, p, |i, j| gram[i][j]);
    let min_eigenvalue = SymmetricEigen::new(g)
        .eigenvalues
        .iter()
        .cloned()
        .fold(f64::INFINITY, f64::min);
    let max_std_error = std_errors.iter().flatten().cloned().fold(0.0, f64::max);
    let sup = family.iter().map(|f| f.sup_bound()).fold(0.0, f64::max);
    let deviation_bound = model.ratio().map_or(0.0, |r| sup * sup * r);
    let tolerance = -(deviation_bound + 3.0 * max_std_error);
    let schedule_rp_valid = model.schedule.map(|s| s.is_rp_valid());
    if schedule_rp_valid == Some(false) {
        log::warn!("schedule is not RP-valid: 𝔐 R^D / Λ does not vanish");
    }
    Ok(RPGramReport {
        p,
        gram,
        std_errors,
        max_asymmetry_z,
        min_eigenvalue,
        max_std_error,
        collar_excluded: true,
        deviation_bound,
        tolerance,
        passes: min_eigenvalue >= tolerance,
        schedule_rp_valid,
        ess,
        samples,
        seed: sampler.seed(),
        n: model.n,
    })
}

/// `C` in `deviation ≤ C ‖F‖²_∞ 𝔐_n R_n^D / Λ_n`: the collar has measure at most
/// `4π R^{D−1} α δ` for D ≤ 2 and the two self-normalized estimates differ by at most
/// `2 ‖G‖_∞ 𝔐 |collar|` to first order.
pub fn deviation_constant(alpha: f64) -> f64 {
    8.0 * std::f64::consts::PI * alpha
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeviationReport {
    pub n: u32,
    /// `𝔐_n R_n^D / Λ_n`.
    pub ratio: f64,
    /// `I_n(F̆ F̆_Θ)` under the full action.
    pub full: f64,
    /// `I_n(F̆ F̆_Θ)` under the collar-excluded action.
    pub excluded: f64,
    /// `|full − excluded|`.
    pub deviation: f64,
    /// Delta-method std error of `full − excluded` on the shared samples.
    pub std_error: f64,
    /// `‖F‖²_∞ 𝔐_n R_n^D / Λ_n`.
    pub bound: f64,
    pub constant: f64,
    pub passes: bool,
    pub samples: usize,
    pub seed: u64,
}

/// Effect of the collar on `I_n(F̆ F̆_Θ)`, against the bound of the schedule.
pub fn rp_deviation(
    f: &PulledBackFunctional,
    model: &Model,
    sampler: &FreeFieldSampler,
    samples: usize,
) -> Result<DeviationReport, SymmetryError> {
    check_plus(&[f], model.delta)?;
    let schedule = model.schedule.ok_or(SymmetryError::NoSchedule)?;
    let ratio = model.ratio().expect("schedule");
    let sup_l = schedule.sup_bound_at(model.n);
    if model.lagrangian.sup_bound() > sup_l {
        log::warn!(
            "Lagrangian sup bound {} exceeds the schedule value {}",
            model.lagrangian.sup_bound(),
            sup_l
        );
    }
    if samples < 2 {
        return Err(EstimatorError::TooFewSamples(samples).into());
    }
    let reflected = f.reflected();
    let rows = run_batches(samples, |start, count| {
        let batch = sampler.sample_batch(start, count);
        let actions = model.actions(&batch)?;
        let a = f.evaluate_batch(&batch)?;
        let b = reflected.evaluate_batch(&batch)?;
        Ok((0..count)
            .map(|i| {
                (
                    -actions[i].full(),
                    -actions[i].collar_excluded(),
                    a[i] * b[i],
                )
            })
            .collect())
    })?;
    let mut lw_full = Vec::with_capacity(samples);
    let mut lw_excl = Vec::with_capacity(samples);
    let mut g = Vec::with_capacity(samples);
    for (a, b, c) in rows {
        lw_full.push(a);
        lw_excl.push(b);
        g.push(c);
    }
    let full = weighted_mean(&lw_full, &g)?;
    let excluded = weighted_mean(&lw_excl, &g)?;
    let wf = centered_weights(&lw_full);
    let we = centered_weights(&lw_excl);
    let (sf, se) = (pairwise_sum(&wf), pairwise_sum(&we));
    let infl: Vec<f64> = (0..samples)
        .map(|i| {
            let d = wf[i] * (g[i] - full.value) / sf - we[i] * (g[i] - excluded.value) / se;
            d * d
        })
        .collect();
    let std_error = (pairwise_sum(&infl) * samples as f64 / (samples as f64 - 1.0)).sqrt();
    let deviation = (full.value - excluded.value).abs();
    let sup = f.sup_bound();
    let bound = sup * sup * ratio;
    let constant = deviation_constant(schedule.alpha);
    Ok(DeviationReport {
        n: model.n,
        ratio,
        full: full.value,
        excluded: excluded.value,
        deviation,
        std_error,
        bound,
        constant,
        passes: deviation <= constant * bound,
        samples,
        seed: sampler.seed(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarkovReport {
    /// Estimate of `E[F̆(φ⁺) F̆_Θ(φ⁻) w⁺ w⁻]`.
    pub lhs: f64,
    /// `(E[F̆(φ⁺) w⁺])²`.
    pub rhs: f64,
    /// Delta-method std error of `lhs − rhs`.
    pub std_error: f64,
    pub plus_mean: f64,
    pub plus_std_error: f64,
    /// Estimate of `E[F̆_Θ(φ⁻) w⁻]`.
    pub minus_mean: f64,
    pub minus_std_error: f64,
    pub passes: bool,
    pub theta_passes: bool,
    pub samples: usize,
    pub seed: u64,
    pub n: u32,
}

fn mean_and_se(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let m = pairwise_sum(v) / n;
    let var = pairwise_sum(&v.iter().map(|x| (x - m) * (x - m)).collect::<Vec<_>>()) / (n - 1.0);
    (m, (var / n).sqrt())
}

/// Monte Carlo check of the factorization of the collar-excluded expectation over the
/// independent plus and minus components.
pub fn markov_factorization_check(
    f: &PulledBackFunctional,
    model: &Model,
    decomp: &HalfSpaceDecomposition,
    seed: u64,
    samples: usize,
) -> Result<MarkovReport, SymmetryError> {
    if decomp.dim() != model.dim || decomp.radius() != model.radius || decomp.l_max() != model.l_max
    {
        return Err(SymmetryError::DecompositionMismatch(
            "dimension, radius or band limit".into(),
        ));
    }
    if decomp.delta() != model.delta {
        return Err(SymmetryError::DecompositionMismatch(format!(
            "δ = {} but the model uses {}",
            decomp.delta(),
            model.delta
        )));
    }
    if samples < 2 {
        return Err(EstimatorError::TooFewSamples(samples).into());
    }
    if f.arity() > 0 {
        check_plus(&[f], model.delta)?;
    }
    let reflected = f.reflected();
    let plus = model.evaluator_for(RegionKind::Plus)?;
    let minus = model.evaluator_for(RegionKind::Minus)?;
    let lag = model.lagrangian.as_ref();
    let rows = run_batches(samples, |start, count| {
        let phi_p = decomp.sampling_factor(Region::Plus)
            * decomp.component_noise(Region::Plus, seed, start, count);
        let phi_m = decomp.sampling_factor(Region::Minus)
            * decomp.component_noise(Region::Minus, seed, start, count);
        let sp = plus.actions(lag, &phi_p).map_err(EstimatorError::from)?;
        let sm = minus.actions(lag, &phi_m).map_err(EstimatorError::from)?;
        let fp = f.evaluate_batch(&phi_p)?;
        let fm = reflected.evaluate_batch(&phi_m)?;
        Ok((0..count)
            .map(|i| (fp[i] * (-sp[i].plus).exp(), fm[i] * (-sm[i].minus).exp()))
            .collect())
    })?;
    let (x, y): (Vec<f64>, Vec<f64>) = rows.into_iter().unzip();
    let xy: Vec<f64> = x.iter().zip(&y).map(|(a, b)| a * b).collect();
    let (lhs, _) = mean_and_se(&xy);
    let (plus_mean, plus_std_error) = mean_and_se(&x);
    let (minus_mean, minus_std_error) = mean_and_se(&y);
    let rhs = plus_mean * plus_mean;
    let h: Vec<f64> = x
        .iter()
        .zip(&xy)
        .map(|(a, p)| p - 2.0 * plus_mean * a)
        .collect();
    let (_, std_error) = mean_and_se(&h);
    let theta_se = (plus_std_error * plus_std_error + minus_std_error * minus_std_error).sqrt();
    Ok(MarkovReport {
        lhs,
        rhs,
        std_error,
        plus_mean,
        plus_std_error,
        minus_mean,
        minus_std_error,
        passes: (lhs - rhs).abs() <= 3.0 * std_error,
        theta_passes: (plus_mean - minus_mean).abs() <= 3.0 * theta_se,
        samples,
        seed,
        n: model.n,
    })
}

/// A rotation with a name for reports.
#[derive(Debug, Clone, PartialEq)]
pub struct NamedRotation {
    pub label: String,
    pub rotation: Rotation,
}

impl NamedRotation {
    pub fn new(label: impl Into<String>, rotation: Rotation) -> Self {
        Self {
            label: label.into(),
            rotation,
        }
    }
}

/// Grid-compatible rotations for the invariance suite: the half-turn for D = 1, and
/// azimuthal turns plus a mirror for D = 2.
pub fn default_rotations(dim: usize) -> Vec<NamedRotation> {
    let mut out = vec![NamedRotation::new("identity", Rotation::identity(dim))];
    if dim == 1 {
        out.push(NamedRotation::new("half_turn", Rotation::reflection(1, 0)));
    } else {
        for (label, a) in [
            ("azimuth_pi_3", 1.0 / 3.0),
            ("azimuth_pi_2", 0.5),
            ("azimuth_pi", 1.0),
        ] {
            out.push(NamedRotation::new(
                label,
                Rotation::azimuthal(a * std::f64::consts::PI),
            ));
        }
        out.push(NamedRotation::new("mirror_x1", Rotation::reflection(2, 0)));
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InvarianceMode {
    /// Independent seeds per rotation; differences within 3 combined std errors.
    Standard,
    /// Same seed, with both the functional and the samples rotated.
    CommonRandomNumbers,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RotationEstimate {
    pub label: String,
    pub estimate: EstimateReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InvarianceReport {
    pub mode: InvarianceMode,
    pub estimates: Vec<RotationEstimate>,
    /// Largest pairwise `|I_a − I_b| / √(σ_a² + σ_b²)`.
    pub max_z: f64,
    /// Largest pairwise `|I_a − I_b|`.
    pub max_abs_diff: f64,
    pub passes: bool,
}

fn rotated_estimate(
    f: &PulledBackFunctional,
    model: &Model,
    sampler: &FreeFieldSampler,
    samples: usize,
    m: &DMatrix<f64>,
) -> Result<EstimateReport, SymmetryError> {
    let rows = run_batches(samples, |start, count| {
        let batch = m * sampler.sample_batch(start, count);
        let actions = model.actions(&batch)?;
        let vals = f.evaluate_batch(&batch)?;
        Ok((0..count).map(|i| (-actions[i].full(), vals[i])).collect())
    })?;
    let (lw, v): (Vec<f64>, Vec<f64>) = rows.into_iter().unzip();
    let w = weighted_mean(&lw, &v)?;
    Ok(EstimateReport {
        value: w.value,
        std_error: w.std_error,
        samples: w.samples,
        ess: w.ess,
        seed: sampler.seed(),
        n: model.n,
        sup_bound: f.sup_bound(),
    })
}

/// Estimates of `I_n(F̆_O)` over `rotations`. In [`InvarianceMode::Standard`] rotation
/// `j` is estimated with seed `seed + j`.
pub fn rotation_invariance_suite(
    f: &PulledBackFunctional,
    rotations: &[NamedRotation],
    model: &Model,
    sampler: &FreeFieldSampler,
    samples: usize,
    mode: InvarianceMode,
) -> Result<InvarianceReport, SymmetryError> {
    for r in rotations {
        check_rotation(model.dim, &r.rotation)?;
        if !r.rotation.fixes_y_axis() {
            return Err(SymmetryError::NotAxisFixing);
        }
    }
    let estimates: Vec<RotationEstimate> = rotations
        .par_iter()
        .enumerate()
        .map(|(j, r)| {
            let m = rotation_matrix(model.dim, model.radius, model.l_max, &r.rotation)?;
            let rotated = rotate_functional(f, &r.rotation, &m);
            let estimate = match mode {
                InvarianceMode::Standard => estimate(
                    &rotated,
                    model,
                    &sampler.with_seed(sampler.seed().wrapping_add(j as u64)),
                    samples,
                )?,
                InvarianceMode::CommonRandomNumbers => {
                    if r.rotation.is_identity() {
                        estimate(f, model, sampler, samples)?
                    } else {
                        rotated_estimate(&rotated, model, sampler, samples, &m)?
                    }
                }
            };
            Ok(RotationEstimate {
                label: r.label.clone(),
                estimate,
            })
        })
        .collect::<Result<_, SymmetryError>>()?;
    let mut max_z: f64 = 0.0;
    let mut max_abs_diff: f64 = 0.0;
    for a in 0..estimates.len() {
        for b in a + 1..estimates.len() {
            let (x, y) = (&estimates[a].estimate, &estimates[b].estimate);
            let d = (x.value - y.value).abs();
            let se = (x.std_error * x.std_error + y.std_error * y.std_error).sqrt();
            max_abs_diff = max_abs_diff.max(d);
            max_z = max_z.max(if se > 0.0 {
                d / se
            } else if d == 0.0 {
                0.0
            } else {
                f64::INFINITY
            });
        }
    }
    let passes = match mode {
        InvarianceMode::Standard => max_z <= 3.0,
        InvarianceMode::CommonRandomNumbers => max_abs_diff <= CRN_TOLERANCE,
    };
    Ok(InvarianceReport {
        mode,
        estimates,
        max_z,
        max_abs_diff,
        passes,
    })
}

/// Amplitude of the bumps in [`default_rp_family`].
pub const DEFAULT_FAMILY_AMPLITUDE: f64 = 20.0;

/// `p` translates and dilates of one bump along the `x_D` axis, each read through
/// `tanh`: bump `i` has center `x_D = 1.5 + 0.5 i` and radius `0.5 + 0.25 i`.
pub fn default_rp_family(
    dim: usize,
    p: usize,
    amplitude: f64,
) -> Result<Vec<CylindricalFunctional>, SymmetryError> {
    (0..p)
        .map(|i| {
            let mut center = vec![0.0; dim];
            center[dim - 1] = 1.5 + 0.5 * i as f64;
            let bump = TestFunction::new(center, 0.5 + 0.25 * i as f64, amplitude)?;
            Ok(CylindricalFunctional::new(
                vec![bump],
                FunctionalKind::TanhProduct { scale: 1.0 },
            )?)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::sync::Arc;

    use crate::estimator::pull_back;
    use crate::geometry::stereographic_project;
    use crate::harmonics::SpectralField;
    use crate::interaction::{ConstantLagrangian, ZeroLagrangian};
    use crate::regularization::ZonalKernel;

    fn random_field(dim: usize, l_max: usize, seed: u64) -> SpectralField {
        let s = FreeFieldSampler::new(dim, 1.0, l_max, 0, seed).unwrap();
        s.sample_field(0)
    }

    #[test]
    fn identity_rotation_is_exact() {
        let f = random_field(2, 8, 1);
        assert_eq!(rotate_function(&f, &Rotation::identity(2)).unwrap(), f);
    }

    #[test]
    fn rotations_compose() {
        for dim in [1, 2] {
            let f = random_field(dim, 10, 2);
            let (a, b) = if dim == 1 {
                (Rotation::plane(1, 0, 1, 0.4), Rotation::plane(1, 0, 1, 1.1))
            } else {
                (
                    Rotation::plane(2, 0, 2, 0.4),
                    Rotation::plane(2, 1, 2, -0.7),
                )
            };
            let two = rotate_function(&rotate_function(&f, &b).unwrap(), &a).unwrap();
            let one = rotate_function(&f, &a.compose(&b)).unwrap();
            let err = two
                .combine(1.0, &one, -1.0)
                .unwrap()
                .coeffs()
                .iter()
                .fold(0.0f64, |m, v| m.max(v.abs()));
            assert!(err < 2e-10, "D={dim}: {err}");
            let dn = (sobolev_norm(&one, 2) - sobolev_norm(&f, 2)).abs() / sobolev_norm(&f, 2);
            assert!(dn < 1e-8, "D={dim}: {dn}");
        }
    }

    #[test]
    fn rotation_matrix_matches_resampling() {
        let f = random_field(2, 6, 3);
        let o = Rotation::plane(2, 0, 2, 0.3).compose(&Rotation::azimuthal(0.2));
        let m = rotation_matrix(2, 1.0, 6, &o).unwrap();
        let a = &m * DVector::from_column_slice(f.coeffs());
        let b = rotate_function(&f, &o).unwrap();
        for (x, y) in a.iter().zip(b.coeffs()) {
            assert!((x - y).abs() < 1e-12);
        }
        let orth = (m.transpose() * &m - DMatrix::<f64>::identity(m.nrows(), m.nrows())).amax();
        assert!(orth < 1e-10);
    }

    #[test]
    fn translation_witness_examples() {
        let w = build_translation_rotation(&[0.0, 0.0], 3.0).unwrap();
        assert!(w.rotation.is_identity());
        let w = build_translation_rotation(&[2.0], 1.0).unwrap();
        let img = w.rotation.apply(&[0.0, -1.0]);
        assert!((img[0] - 1.0).abs() < 1e-12 && img[1].abs() < 1e-12);
        assert!((w.rotation.determinant() - 1.0).abs() < 1e-12);
        let w = build_translation_rotation(&[0.7, -1.9], 2.5).unwrap();
        let p = crate::geometry::SpherePoint::from_unit(&w.rotation.apply(&[0.0, 0.0, -1.0]), 2.5);
        let t = stereographic_project(&p).unwrap();
        assert!((t[0] - 0.7).abs() < 1e-10 && (t[1] + 1.9).abs() < 1e-10);
        assert!((w.rotation.determinant() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn zero_translation_has_zero_residual() {
        let f = TestFunction::new(vec![0.2], 1.0, 1.0).unwrap();
        assert!(translation_residual(&f, &[0.0], 5.0, 1, 100).unwrap() < 1e-10);
    }

    #[test]
    fn translation_residual_needs_resolution() {
        let f = TestFunction::new(vec![0.0], 0.01, 1.0).unwrap();
        assert!(matches!(
            translation_residual(&f, &[1.0], 10.0, 1, 16),
            Err(SymmetryError::Estimator(EstimatorError::Resolution { .. }))
        ));
    }

    fn flat_model(dim: usize, radius: f64, l_max: usize, half_width: f64) -> Model {
        Model::new(
            dim,
            radius,
            l_max,
            1,
            ZonalKernel::identity(l_max),
            Arc::new(ZeroLagrangian { arity: 2 }),
            1,
            half_width,
        )
        .unwrap()
    }

    #[test]
    fn gram_rejects_minus_supports() {
        let model = flat_model(1, 4.0, 32, 0.05);
        let sampler = model.sampler(1, 1).unwrap();
        let bump = TestFunction::new(vec![-1.0], 0.5, 1.0).unwrap();
        let f = pull_back(
            &CylindricalFunctional::new(vec![bump], FunctionalKind::Tanh { scale: 1.0 }).unwrap(),
            4.0,
            32,
        )
        .unwrap();
        assert!(matches!(
            rp_gram(&[f], &model, &sampler, 64),
            Err(SymmetryError::NotInPlusRegion { index: 0, .. })
        ));
    }

    #[test]
    fn gram_of_constant_is_one() {
        let model = flat_model(1, 4.0, 32, 0.05);
        let sampler = model.sampler(1, 5).unwrap();
        let fam: Vec<PulledBackFunctional> = default_rp_family(1, 1, DEFAULT_FAMILY_AMPLITUDE)
            .unwrap()
            .iter()
            .map(|f| pull_back(f, 4.0, 32).unwrap())
            .collect();
        let one = PulledBackFunctional::from_fields(
            FunctionalKind::Constant { value: 1.0 },
            fam[0].tests().to_vec(),
            fam[0].caps().to_vec(),
        )
        .unwrap();
        let r = rp_gram(&[one], &model, &sampler, 256).unwrap();
        assert_eq!(r.gram[0][0], 1.0);
        let r = rp_gram(&fam, &model, &sampler, 2048).unwrap();
        assert!(r.gram[0][0] >= -3.0 * r.std_errors[0][0]);
        assert!(r.collar_excluded);
    }

    #[test]
    fn deviation_needs_schedule_and_vanishes_without_interaction() {
        let model = flat_model(1, 4.0, 32, 0.05);
        let sampler = model.sampler(1, 5).unwrap();
        let f = pull_back(
            &default_rp_family(1, 1, DEFAULT_FAMILY_AMPLITUDE).unwrap()[0],
            4.0,
            32,
        )
        .unwrap();
        assert!(matches!(
            rp_deviation(&f, &model, &sampler, 64),
            Err(SymmetryError::NoSchedule)
        ));
    }

    #[test]
    fn suite_rejects_tilted_rotations() {
        let model = flat_model(2, 1.0, 8, 0.05);
        let sampler = model.sampler(2, 1).unwrap();
        let f = PulledBackFunctional::constant(1.0);
        let rot = [NamedRotation::new("tilt", Rotation::plane(2, 0, 2, 0.3))];
        assert!(matches!(
            rotation_invariance_suite(&f, &rot, &model, &sampler, 64, InvarianceMode::Standard),
            Err(SymmetryError::NotAxisFixing)
        ));
    }

    #[test]
    fn suite_identity_is_bit_identical() {
        let model = flat_model(1, 3.0, 24, 0.05).with_lagrangian(Arc::new(ConstantLagrangian {
            value: 0.0,
            arity: 2,
        }));
        let sampler = model.sampler(1, 9).unwrap();
        let f = pull_back(
            &default_rp_family(1, 1, DEFAULT_FAMILY_AMPLITUDE).unwrap()[0],
            3.0,
            24,
        )
        .unwrap();
        let base = estimate(&f, &model, &sampler, 300).unwrap();
        for mode in [
            InvarianceMode::Standard,
            InvarianceMode::CommonRandomNumbers,
        ] {
            let r =
                rotation_invariance_suite(&f, &default_rotations(1), &model, &sampler, 300, mode)
                    .unwrap();
            assert_eq!(r.estimates[0].estimate, base);
        }
    }
}
