//! Cylindrical functionals, their pullback to the sphere, and the self-normalized
//! reweighted estimate of `I_n(F) = E_μ[F̆ e^{−S_n}] / E_μ[e^{−S_n}]`.

use std::sync::Arc;

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::gaussian::{FreeFieldSampler, GaussianError};
use crate::geometry::{
    build_region_quadrature, circle_point, stereographic_inverse, stereographic_project,
    GeometryError, RegionKind, RegionRule, RegionSpec, SpherePoint,
};
use crate::harmonics::{
    basis_row, coefficient_count, degree_of, eigenvalue, reflect_field, sobolev_norm,
    HarmonicsError, SpectralField,
};
use crate::interaction::{ActionEvaluator, InteractionError, Lagrangian, RegionActions};
use crate::quadrature::{composite_gauss, pairwise_sum};
use crate::regularization::{
    build_kernel, CutoffSchedule, MollifierSpec, RegularizationError, ZonalKernel,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EstimatorError {
    #[error("effective sample size {ess:.3} is below 2")]
    DegenerateWeights { ess: f64 },
    #[error("at least 2 samples are required, got {0}")]
    TooFewSamples(usize),
    #[error(
        "test function {index} has angular support {support:e} below the node spacing {spacing:e}"
    )]
    Resolution {
        index: usize,
        support: f64,
        spacing: f64,
    },
    #[error("sequence value {value} exceeds the sup bound {bound}")]
    BoundViolation { value: f64, bound: f64 },
    #[error("functional arity {got} is invalid for {kind}")]
    Arity { kind: String, got: usize },
    #[error("invalid test function: {0}")]
    InvalidTestFunction(String),
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("empty sequence")]
    EmptySequence,
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Harmonics(#[from] HarmonicsError),
    #[error(transparent)]
    Gaussian(#[from] GaussianError),
    #[error(transparent)]
    Interaction(#[from] InteractionError),
    #[error(transparent)]
    Regularization(#[from] RegularizationError),
}

/// `x ↦ amplitude · exp(−1/(1 − |x − c|²/r²))` on `ℝ^D`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestFunction {
    pub center: Vec<f64>,
    pub radius: f64,
    pub amplitude: f64,
}

impl TestFunction {
    pub fn new(center: Vec<f64>, radius: f64, amplitude: f64) -> Result<Self, EstimatorError> {
        if !(radius > 0.0 && radius.is_finite()) {
            return Err(EstimatorError::InvalidTestFunction(format!(
                "radius {radius}"
            )));
        }
        if center.is_empty() || center.iter().any(|c| !c.is_finite()) || !amplitude.is_finite() {
            return Err(EstimatorError::InvalidTestFunction(
                "non-finite parameters".into(),
            ));
        }
        Ok(Self {
            center,
            radius,
            amplitude,
        })
    }

    pub fn dim(&self) -> usize {
        self.center.len()
    }

    pub fn eval(&self, u: &[f64]) -> f64 {
        let d2: f64 = u
            .iter()
            .zip(&self.center)
            .map(|(a, b)| (a - b) * (a - b))
            .sum();
        let t = d2 / (self.radius * self.radius);
        if t >= 1.0 {
            0.0
        } else {
            self.amplitude * (-1.0 / (1.0 - t)).exp()
        }
    }

    pub fn sup(&self) -> f64 {
        self.amplitude.abs() * (-1.0f64).exp()
    }

    /// `x ↦ f(x − t)`.
    pub fn translated(&self, t: &[f64]) -> Self {
        Self {
            center: self.center.iter().zip(t).map(|(c, s)| c + s).collect(),
            ..self.clone()
        }
    }
}

/// The bounded evaluators `F̃` available to functionals.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FunctionalKind {
    /// `F̃ ≡ value`.
    Constant { value: f64 },
    /// `cos(x_1 + … + x_m)`.
    Cos,
    /// `x_1 + … + x_m` clamped to `[−bound, bound]`.
    ClampedIdentity { bound: f64 },
    /// `tanh((x_1 + … + x_m)/scale)`.
    Tanh { scale: f64 },
    /// `∏ tanh(x_j/scale)`.
    TanhProduct { scale: f64 },
}

impl FunctionalKind {
    pub fn eval(&self, x: &[f64]) -> f64 {
        match *self {
            FunctionalKind::Constant { value } => value,
            FunctionalKind::Cos => x.iter().sum::<f64>().cos(),
            FunctionalKind::ClampedIdentity { bound } => x.iter().sum::<f64>().clamp(-bound, bound),
            FunctionalKind::Tanh { scale } => (x.iter().sum::<f64>() / scale).tanh(),
            FunctionalKind::TanhProduct { scale } => x.iter().map(|v| (v / scale).tanh()).product(),
        }
    }

    pub fn sup_bound(&self) -> f64 {
        match *self {
            FunctionalKind::Constant { value } => value.abs(),
            FunctionalKind::ClampedIdentity { bound } => bound.abs(),
            _ => 1.0,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            FunctionalKind::Constant { .. } => "constant",
            FunctionalKind::Cos => "cos",
            FunctionalKind::ClampedIdentity { .. } => "clamped_identity",
            FunctionalKind::Tanh { .. } => "tanh",
            FunctionalKind::TanhProduct { .. } => "tanh_product",
        }
    }

    fn check_arity(&self, m: usize) -> Result<(), EstimatorError> {
        let ok = match self {
            FunctionalKind::Constant { .. } => true,
            _ => m >= 1,
        };
        let params_ok = match *self {
            FunctionalKind::Constant { value } => value.is_finite(),
            FunctionalKind::ClampedIdentity { bound } => bound > 0.0 && bound.is_finite(),
            FunctionalKind::Tanh { scale } | FunctionalKind::TanhProduct { scale } => {
                scale > 0.0 && scale.is_finite()
            }
            FunctionalKind::Cos => true,
        };
        if ok && params_ok {
            Ok(())
        } else {
            Err(EstimatorError::Arity {
                kind: self.name().into(),
                got: m,
            })
        }
    }
}

/// `F[T] = F̃(T(f_1), …, T(f_m))`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CylindricalFunctional {
    pub tests: Vec<TestFunction>,
    pub kind: FunctionalKind,
}

impl CylindricalFunctional {
    pub fn new(tests: Vec<TestFunction>, kind: FunctionalKind) -> Result<Self, EstimatorError> {
        kind.check_arity(tests.len())?;
        if let Some(d) = tests.first().map(|t| t.dim()) {
            if tests.iter().any(|t| t.dim() != d) {
                return Err(EstimatorError::InvalidTestFunction(
                    "mixed dimensions".into(),
                ));
            }
        }
        Ok(Self { tests, kind })
    }

    pub fn constant(value: f64) -> Self {
        Self {
            tests: Vec::new(),
            kind: FunctionalKind::Constant { value },
        }
    }

    pub fn arity(&self) -> usize {
        self.tests.len()
    }

    pub fn sup_bound(&self) -> f64 {
        self.kind.sup_bound()
    }

    pub fn translated(&self, t: &[f64]) -> Self {
        Self {
            tests: self.tests.iter().map(|f| f.translated(t)).collect(),
            kind: self.kind,
        }
    }
}

/// The spherical cap `{θ : ⟨θ/R, e⟩ ≥ cos ρ}` carrying a pulled-back test function.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SupportCap {
    pub center: Vec<f64>,
    pub angle: f64,
    pub radius: f64,
}

impl SupportCap {
    /// Smallest `x_D` over the cap.
    pub fn min_x_d(&self) -> f64 {
        let d = self.center.len() - 2;
        let gamma = self.center[d].clamp(-1.0, 1.0).acos();
        self.radius * (gamma + self.angle).min(std::f64::consts::PI).cos()
    }

    /// Largest `x_D` over the cap.
    pub fn max_x_d(&self) -> f64 {
        let d = self.center.len() - 2;
        let gamma = self.center[d].clamp(-1.0, 1.0).acos();
        self.radius * (gamma - self.angle).max(0.0).cos()
    }
}

fn support_cap(f: &TestFunction, radius: f64) -> Result<SupportCap, EstimatorError> {
    let c = &f.center;
    let norm = c.iter().map(|v| v * v).sum::<f64>().sqrt();
    let dir: Vec<f64> = if norm > 0.0 {
        c.iter().map(|v| v / norm).collect()
    } else {
        let mut e = vec![0.0; c.len()];
        e[0] = 1.0;
        e
    };
    let p1: Vec<f64> = c.iter().zip(&dir).map(|(a, d)| a + f.radius * d).collect();
    let p2: Vec<f64> = c.iter().zip(&dir).map(|(a, d)| a - f.radius * d).collect();
    let u1 = stereographic_inverse(&p1, radius)?.unit();
    let u2 = stereographic_inverse(&p2, radius)?.unit();
    let mid: Vec<f64> = u1.iter().zip(&u2).map(|(a, b)| a + b).collect();
    let mn = mid.iter().map(|v| v * v).sum::<f64>().sqrt();
    let center: Vec<f64> = mid.iter().map(|v| v / mn).collect();
    let cos_full: f64 = u1.iter().zip(&u2).map(|(a, b)| a * b).sum();
    let angle = 0.5 * cos_full.clamp(-1.0, 1.0).acos();
    Ok(SupportCap {
        center,
        angle,
        radius,
    })
}

fn transform_spacing(dim: usize, l_max: usize) -> f64 {
    match dim {
        1 => 2.0 * std::f64::consts::PI / (2 * l_max + 3) as f64,
        _ => std::f64::consts::PI / (l_max + 1) as f64,
    }
}

/// Quadrature nodes covering a cap, with surface weights.
fn cap_rule(cap: &SupportCap, l_max: usize) -> (Vec<SpherePoint>, Vec<f64>) {
    let r = cap.radius;
    let dim = cap.center.len() - 1;
    let panels = ((2.0 * cap.angle * (l_max + 1) as f64 / 2.0).ceil() as usize).max(8);
    match dim {
        1 => {
            let theta0 = cap.center[0].atan2(-cap.center[1]);
            let (t, w) = composite_gauss(theta0 - cap.angle, theta0 + cap.angle, panels, 16);
            (
                t.iter().map(|th| circle_point(*th, r)).collect(),
                w.iter().map(|w| w * r).collect(),
            )
        }
        _ => {
            let e = &cap.center;
            // Orthonormal frame (e, a, b).
            let pick = if e[0].abs() < 0.9 {
                [1.0, 0.0, 0.0]
            } else {
                [0.0, 1.0, 0.0]
            };
            let dot: f64 = pick.iter().zip(e).map(|(p, q)| p * q).sum();
            let mut a: Vec<f64> = pick.iter().zip(e).map(|(p, q)| p - dot * q).collect();
            let an = a.iter().map(|v| v * v).sum::<f64>().sqrt();
            a.iter_mut().for_each(|v| *v /= an);
            let b = [
                e[1] * a[2] - e[2] * a[1],
                e[2] * a[0] - e[0] * a[2],
                e[0] * a[1] - e[1] * a[0],
            ];
            let (beta, wb) = composite_gauss(0.0, cap.angle, panels.div_ceil(2).max(8), 16);
            let n_psi = 2 * l_max + 64;
            let dpsi = 2.0 * std::f64::consts::PI / n_psi as f64;
            let mut nodes = Vec::with_capacity(beta.len() * n_psi);
            let mut weights = Vec::with_capacity(beta.len() * n_psi);
            for (bt, w) in beta.iter().zip(&wb) {
                let (sb, cb) = bt.sin_cos();
                for j in 0..n_psi {
                    let (sp, cp) = (dpsi * j as f64).sin_cos();
                    let u: Vec<f64> = (0..3)
                        .map(|i| cb * e[i] + sb * (cp * a[i] + sp * b[i]))
                        .collect();
                    nodes.push(SpherePoint::from_unit(&u, r));
                    weights.push(r * r * sb * w * dpsi);
                }
            }
            (nodes, weights)
        }
    }
}

/// Harmonic coefficients of `f ∘ 𝔰` on the radius-`R` sphere, by direct quadrature over
/// the support cap.
pub fn pull_back_test(
    f: &TestFunction,
    radius: f64,
    l_max: usize,
) -> Result<(SpectralField, SupportCap), EstimatorError> {
    let dim = f.dim();
    if dim != 1 && dim != 2 {
        return Err(HarmonicsError::UnsupportedDimension(dim).into());
    }
    let cap = support_cap(f, radius)?;
    let n_c = coefficient_count(dim, l_max);
    let (nodes, weights) = cap_rule(&cap, l_max);
    let scale = radius.powi(dim as i32);
    let mut coeffs = vec![0.0; n_c];
    let mut row = vec![0.0; n_c];
    for (p, w) in nodes.iter().zip(&weights) {
        let v = f.eval(&stereographic_project(p)?);
        if v == 0.0 {
            continue;
        }
        basis_row(dim, l_max, &p.unit(), &mut row);
        let wv = w * v / scale;
        for (c, y) in coeffs.iter_mut().zip(&row) {
            *c += wv * y;
        }
    }
    Ok((SpectralField::from_coeffs(dim, radius, l_max, coeffs)?, cap))
}

/// `F̆[φ] = F̃(φ(f_1∘𝔰), …, φ(f_m∘𝔰))` on the truncated coefficient space.
#[derive(Debug, Clone)]
pub struct PulledBackFunctional {
    kind: FunctionalKind,
    tests: Vec<SpectralField>,
    caps: Vec<SupportCap>,
    rows: DMatrix<f64>,
}

impl PulledBackFunctional {
    pub fn from_fields(
        kind: FunctionalKind,
        tests: Vec<SpectralField>,
        caps: Vec<SupportCap>,
    ) -> Result<Self, EstimatorError> {
        kind.check_arity(tests.len())?;
        if let Some(first) = tests.first() {
            for t in &tests {
                first.same_shape(t).map_err(|_| {
                    EstimatorError::ShapeMismatch("test fields differ in shape".into())
                })?;
            }
        }
        let n_c = if tests.is_empty() { 0 } else { tests[0].len() };
        let mut rows = DMatrix::zeros(tests.len(), n_c);
        for (i, t) in tests.iter().enumerate() {
            for (j, c) in t.coeffs().iter().enumerate() {
                rows[(i, j)] = *c;
            }
        }
        Ok(Self {
            kind,
            tests,
            caps,
            rows,
        })
    }

    /// A functional with no pairings, valid for any field shape.
    pub fn constant(value: f64) -> Self {
        Self {
            kind: FunctionalKind::Constant { value },
            tests: Vec::new(),
            caps: Vec::new(),
            rows: DMatrix::zeros(0, 0),
        }
    }

    pub fn kind(&self) -> FunctionalKind {
        self.kind
    }

    pub fn tests(&self) -> &[SpectralField] {
        &self.tests
    }

    pub fn caps(&self) -> &[SupportCap] {
        &self.caps
    }

    pub fn arity(&self) -> usize {
        self.tests.len()
    }

    pub fn sup_bound(&self) -> f64 {
        self.kind.sup_bound()
    }

    /// Whether every test function is supported in `x_D > δ`.
    pub fn in_plus_region(&self, delta: f64) -> bool {
        !self.caps.is_empty() && self.caps.iter().all(|c| c.min_x_d() > delta)
    }

    /// Fraction of the `H^k` mass of each pulled-back test function above `l_max/2`.
    pub fn tail_fractions(&self, k: i32) -> Vec<f64> {
        self.tests
            .iter()
            .map(|t| {
                let cut = t.l_max() / 2;
                let mut hi = 0.0;
                let mut all = 0.0;
                for (i, c) in t.coeffs().iter().enumerate() {
                    let l = degree_of(t.dim(), i);
                    let v = (eigenvalue(t.dim(), l) + 1.0).powi(k) * c * c;
                    all += v;
                    if l > cut {
                        hi += v;
                    }
                }
                if all > 0.0 {
                    hi / all
                } else {
                    0.0
                }
            })
            .collect()
    }

    /// The functional with every test field replaced by `map(test)`.
    pub fn map_tests(&self, map: impl Fn(&SpectralField) -> SpectralField) -> Self {
        let tests: Vec<SpectralField> = self.tests.iter().map(map).collect();
        Self::from_fields(self.kind, tests, self.caps.clone()).expect("shape is preserved")
    }

    /// `F̆_Θ[φ] = F̆[Θφ]`.
    pub fn reflected(&self) -> Self {
        let mut out = self.map_tests(reflect_field);
        for c in out.caps.iter_mut() {
            let d = c.center.len() - 2;
            c.center[d] = -c.center[d];
        }
        out
    }

    fn check_field(&self, n_c: usize) -> Result<(), EstimatorError> {
        if self.arity() > 0 && self.rows.ncols() != n_c {
            return Err(EstimatorError::ShapeMismatch(format!(
                "functional built for {} coefficients, field has {}",
                self.rows.ncols(),
                n_c
            )));
        }
        Ok(())
    }

    /// Values on every column of a coefficient batch.
    pub fn evaluate_batch(&self, batch: &DMatrix<f64>) -> Result<Vec<f64>, EstimatorError> {
        self.check_field(batch.nrows())?;
        if self.arity() == 0 {
            return Ok(vec![self.kind.eval(&[]); batch.ncols()]);
        }
        let pairings = &self.rows * batch;
        Ok((0..batch.ncols())
            .map(|j| self.kind.eval(pairings.column(j).as_slice()))
            .collect())
    }

    pub fn pairings(&self, phi: &SpectralField) -> Result<Vec<f64>, EstimatorError> {
        self.check_field(phi.len())?;
        Ok(self
            .tests
            .iter()
            .map(|t| {
                t.coeffs()
                    .iter()
                    .zip(phi.coeffs())
                    .map(|(a, b)| a * b)
                    .sum()
            })
            .collect())
    }
}

/// Pulls every test function of `functional` back to the radius-`R` sphere.
pub fn pull_back(
    functional: &CylindricalFunctional,
    radius: f64,
    l_max: usize,
) -> Result<PulledBackFunctional, EstimatorError> {
    let mut tests = Vec::new();
    let mut caps = Vec::new();
    for (index, f) in functional.tests.iter().enumerate() {
        let (field, cap) = pull_back_test(f, radius, l_max)?;
        let spacing = transform_spacing(f.dim(), l_max);
        if 2.0 * cap.angle < spacing {
            return Err(EstimatorError::Resolution {
                index,
                support: 2.0 * cap.angle,
                spacing,
            });
        }
        tests.push(field);
        caps.push(cap);
    }
    if tests.is_empty() {
        return Ok(PulledBackFunctional::constant(functional.kind.eval(&[])));
    }
    PulledBackFunctional::from_fields(functional.kind, tests, caps)
}

pub fn evaluate_functional(
    f: &PulledBackFunctional,
    phi: &SpectralField,
) -> Result<f64, EstimatorError> {
    Ok(f.kind.eval(&f.pairings(phi)?))
}

/// Which action integral enters the weights.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ActionRegion {
    Full,
    CollarExcluded,
}

impl ActionRegion {
    pub fn select(&self, a: &RegionActions) -> f64 {
        match self {
            ActionRegion::Full => a.full(),
            ActionRegion::CollarExcluded => a.collar_excluded(),
        }
    }
}

/// Everything needed to evaluate the regularized action at cutoff index `n`.
#[derive(Debug, Clone)]
pub struct Model {
    pub dim: usize,
    pub l_max: usize,
    pub n: u32,
    pub radius: f64,
    /// `δ`; the collar half-width is `half_width = α δ`.
    pub delta: f64,
    pub half_width: f64,
    pub schedule: Option<CutoffSchedule>,
    pub kernel: ZonalKernel,
    pub lagrangian: Arc<dyn Lagrangian>,
    pub laplacian_powers: u32,
    evaluator: ActionEvaluator,
}

impl Model {
    /// Model for schedule index `n`: `R = R_n`, kernel at `Λ_n`, collar `α/Λ_n`.
    pub fn from_schedule(
        schedule: &CutoffSchedule,
        n: u32,
        l_max: usize,
        mollifier: &MollifierSpec,
        lagrangian: Arc<dyn Lagrangian>,
        laplacian_powers: u32,
    ) -> Result<Self, EstimatorError> {
        schedule.validate()?;
        let radius = schedule.radius_at(n);
        let kernel = build_kernel(
            mollifier,
            schedule.lambda_at(n),
            radius,
            schedule.dim,
            l_max,
        )?;
        let mut model = Self::new(
            schedule.dim,
            radius,
            l_max,
            n,
            kernel,
            lagrangian,
            laplacian_powers,
            schedule.collar_at(n),
        )?;
        model.delta = schedule.delta_at(n);
        model.schedule = Some(*schedule);
        Ok(model)
    }

    #[allow(clippy::too_many_arguments)]
    pub fn new(
        dim: usize,
        radius: f64,
        l_max: usize,
        n: u32,
        kernel: ZonalKernel,
        lagrangian: Arc<dyn Lagrangian>,
        laplacian_powers: u32,
        half_width: f64,
    ) -> Result<Self, EstimatorError> {
        if kernel.l_max() != l_max {
            return Err(EstimatorError::ShapeMismatch("kernel band limit".into()));
        }
        if lagrangian.arity() != laplacian_powers as usize + 1 {
            return Err(InteractionError::ArityMismatch {
                expected: lagrangian.arity(),
                got: laplacian_powers as usize + 1,
            }
            .into());
        }
        let grid = build_region_quadrature(dim, radius, half_width, l_max, RegionRule::default())?;
        let spec = RegionSpec {
            kind: RegionKind::Full,
            delta: half_width,
            alpha: 1.0,
        };
        let evaluator = ActionEvaluator::new(&grid, &kernel, laplacian_powers, &spec);
        Ok(Self {
            dim,
            l_max,
            n,
            radius,
            delta: half_width,
            half_width,
            schedule: None,
            kernel,
            lagrangian,
            laplacian_powers,
            evaluator,
        })
    }

    /// `𝔐_n R_n^D / Λ_n` when the model comes from a schedule.
    pub fn ratio(&self) -> Option<f64> {
        self.schedule
            .map(|s| crate::regularization::ratio(&s, self.n))
    }

    pub fn evaluator(&self) -> &ActionEvaluator {
        &self.evaluator
    }

    /// Evaluator on the same nodes restricted to `kind`.
    pub fn evaluator_for(&self, kind: RegionKind) -> Result<ActionEvaluator, EstimatorError> {
        let grid = build_region_quadrature(
            self.dim,
            self.radius,
            self.half_width,
            self.l_max,
            RegionRule::default(),
        )?;
        let spec = RegionSpec {
            kind,
            delta: self.half_width,
            alpha: 1.0,
        };
        Ok(ActionEvaluator::new(
            &grid,
            &self.kernel,
            self.laplacian_powers,
            &spec,
        ))
    }

    /// The same model with a different Lagrangian.
    pub fn with_lagrangian(&self, lagrangian: Arc<dyn Lagrangian>) -> Self {
        Self {
            lagrangian,
            ..self.clone()
        }
    }

    /// Field-dependent action parts of a batch.
    pub fn actions(&self, batch: &DMatrix<f64>) -> Result<Vec<RegionActions>, EstimatorError> {
        Ok(self
            .evaluator
            .variable_actions(self.lagrangian.as_ref(), batch)?)
    }

    pub fn sampler(&self, k: i32, seed: u64) -> Result<FreeFieldSampler, EstimatorError> {
        Ok(FreeFieldSampler::new(
            self.dim,
            self.radius,
            self.l_max,
            k,
            seed,
        )?)
    }
}

/// Self-normalized weighted mean with its delta-method standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WeightedMean {
    pub value: f64,
    pub std_error: f64,
    pub ess: f64,
    pub samples: usize,
}

/// Normalized weights `exp(lw_i − max lw)` and their sum.
pub fn centered_weights(log_weights: &[f64]) -> Vec<f64> {
    let c = log_weights
        .iter()
        .cloned()
        .fold(f64::NEG_INFINITY, f64::max);
    log_weights.iter().map(|lw| (lw - c).exp()).collect()
}

/// `Σ w F / Σ w` with `w = exp(lw − max lw)`, clamped into `[min F, max F]`.
pub fn weighted_mean(log_weights: &[f64], values: &[f64]) -> Result<WeightedMean, EstimatorError> {
    let n = values.len();
    if n < 2 {
        return Err(EstimatorError::TooFewSamples(n));
    }
    assert_eq!(log_weights.len(), n);
    let w = centered_weights(log_weights);
    weighted_mean_from_weights(&w, values)
}

pub fn weighted_mean_from_weights(
    w: &[f64],
    values: &[f64],
) -> Result<WeightedMean, EstimatorError> {
    let n = values.len();
    if n < 2 {
        return Err(EstimatorError::TooFewSamples(n));
    }
    let sw = pairwise_sum(w);
    let sw2 = pairwise_sum(&w.iter().map(|x| x * x).collect::<Vec<_>>());
    let ess = ((sw * sw) / sw2).min(n as f64);
    if !(ess >= 2.0) {
        return Err(EstimatorError::DegenerateWeights { ess });
    }
    let num = pairwise_sum(&w.iter().zip(values).map(|(a, b)| a * b).collect::<Vec<_>>());
    let lo = values.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let value = (num / sw).clamp(lo, hi);
    let var = pairwise_sum(
        &w.iter()
            .zip(values)
            .map(|(a, b)| a * a * (b - value) * (b - value))
            .collect::<Vec<_>>(),
    );
    // Small-sample correction n/(n−1) on the delta-method variance.
    let std_error = (var * n as f64 / (n as f64 - 1.0)).sqrt() / sw;
    Ok(WeightedMean {
        value,
        std_error,
        ess,
        samples: n,
    })
}

/// Samples per work unit; fixed so results do not depend on the worker count.
pub const BATCH: usize = 256;

/// Runs `work(start, count)` over `0..samples` in fixed batches and concatenates the
/// per-sample outputs in order.
pub fn run_batches<T, F>(samples: usize, work: F) -> Result<Vec<T>, EstimatorError>
where
    T: Send,
    F: Fn(u64, usize) -> Result<Vec<T>, EstimatorError> + Sync,
{
    let batches = samples.div_ceil(BATCH);
    let parts: Result<Vec<Vec<T>>, EstimatorError> = (0..batches)
        .into_par_iter()
        .map(|b| {
            let start = b * BATCH;
            let count = BATCH.min(samples - start);
            work(start as u64, count)
        })
        .collect();
    Ok(parts?.into_iter().flatten().collect())
}

/// One estimate of `I_n(F)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimateReport {
    pub value: f64,
    pub std_error: f64,
    pub samples: usize,
    pub ess: f64,
    pub seed: u64,
    pub n: u32,
    pub sup_bound: f64,
}

impl EstimateReport {
    fn from_mean(m: WeightedMean, seed: u64, n: u32, sup_bound: f64) -> Self {
        Self {
            value: m.value,
            std_error: m.std_error,
            samples: m.samples,
            ess: m.ess,
            seed,
            n,
            sup_bound,
        }
    }
}

/// Per-sample log-weights and functional values for a set of functionals on shared samples.
pub struct SampleTable {
    pub log_weights: Vec<f64>,
    /// `values[j][i]`: functional `j` on sample `i`.
    pub values: Vec<Vec<f64>>,
}

/// Draws `samples` fields and evaluates `functionals` and the action on each.
pub fn sample_table(
    functionals: &[&PulledBackFunctional],
    model: &Model,
    region: ActionRegion,
    sampler: &FreeFieldSampler,
    samples: usize,
) -> Result<SampleTable, EstimatorError> {
    if samples < 2 {
        return Err(EstimatorError::TooFewSamples(samples));
    }
    if sampler.l_max() != model.l_max
        || sampler.dim() != model.dim
        || sampler.radius() != model.radius
    {
        return Err(EstimatorError::ShapeMismatch(
            "sampler does not match the model".into(),
        ));
    }
    let rows = run_batches(samples, |start, count| {
        let batch = sampler.sample_batch(start, count);
        let actions = model.actions(&batch)?;
        let vals: Vec<Vec<f64>> = functionals
            .iter()
            .map(|f| f.evaluate_batch(&batch))
            .collect::<Result<_, _>>()?;
        Ok((0..count)
            .map(|i| {
                (
                    -region.select(&actions[i]),
                    vals.iter().map(|v| v[i]).collect::<Vec<f64>>(),
                )
            })
            .collect())
    })?;
    let mut log_weights = Vec::with_capacity(samples);
    let mut values = vec![Vec::with_capacity(samples); functionals.len()];
    for (lw, v) in rows {
        log_weights.push(lw);
        for (j, x) in v.into_iter().enumerate() {
            values[j].push(x);
        }
    }
    Ok(SampleTable {
        log_weights,
        values,
    })
}

/// Reweighted estimate of `I_n(F)` from `samples` free-field draws.
pub fn estimate(
    functional: &PulledBackFunctional,
    model: &Model,
    sampler: &FreeFieldSampler,
    samples: usize,
) -> Result<EstimateReport, EstimatorError> {
    estimate_with_region(functional, model, ActionRegion::Full, sampler, samples)
}

pub fn estimate_with_region(
    functional: &PulledBackFunctional,
    model: &Model,
    region: ActionRegion,
    sampler: &FreeFieldSampler,
    samples: usize,
) -> Result<EstimateReport, EstimatorError> {
    let t = sample_table(&[functional], model, region, sampler, samples)?;
    let m = weighted_mean(&t.log_weights, &t.values[0])?;
    Ok(EstimateReport::from_mean(
        m,
        sampler.seed(),
        model.n,
        functional.sup_bound(),
    ))
}

/// Reweighted estimate of `I_n(‖φ‖_{H^{−k}})`, reported as a moment diagnostic.
pub fn moment_estimate(
    model: &Model,
    sampler: &FreeFieldSampler,
    samples: usize,
) -> Result<EstimateReport, EstimatorError> {
    let k = sampler.k();
    let rows = run_batches(samples, |start, count| {
        let batch = sampler.sample_batch(start, count);
        let actions = model.actions(&batch)?;
        Ok((0..count)
            .map(|i| {
                let f = SpectralField::from_coeffs(
                    model.dim,
                    model.radius,
                    model.l_max,
                    batch.column(i).as_slice().to_vec(),
                )
                .expect("shape");
                (-actions[i].full(), sobolev_norm(&f, -k))
            })
            .collect())
    })?;
    let (lw, v): (Vec<f64>, Vec<f64>) = rows.into_iter().unzip();
    let m = weighted_mean(&lw, &v)?;
    Ok(EstimateReport::from_mean(
        m,
        sampler.seed(),
        model.n,
        f64::INFINITY,
    ))
}

/// Bounded-sequence summary of `I_1 … I_N`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SequenceDiagnostics {
    pub max_abs: f64,
    pub cesaro_mean: f64,
    pub last_window_mean: f64,
    pub window: usize,
    pub cauchy_spread: f64,
    pub converged: bool,
}

/// Cesàro mean, last-quarter window mean and a Cauchy test at `tol` over the window.
pub fn sequence_diagnostics(
    values: &[f64],
    sup_bound: f64,
    tol: f64,
) -> Result<SequenceDiagnostics, EstimatorError> {
    if values.is_empty() {
        return Err(EstimatorError::EmptySequence);
    }
    let max_abs = values.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    if max_abs > sup_bound {
        return Err(EstimatorError::BoundViolation {
            value: max_abs,
            bound: sup_bound,
        });
    }
    let n = values.len();
    let window = (n / 4).max(1);
    let tail = &values[n - window..];
    let hi = tail.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let lo = tail.iter().cloned().fold(f64::INFINITY, f64::min);
    let spread = hi - lo;
    Ok(SequenceDiagnostics {
        max_abs,
        cesaro_mean: pairwise_sum(values) / n as f64,
        last_window_mean: pairwise_sum(tail) / window as f64,
        window,
        cauchy_spread: spread,
        converged: spread <= tol,
    })
}
