//! Bounded local Lagrangians of `(φ_Λ, ∇²φ_Λ, …, (∇²)^N φ_Λ)` and their action integrals
//! over the sphere and its half-space regions.

use std::sync::Arc;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{classify_x_d, QuadratureGrid, Region, RegionKind, RegionSpec};
use crate::harmonics::{basis_row, coefficient_count, degree_of, eigenvalue, SpectralField};
use crate::quadrature::pairwise_sum;
use crate::regularization::{PowerLaw, ZonalKernel};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum InteractionError {
    #[error("Lagrangian returned a non-finite value {value} at a node")]
    NonFinite { value: f64 },
    #[error("Lagrangian expects {expected} arguments but the evaluator provides {got}")]
    ArityMismatch { expected: usize, got: usize },
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
}

/// A bounded local Lagrangian `L(v_0, …, v_N)` with `v_j = (∇²)^j φ_Λ`.
///
/// The value is split into a field-dependent part and a constant part; the constant
/// contributes `offset · |region|` to an action and is carried separately.
pub trait Lagrangian: Send + Sync + std::fmt::Debug {
    fn arity(&self) -> usize;
    fn eval(&self, args: &[f64]) -> f64;
    fn offset(&self) -> f64 {
        0.0
    }
    /// Upper bound on `|eval + offset|`.
    fn sup_bound(&self) -> f64;
    fn is_zero(&self) -> bool {
        false
    }
    fn name(&self) -> String;
}

/// `L ≡ 0`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ZeroLagrangian {
    pub arity: usize,
}

impl Lagrangian for ZeroLagrangian {
    fn arity(&self) -> usize {
        self.arity
    }
    fn eval(&self, _: &[f64]) -> f64 {
        0.0
    }
    fn sup_bound(&self) -> f64 {
        0.0
    }
    fn is_zero(&self) -> bool {
        true
    }
    fn name(&self) -> String {
        "zero".into()
    }
}

/// `L ≡ c`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConstantLagrangian {
    pub value: f64,
    pub arity: usize,
}

impl Lagrangian for ConstantLagrangian {
    fn arity(&self) -> usize {
        self.arity
    }
    fn eval(&self, _: &[f64]) -> f64 {
        0.0
    }
    fn offset(&self) -> f64 {
        self.value
    }
    fn sup_bound(&self) -> f64 {
        self.value.abs()
    }
    fn is_zero(&self) -> bool {
        true
    }
    fn name(&self) -> String {
        format!("constant({})", self.value)
    }
}

/// Smooth odd clamp of `x` at scale `s`: `s·tanh(x/s)`.
pub fn clamp_identity(x: f64, s: f64) -> f64 {
    s * (x / s).tanh()
}

/// Smooth clamp of `x²`: `s²·tanh(x²/s²)`.
pub fn clamp_square(x: f64, s: f64) -> f64 {
    let s2 = s * s;
    s2 * (x * x / s2).tanh()
}

/// Smooth clamp of `x⁴`: `s⁴·tanh(x⁴/s⁴)`.
pub fn clamp_quartic(x: f64, s: f64) -> f64 {
    let s4 = (s * s) * (s * s);
    let x2 = x * x;
    s4 * (x2 * x2 / s4).tanh()
}

/// `L(u, …) = s²·tanh(u²/s²)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClampedSquare {
    pub scale: f64,
    pub coupling: f64,
    pub arity: usize,
}

impl Lagrangian for ClampedSquare {
    fn arity(&self) -> usize {
        self.arity
    }
    fn eval(&self, args: &[f64]) -> f64 {
        self.coupling * clamp_square(args[0], self.scale)
    }
    fn sup_bound(&self) -> f64 {
        self.coupling.abs() * self.scale * self.scale
    }
    fn name(&self) -> String {
        format!("clamped_square(s={}, g={})", self.scale, self.coupling)
    }
}

/// Bounded φ⁴ approximant `A f(u·w) + B g(u) + C h(u)` with `u = φ_Λ`, `w = ∇²φ_Λ`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Phi4 {
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub scale: f64,
}

impl Lagrangian for Phi4 {
    fn arity(&self) -> usize {
        2
    }
    fn eval(&self, args: &[f64]) -> f64 {
        let u = args[0];
        let w = args[1];
        let mut v = 0.0;
        if self.a != 0.0 {
            v += self.a * clamp_identity(u * w, self.scale);
        }
        v + self.b * clamp_square(u, self.scale) + self.c * clamp_quartic(u, self.scale)
    }
    fn sup_bound(&self) -> f64 {
        let s = self.scale;
        self.a.abs() * s + self.b.abs() * s * s + self.c.abs() * (s * s) * (s * s)
    }
    fn is_zero(&self) -> bool {
        self.a == 0.0 && self.b == 0.0 && self.c == 0.0
    }
    fn name(&self) -> String {
        format!(
            "phi4(A={}, B={}, C={}, s={})",
            self.a, self.b, self.c, self.scale
        )
    }
}

/// Bare constants and clamp scale as power laws in `n`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Phi4Family {
    pub a: PowerLaw,
    pub b: PowerLaw,
    pub c: PowerLaw,
    pub scale: PowerLaw,
}

impl Phi4Family {
    /// Fixed constants with clamp scale `s_n = n^{1/4}`; `𝔐_n = 0.05(√n + n) ≤ n`.
    pub fn bounded_default() -> Self {
        Self {
            a: PowerLaw::new(0.0, 0.0),
            b: PowerLaw::new(0.05, 0.0),
            c: PowerLaw::new(0.05, 0.0),
            scale: PowerLaw::new(1.0, 0.25),
        }
    }
}

pub fn phi4_evaluator(family: &Phi4Family, n: u32) -> Phi4 {
    Phi4 {
        a: family.a.eval(n),
        b: family.b.eval(n),
        c: family.c.eval(n),
        scale: family.scale.eval(n),
    }
}

/// `L` plus a constant.
#[derive(Debug, Clone)]
pub struct Shifted {
    pub inner: Arc<dyn Lagrangian>,
    pub shift: f64,
}

impl Lagrangian for Shifted {
    fn arity(&self) -> usize {
        self.inner.arity()
    }
    fn eval(&self, args: &[f64]) -> f64 {
        self.inner.eval(args)
    }
    fn offset(&self) -> f64 {
        self.inner.offset() + self.shift
    }
    fn sup_bound(&self) -> f64 {
        self.inner.sup_bound() + self.shift.abs()
    }
    fn is_zero(&self) -> bool {
        self.inner.is_zero()
    }
    fn name(&self) -> String {
        format!("{} + {}", self.inner.name(), self.shift)
    }
}

/// `(L + 𝔐, 2𝔐)`; the shifted Lagrangian is non-negative when `|L| ≤ 𝔐`.
pub fn normalize_nonnegative(l: Arc<dyn Lagrangian>, sup: f64) -> (Shifted, f64) {
    (
        Shifted {
            inner: l,
            shift: sup,
        },
        2.0 * sup,
    )
}

/// Action integrals split by region.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct RegionActions {
    pub plus: f64,
    pub minus: f64,
    pub collar: f64,
}

impl RegionActions {
    /// Action with the collar left out.
    pub fn collar_excluded(&self) -> f64 {
        self.plus + self.minus
    }

    /// `(plus + minus) + collar`.
    pub fn full(&self) -> f64 {
        self.collar_excluded() + self.collar
    }

    pub fn get(&self, kind: RegionKind) -> f64 {
        match kind {
            RegionKind::Plus => self.plus,
            RegionKind::Minus => self.minus,
            RegionKind::Collar => self.collar,
            RegionKind::Full => self.full(),
        }
    }
}

/// Node-value operator for `(φ_Λ, …, (∇²)^N φ_Λ)` on a fixed node set, applied to many
/// coefficient vectors at once.
#[derive(Debug, Clone)]
pub struct ActionEvaluator {
    arity: usize,
    n_nodes: usize,
    operator: DMatrix<f64>,
    weights: Vec<f64>,
    regions: Vec<Region>,
    measures: RegionActions,
}

impl ActionEvaluator {
    /// Operator for fields of band limit `kernel.l_max()` on the nodes of `grid` that lie
    /// in `include` (classified at `include.half_width()`).
    pub fn new(
        grid: &QuadratureGrid,
        kernel: &ZonalKernel,
        laplacian_powers: u32,
        include: &RegionSpec,
    ) -> Self {
        let dim = grid.dim();
        let l_max = kernel.l_max();
        let n_c = coefficient_count(dim, l_max);
        let arity = laplacian_powers as usize + 1;
        let h = include.half_width();
        let picked: Vec<usize> = (0..grid.len())
            .filter(|i| include.contains(classify_x_d(grid.nodes()[*i].x_d(), h)))
            .collect();
        let n_nodes = picked.len();
        let r2 = grid.radius() * grid.radius();
        let lap: Vec<f64> = (0..=l_max).map(|l| -eigenvalue(dim, l) / r2).collect();
        let mut operator = DMatrix::zeros(arity * n_nodes, n_c);
        let mut row = vec![0.0; n_c];
        for (r, i) in picked.iter().enumerate() {
            basis_row(dim, l_max, &grid.nodes()[*i].unit(), &mut row);
            for (c, y) in row.iter().enumerate() {
                let l = degree_of(dim, c);
                let mut v = y * kernel.multipliers()[l];
                for j in 0..arity {
                    operator[(j * n_nodes + r, c)] = v;
                    v *= lap[l];
                }
            }
        }
        let weights: Vec<f64> = picked.iter().map(|i| grid.weights()[*i]).collect();
        let regions: Vec<Region> = picked
            .iter()
            .map(|i| classify_x_d(grid.nodes()[*i].x_d(), h))
            .collect();
        let measure = |want: Region| {
            let w: Vec<f64> = weights
                .iter()
                .zip(&regions)
                .filter(|(_, r)| **r == want)
                .map(|(w, _)| *w)
                .collect();
            pairwise_sum(&w)
        };
        let measures = RegionActions {
            plus: measure(Region::Plus),
            minus: measure(Region::Minus),
            collar: measure(Region::Collar),
        };
        Self {
            arity,
            n_nodes,
            operator,
            weights,
            regions,
            measures,
        }
    }

    pub fn arity(&self) -> usize {
        self.arity
    }

    pub fn nodes(&self) -> usize {
        self.n_nodes
    }

    /// Measures of the included parts of each region.
    pub fn measures(&self) -> RegionActions {
        self.measures
    }

    pub fn input_dim(&self) -> usize {
        self.operator.ncols()
    }

    /// The evaluator for inputs `x` where the field coefficients are `transform · x`.
    pub fn composed(&self, transform: &DMatrix<f64>) -> Self {
        Self {
            operator: &self.operator * transform,
            ..self.clone()
        }
    }

    /// Field-dependent part of the actions of every column of `batch`.
    pub fn variable_actions(
        &self,
        lagrangian: &dyn Lagrangian,
        batch: &DMatrix<f64>,
    ) -> Result<Vec<RegionActions>, InteractionError> {
        if lagrangian.arity() != self.arity {
            return Err(InteractionError::ArityMismatch {
                expected: lagrangian.arity(),
                got: self.arity,
            });
        }
        if batch.nrows() != self.operator.ncols() {
            return Err(InteractionError::ShapeMismatch(format!(
                "batch has {} rows, evaluator expects {}",
                batch.nrows(),
                self.operator.ncols()
            )));
        }
        if lagrangian.is_zero() {
            return Ok(vec![RegionActions::default(); batch.ncols()]);
        }
        let values = &self.operator * batch;
        let mut out = Vec::with_capacity(batch.ncols());
        let mut args = vec![0.0; self.arity];
        let mut buckets: [Vec<f64>; 3] = Default::default();
        for b in 0..batch.ncols() {
            let col = values.column(b);
            for v in buckets.iter_mut() {
                v.clear();
            }
            for i in 0..self.n_nodes {
                for (j, a) in args.iter_mut().enumerate() {
                    *a = col[j * self.n_nodes + i];
                }
                let v = lagrangian.eval(&args);
                if !v.is_finite() {
                    return Err(InteractionError::NonFinite { value: v });
                }
                let slot = match self.regions[i] {
                    Region::Plus => 0,
                    Region::Minus => 1,
                    Region::Collar => 2,
                };
                buckets[slot].push(self.weights[i] * v);
            }
            out.push(RegionActions {
                plus: pairwise_sum(&buckets[0]),
                minus: pairwise_sum(&buckets[1]),
                collar: pairwise_sum(&buckets[2]),
            });
        }
        Ok(out)
    }

    /// Complete actions including the constant part of the Lagrangian.
    pub fn actions(
        &self,
        lagrangian: &dyn Lagrangian,
        batch: &DMatrix<f64>,
    ) -> Result<Vec<RegionActions>, InteractionError> {
        let c = lagrangian.offset();
        let m = self.measures;
        Ok(self
            .variable_actions(lagrangian, batch)?
            .into_iter()
            .map(|a| RegionActions {
                plus: a.plus + c * m.plus,
                minus: a.minus + c * m.minus,
                collar: a.collar + c * m.collar,
            })
            .collect())
    }
}

/// `∫_region L(φ_Λ, ∇²φ_Λ, …) dΩ_R` for one field, by quadrature over the nodes of
/// `grid` classified into `region`.
pub fn evaluate_action(
    phi: &SpectralField,
    kernel: &ZonalKernel,
    lagrangian: &dyn Lagrangian,
    laplacian_powers: u32,
    grid: &QuadratureGrid,
    region: &RegionSpec,
) -> Result<f64, InteractionError> {
    if phi.l_max() != kernel.l_max() || phi.dim() != grid.dim() || phi.radius() != grid.radius() {
        return Err(InteractionError::ShapeMismatch(
            "field, kernel and grid disagree".into(),
        ));
    }
    let all = RegionSpec {
        kind: RegionKind::Full,
        ..*region
    };
    let ev = ActionEvaluator::new(grid, kernel, laplacian_powers, &all);
    let batch = DMatrix::from_column_slice(phi.len(), 1, phi.coeffs());
    let a = ev.actions(lagrangian, &batch)?[0];
    Ok(a.get(region.kind))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{build_quadrature, build_region_quadrature, RegionRule};
    use crate::harmonics::HarmonicIndex;
    use std::f64::consts::PI;

    #[test]
    fn zero_and_constant_actions() {
        let g = build_quadrature(2, 1.0, 6).unwrap();
        let k = ZonalKernel::identity(6);
        let phi = SpectralField::unit(2, 1.0, 6, HarmonicIndex::new(2, 1)).unwrap();
        let full = RegionSpec::full();
        assert_eq!(
            evaluate_action(&phi, &k, &ZeroLagrangian { arity: 2 }, 1, &g, &full).unwrap(),
            0.0
        );
        let one = ConstantLagrangian {
            value: 1.0,
            arity: 2,
        };
        let a = evaluate_action(&phi, &k, &one, 1, &g, &full).unwrap();
        assert!((a - 4.0 * PI).abs() < 1e-10);
    }

    #[test]
    fn clamped_square_matches_dense_grid() {
        let phi = SpectralField::unit(2, 1.0, 6, HarmonicIndex::new(1, 0)).unwrap();
        let lag = ClampedSquare {
            scale: 0.3,
            coupling: 1.0,
            arity: 1,
        };
        let coarse = build_quadrature(2, 1.0, 24).unwrap();
        let phi24 = phi.with_band_limit(24);
        let k24 = ZonalKernel::identity(24);
        let a = evaluate_action(&phi24, &k24, &lag, 0, &coarse, &RegionSpec::full()).unwrap();
        let dense = build_quadrature(2, 1.0, 200).unwrap();
        let oracle: f64 = dense
            .nodes()
            .iter()
            .zip(dense.weights())
            .map(|(p, w)| w * clamp_square((3.0 / (4.0 * PI)).sqrt() * p.unit()[2], 0.3))
            .sum();
        assert!((a - oracle).abs() < 1e-6, "{a} vs {oracle}");
    }

    #[test]
    fn region_additivity_is_exact() {
        let l_max = 12;
        let g = build_region_quadrature(1, 3.0, 0.2, l_max, RegionRule::default()).unwrap();
        let n = coefficient_count(1, l_max);
        let phi = SpectralField::from_coeffs(
            1,
            3.0,
            l_max,
            (0..n).map(|i| (i as f64 * 0.7).cos()).collect(),
        )
        .unwrap();
        let k = ZonalKernel::identity(l_max);
        let lag = Phi4 {
            a: 0.1,
            b: 0.2,
            c: 0.3,
            scale: 2.0,
        };
        let get = |kind| {
            evaluate_action(&phi, &k, &lag, 1, &g, &RegionSpec::new(kind, 0.2, 1.0)).unwrap()
        };
        let full = get(RegionKind::Full);
        assert_eq!(
            full,
            (get(RegionKind::Plus) + get(RegionKind::Minus)) + get(RegionKind::Collar)
        );
    }

    #[test]
    fn phi4_clamps() {
        assert_eq!(clamp_identity(0.0, 2.0), 0.0);
        assert_eq!(clamp_square(0.0, 2.0), 0.0);
        assert_eq!(clamp_quartic(0.0, 2.0), 0.0);
        let mut last = f64::INFINITY;
        for n in [2.0f64, 4.0, 8.0, 16.0, 32.0] {
            let err = (clamp_quartic(2.0, n) - 16.0).abs();
            assert!(err < last);
            last = err;
        }
        assert!(last < 1e-3);
        let fam = Phi4Family::bounded_default();
        for n in 1..50 {
            assert!(phi4_evaluator(&fam, n).sup_bound() <= n as f64);
        }
    }

    #[test]
    fn normalization_is_nonnegative() {
        let l: Arc<dyn Lagrangian> = Arc::new(ZeroLagrangian { arity: 1 });
        let (s, m) = normalize_nonnegative(l, 1.0);
        assert_eq!(s.eval(&[0.3]) + s.offset(), 1.0);
        assert_eq!(m, 2.0);
    }
}
