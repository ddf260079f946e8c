//! Real spherical-harmonic bases for D = 1 (Fourier modes) and D = 2, the
//! Laplace–Beltrami spectrum, transforms between coefficients and node values, and
//! Sobolev norms in sequence form.
//!
//! Harmonics are orthonormal on the unit sphere; a field on a radius-`R` sphere is
//! evaluated at the unit direction of each point. Coefficients are stored flat, degree
//! by degree. Within a degree the layout is
//!
//! * D = 1, `l ≥ 1`: `m = 0` is `cos(lθ)/√π`, `m = 1` is `sin(lθ)/√π`, with θ the angle
//!   from the south pole towards `+x_1`;
//! * D = 2: `m = 0` is zonal about the `y` axis, `m = 2j − 1` and `m = 2j` carry
//!   `cos(jφ)` and `sin(jφ)` with φ the azimuth in the `(x_1, x_2)` plane.
//!
//! With this layout the reflection `x_D → −x_D` flips exactly the sine-type coefficients.

use std::f64::consts::PI;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{GridLayout, QuadratureGrid, SpherePoint};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum HarmonicsError {
    #[error("degeneracy of degree {l} in dimension {dim} overflows u64")]
    Overflow { dim: usize, l: usize },
    #[error("unsupported dimension {0}; bases exist for D = 1 and D = 2")]
    UnsupportedDimension(usize),
    #[error("field band limit {field} exceeds the grid band limit {grid}")]
    BandLimitMismatch { field: usize, grid: usize },
    #[error("analysis needs a harmonic-exact transform grid")]
    NotATransformGrid,
    #[error("expected {expected} values, got {got}")]
    LengthMismatch { expected: usize, got: usize },
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("index (l = {l}, m = {m}) is outside the basis")]
    IndexOutOfRange { l: usize, m: usize },
}

fn binomial(n: u128, k: u128) -> Option<u128> {
    let k = k.min(n - k);
    let mut c: u128 = 1;
    for i in 0..k {
        c = c.checked_mul(n - i)? / (i + 1);
    }
    Some(c)
}

/// Dimension of the space of degree-`l` harmonics on `𝕊^D`:
/// `(2l + D − 1)(l + D − 2)! / (l! (D − 1)!)`, with `Δ(D, 0) = 1`.
pub fn degeneracy(dim: usize, l: usize) -> Result<u64, HarmonicsError> {
    assert!(dim >= 1, "dimension must be at least 1");
    if l == 0 {
        return Ok(1);
    }
    let overflow = HarmonicsError::Overflow { dim, l };
    let (d, lu) = (dim as u128, l as u128);
    let c = binomial(lu + d - 2, lu - 1).ok_or(overflow.clone())?;
    let total = c.checked_mul(2 * lu + d - 1).ok_or(overflow.clone())? / lu;
    u64::try_from(total).map_err(|_| overflow)
}

/// The positive spectral value `l(l + D − 1)`; `∇²` acts as `−l(l + D − 1)` on the unit sphere.
pub fn eigenvalue(dim: usize, l: usize) -> f64 {
    (l as u64 * (l + dim - 1) as u64) as f64
}

/// Number of coefficients of a field with band limit `l_max`.
pub fn coefficient_count(dim: usize, l_max: usize) -> usize {
    match dim {
        1 => 2 * l_max + 1,
        2 => (l_max + 1) * (l_max + 1),
        _ => (0..=l_max)
            .map(|l| degeneracy(dim, l).expect("small degree") as usize)
            .sum(),
    }
}

fn degree_offset(dim: usize, l: usize) -> usize {
    match dim {
        1 => {
            if l == 0 {
                0
            } else {
                2 * l - 1
            }
        }
        _ => l * l,
    }
}

/// Degree of the coefficient at flat position `i`.
pub fn degree_of(dim: usize, i: usize) -> usize {
    match dim {
        1 => i.div_ceil(2),
        _ => {
            let mut l = (i as f64).sqrt() as usize;
            while l * l > i {
                l -= 1;
            }
            while (l + 1) * (l + 1) <= i {
                l += 1;
            }
            l
        }
    }
}

/// Degree of every flat position up to `l_max`.
pub fn degree_table(dim: usize, l_max: usize) -> Vec<usize> {
    (0..coefficient_count(dim, l_max))
        .map(|i| degree_of(dim, i))
        .collect()
}

/// Whether the basis function at flat position `i` is odd under `x_D → −x_D`.
pub fn is_odd_under_reflection(dim: usize, i: usize) -> bool {
    match dim {
        1 => i > 0 && i % 2 == 0,
        _ => {
            let l = degree_of(dim, i);
            let m = i - l * l;
            m > 0 && m % 2 == 0
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct HarmonicIndex {
    pub l: usize,
    pub m: usize,
}

impl HarmonicIndex {
    pub fn new(l: usize, m: usize) -> Self {
        Self { l, m }
    }
}

/// A band-limited field on `𝕊_R` stored as harmonic coefficients.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectralField {
    dim: usize,
    radius: f64,
    l_max: usize,
    coeffs: Vec<f64>,
}

impl SpectralField {
    pub fn zeros(dim: usize, radius: f64, l_max: usize) -> Self {
        assert!(dim == 1 || dim == 2, "fields exist for D = 1 and D = 2");
        Self {
            dim,
            radius,
            l_max,
            coeffs: vec![0.0; coefficient_count(dim, l_max)],
        }
    }

    pub fn from_coeffs(
        dim: usize,
        radius: f64,
        l_max: usize,
        coeffs: Vec<f64>,
    ) -> Result<Self, HarmonicsError> {
        if dim != 1 && dim != 2 {
            return Err(HarmonicsError::UnsupportedDimension(dim));
        }
        let n = coefficient_count(dim, l_max);
        if coeffs.len() != n {
            return Err(HarmonicsError::LengthMismatch {
                expected: n,
                got: coeffs.len(),
            });
        }
        Ok(Self {
            dim,
            radius,
            l_max,
            coeffs,
        })
    }

    /// A field with a single unit coefficient.
    pub fn unit(
        dim: usize,
        radius: f64,
        l_max: usize,
        index: HarmonicIndex,
    ) -> Result<Self, HarmonicsError> {
        let mut f = Self::zeros(dim, radius, l_max);
        f.set(index, 1.0)?;
        Ok(f)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn radius(&self) -> f64 {
        self.radius
    }

    pub fn l_max(&self) -> usize {
        self.l_max
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    pub fn coeffs_mut(&mut self) -> &mut [f64] {
        &mut self.coeffs
    }

    pub fn into_coeffs(self) -> Vec<f64> {
        self.coeffs
    }

    pub fn len(&self) -> usize {
        self.coeffs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coeffs.is_empty()
    }

    pub fn flat_index(&self, index: HarmonicIndex) -> Result<usize, HarmonicsError> {
        let deg = degeneracy(self.dim, index.l).unwrap_or(0) as usize;
        if index.l > self.l_max || index.m >= deg {
            return Err(HarmonicsError::IndexOutOfRange {
                l: index.l,
                m: index.m,
            });
        }
        Ok(degree_offset(self.dim, index.l) + index.m)
    }

    pub fn get(&self, index: HarmonicIndex) -> Result<f64, HarmonicsError> {
        Ok(self.coeffs[self.flat_index(index)?])
    }

    pub fn set(&mut self, index: HarmonicIndex, value: f64) -> Result<(), HarmonicsError> {
        let i = self.flat_index(index)?;
        self.coeffs[i] = value;
        Ok(())
    }

    pub fn index_of(&self, i: usize) -> HarmonicIndex {
        let l = degree_of(self.dim, i);
        HarmonicIndex {
            l,
            m: i - degree_offset(self.dim, l),
        }
    }

    pub fn indices(&self) -> impl Iterator<Item = HarmonicIndex> + '_ {
        (0..self.coeffs.len()).map(|i| self.index_of(i))
    }

    pub fn same_shape(&self, other: &SpectralField) -> Result<(), HarmonicsError> {
        if self.dim != other.dim || self.l_max != other.l_max || self.radius != other.radius {
            return Err(HarmonicsError::ShapeMismatch(format!(
                "(D={}, R={}, l_max={}) vs (D={}, R={}, l_max={})",
                self.dim, self.radius, self.l_max, other.dim, other.radius, other.l_max
            )));
        }
        Ok(())
    }

    /// `a·self + b·other`.
    pub fn combine(
        &self,
        a: f64,
        other: &SpectralField,
        b: f64,
    ) -> Result<SpectralField, HarmonicsError> {
        self.same_shape(other)?;
        let coeffs = self
            .coeffs
            .iter()
            .zip(&other.coeffs)
            .map(|(x, y)| a * x + b * y)
            .collect();
        Ok(SpectralField {
            coeffs,
            ..self.clone()
        })
    }

    pub fn scaled(&self, a: f64) -> SpectralField {
        SpectralField {
            coeffs: self.coeffs.iter().map(|x| a * x).collect(),
            ..self.clone()
        }
    }

    /// The same field with band limit `l_max`, truncating or zero-padding.
    pub fn with_band_limit(&self, l_max: usize) -> SpectralField {
        let n = coefficient_count(self.dim, l_max);
        let mut coeffs = vec![0.0; n];
        let keep = n.min(self.coeffs.len());
        coeffs[..keep].copy_from_slice(&self.coeffs[..keep]);
        SpectralField {
            dim: self.dim,
            radius: self.radius,
            l_max,
            coeffs,
        }
    }

    /// Sum of squared coefficients per degree.
    pub fn degree_power(&self) -> Vec<f64> {
        let mut p = vec![0.0; self.l_max + 1];
        for (i, c) in self.coeffs.iter().enumerate() {
            p[degree_of(self.dim, i)] += c * c;
        }
        p
    }
}

/// Values of every basis function up to `l_max` at the unit direction `u`, in flat order.
pub fn basis_row(dim: usize, l_max: usize, u: &[f64], out: &mut [f64]) {
    debug_assert_eq!(out.len(), coefficient_count(dim, l_max));
    match dim {
        1 => {
            let theta = u[0].atan2(-u[1]);
            out[0] = 1.0 / (2.0 * PI).sqrt();
            let c = 1.0 / PI.sqrt();
            for l in 1..=l_max {
                let (s, co) = (l as f64 * theta).sin_cos();
                out[2 * l - 1] = c * co;
                out[2 * l] = c * s;
            }
        }
        2 => real_sh_row(l_max, u, out),
        _ => panic!("unsupported dimension {dim}"),
    }
}

/// Real spherical harmonics about the `y` axis: `z = (y − R)/R`, azimuth in `(x_1, x_2)`.
fn real_sh_row(l_max: usize, u: &[f64], out: &mut [f64]) {
    let z = u[2].clamp(-1.0, 1.0);
    let rho = u[0].hypot(u[1]);
    let s = (1.0 - z * z).max(0.0).sqrt();
    let (cphi, sphi) = if rho > 0.0 {
        (u[0] / rho, u[1] / rho)
    } else {
        (1.0, 0.0)
    };
    let sqrt2 = std::f64::consts::SQRT_2;
    // q_mm holds the normalized associated Legendre value at (m, m).
    let mut q_mm = 1.0 / (4.0 * PI).sqrt();
    let (mut cm, mut sm) = (1.0, 0.0);
    for m in 0..=l_max {
        if m > 0 {
            q_mm *= ((2 * m + 1) as f64 / (2 * m) as f64).sqrt() * s;
            let c_new = cm * cphi - sm * sphi;
            sm = sm * cphi + cm * sphi;
            cm = c_new;
        }
        let mut put = |l: usize, q: f64| {
            let base = l * l;
            if m == 0 {
                out[base] = q;
            } else {
                out[base + 2 * m - 1] = sqrt2 * q * cm;
                out[base + 2 * m] = sqrt2 * q * sm;
            }
        };
        put(m, q_mm);
        if m == l_max {
            break;
        }
        let mut q_prev = q_mm;
        let mut q = ((2 * m + 3) as f64).sqrt() * z * q_mm;
        put(m + 1, q);
        let mf = m as f64;
        for l in (m + 2)..=l_max {
            let lf = l as f64;
            let a = ((4.0 * lf * lf - 1.0) / (lf * lf - mf * mf)).sqrt();
            let b = (((lf - 1.0) * (lf - 1.0) - mf * mf) / (4.0 * (lf - 1.0) * (lf - 1.0) - 1.0))
                .sqrt();
            let q_next = a * (z * q - b * q_prev);
            q_prev = q;
            q = q_next;
            put(l, q);
        }
    }
}

/// Value of a field at one point.
pub fn evaluate_at(field: &SpectralField, p: &SpherePoint) -> f64 {
    let mut row = vec![0.0; field.len()];
    basis_row(field.dim, field.l_max, &p.unit(), &mut row);
    row.iter().zip(&field.coeffs).map(|(a, b)| a * b).sum()
}

fn check_grid(
    field_dim: usize,
    field_radius: f64,
    grid: &QuadratureGrid,
) -> Result<(), HarmonicsError> {
    if grid.dim() != field_dim || grid.radius() != field_radius {
        return Err(HarmonicsError::ShapeMismatch(format!(
            "field (D={}, R={}) on grid (D={}, R={})",
            field_dim,
            field_radius,
            grid.dim(),
            grid.radius()
        )));
    }
    Ok(())
}

/// Dense basis table `Y[node, coefficient]` for one grid and band limit.
#[derive(Debug, Clone)]
pub struct SynthesisMatrix {
    dim: usize,
    radius: f64,
    l_max: usize,
    table: DMatrix<f64>,
    /// Quadrature weights divided by `R^D`, for analysis.
    unit_weights: Vec<f64>,
    exact: bool,
}

impl SynthesisMatrix {
    pub fn new(grid: &QuadratureGrid, l_max: usize) -> Result<Self, HarmonicsError> {
        let dim = grid.dim();
        if dim != 1 && dim != 2 {
            return Err(HarmonicsError::UnsupportedDimension(dim));
        }
        if let Some(b) = grid.band_limit() {
            if b < l_max {
                return Err(HarmonicsError::BandLimitMismatch {
                    field: l_max,
                    grid: b,
                });
            }
        }
        let n_c = coefficient_count(dim, l_max);
        let mut table = DMatrix::zeros(grid.len(), n_c);
        let mut row = vec![0.0; n_c];
        for (i, p) in grid.nodes().iter().enumerate() {
            basis_row(dim, l_max, &p.unit(), &mut row);
            for (j, v) in row.iter().enumerate() {
                table[(i, j)] = *v;
            }
        }
        let scale = grid.radius().powi(dim as i32);
        Ok(Self {
            dim,
            radius: grid.radius(),
            l_max,
            table,
            unit_weights: grid.weights().iter().map(|w| w / scale).collect(),
            exact: matches!(grid.layout(), GridLayout::Transform { .. }),
        })
    }

    pub fn l_max(&self) -> usize {
        self.l_max
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn radius(&self) -> f64 {
        self.radius
    }

    pub fn table(&self) -> &DMatrix<f64> {
        &self.table
    }

    pub fn nodes(&self) -> usize {
        self.table.nrows()
    }

    pub fn synthesize(&self, field: &SpectralField) -> Result<Vec<f64>, HarmonicsError> {
        if field.dim != self.dim || field.radius != self.radius {
            return Err(HarmonicsError::ShapeMismatch(
                "field does not match the grid".into(),
            ));
        }
        if field.l_max != self.l_max {
            return Err(HarmonicsError::BandLimitMismatch {
                field: field.l_max,
                grid: self.l_max,
            });
        }
        let c = nalgebra::DVectorView::from_slice(&field.coeffs, field.coeffs.len());
        Ok((&self.table * c).as_slice().to_vec())
    }

    /// Quadrature inner products against every basis function.
    pub fn analyze(&self, values: &[f64]) -> Result<SpectralField, HarmonicsError> {
        if !self.exact {
            return Err(HarmonicsError::NotATransformGrid);
        }
        self.project(values)
    }

    /// Same as [`analyze`](Self::analyze) without requiring an exact grid.
    pub fn project(&self, values: &[f64]) -> Result<SpectralField, HarmonicsError> {
        if values.len() != self.nodes() {
            return Err(HarmonicsError::LengthMismatch {
                expected: self.nodes(),
                got: values.len(),
            });
        }
        let wv: Vec<f64> = values
            .iter()
            .zip(&self.unit_weights)
            .map(|(v, w)| v * w)
            .collect();
        let wv = nalgebra::DVectorView::from_slice(&wv, wv.len());
        let coeffs = self.table.tr_mul(&wv).as_slice().to_vec();
        Ok(SpectralField {
            dim: self.dim,
            radius: self.radius,
            l_max: self.l_max,
            coeffs,
        })
    }
}

/// Node values `Σ φ_{l,m} Y_{l,m}(node)`.
pub fn synthesize(
    field: &SpectralField,
    grid: &QuadratureGrid,
) -> Result<Vec<f64>, HarmonicsError> {
    check_grid(field.dim, field.radius, grid)?;
    if let Some(b) = grid.band_limit() {
        if b < field.l_max {
            return Err(HarmonicsError::BandLimitMismatch {
                field: field.l_max,
                grid: b,
            });
        }
    }
    let mut row = vec![0.0; field.len()];
    Ok(grid
        .nodes()
        .iter()
        .map(|p| {
            basis_row(field.dim, field.l_max, &p.unit(), &mut row);
            row.iter().zip(&field.coeffs).map(|(a, b)| a * b).sum()
        })
        .collect())
}

/// Coefficients up to the grid's band limit from node values.
pub fn analyze(values: &[f64], grid: &QuadratureGrid) -> Result<SpectralField, HarmonicsError> {
    let l_max = grid.band_limit().ok_or(HarmonicsError::NotATransformGrid)?;
    analyze_to(values, grid, l_max)
}

/// Coefficients up to `l_max ≤` the grid's band limit from node values.
pub fn analyze_to(
    values: &[f64],
    grid: &QuadratureGrid,
    l_max: usize,
) -> Result<SpectralField, HarmonicsError> {
    let b = grid.band_limit().ok_or(HarmonicsError::NotATransformGrid)?;
    if l_max > b {
        return Err(HarmonicsError::BandLimitMismatch {
            field: l_max,
            grid: b,
        });
    }
    if values.len() != grid.len() {
        return Err(HarmonicsError::LengthMismatch {
            expected: grid.len(),
            got: values.len(),
        });
    }
    let dim = grid.dim();
    let scale = grid.radius().powi(dim as i32);
    let n_c = coefficient_count(dim, l_max);
    let mut coeffs = vec![0.0; n_c];
    let mut row = vec![0.0; n_c];
    for ((p, w), v) in grid.nodes().iter().zip(grid.weights()).zip(values) {
        basis_row(dim, l_max, &p.unit(), &mut row);
        let wv = w * v / scale;
        for (c, y) in coeffs.iter_mut().zip(&row) {
            *c += wv * y;
        }
    }
    Ok(SpectralField {
        dim,
        radius: grid.radius(),
        l_max,
        coeffs,
    })
}

/// Multiplies the `(l, m)` coefficient by `(−l(l + D − 1)/R²)^N`.
pub fn apply_laplacian_power(field: &SpectralField, n: u32) -> SpectralField {
    if n == 0 {
        return field.clone();
    }
    let r2 = field.radius * field.radius;
    let factors: Vec<f64> = (0..=field.l_max)
        .map(|l| -eigenvalue(field.dim, l) / r2)
        .collect();
    // Repeated multiplication keeps N = a + b bit-identical to applying a then b.
    let coeffs = field
        .coeffs
        .iter()
        .enumerate()
        .map(|(i, c)| {
            let f = factors[degree_of(field.dim, i)];
            (0..n).fold(*c, |acc, _| acc * f)
        })
        .collect();
    SpectralField {
        coeffs,
        ..field.clone()
    }
}

/// `√(Σ (l(l + D − 1) + 1)^order |φ_{l,m}|²)`.
pub fn sobolev_norm(field: &SpectralField, order: i32) -> f64 {
    let weights: Vec<f64> = (0..=field.l_max)
        .map(|l| (eigenvalue(field.dim, l) + 1.0).powi(order))
        .collect();
    field
        .coeffs
        .iter()
        .enumerate()
        .map(|(i, c)| weights[degree_of(field.dim, i)] * c * c)
        .sum::<f64>()
        .sqrt()
}

/// Coefficients of `θ ↦ φ(Θθ)` with `Θ` the reflection `x_D → −x_D`.
pub fn reflect_field(field: &SpectralField) -> SpectralField {
    let coeffs = field
        .coeffs
        .iter()
        .enumerate()
        .map(|(i, c)| {
            if is_odd_under_reflection(field.dim, i) {
                -c
            } else {
                *c
            }
        })
        .collect();
    SpectralField {
        coeffs,
        ..field.clone()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::build_quadrature;

    #[test]
    fn degeneracy_examples() {
        assert_eq!(degeneracy(2, 0).unwrap(), 1);
        assert_eq!(degeneracy(2, 1).unwrap(), 3);
        assert_eq!(degeneracy(3, 1).unwrap(), 4);
        assert_eq!(degeneracy(1, 7).unwrap(), 2);
        assert!(matches!(
            degeneracy(60, 60),
            Err(HarmonicsError::Overflow { .. })
        ));
    }

    #[test]
    fn eigenvalue_examples() {
        assert_eq!(eigenvalue(2, 0), 0.0);
        assert_eq!(eigenvalue(2, 1), 2.0);
        for l in 0..30 {
            assert_eq!(eigenvalue(1, l), (l * l) as f64);
        }
    }

    #[test]
    fn layout_matches_degeneracy() {
        for dim in [1, 2] {
            for l_max in 0..12 {
                let total: u64 = (0..=l_max).map(|l| degeneracy(dim, l).unwrap()).sum();
                assert_eq!(total as usize, coefficient_count(dim, l_max));
                for i in 0..coefficient_count(dim, l_max) {
                    let l = degree_of(dim, i);
                    assert!(i >= degree_offset(dim, l));
                    assert!(i < degree_offset(dim, l) + degeneracy(dim, l).unwrap() as usize);
                }
            }
        }
    }

    #[test]
    fn zonal_degree_one_matches_closed_form() {
        let g = build_quadrature(2, 1.0, 8).unwrap();
        let f = SpectralField::unit(2, 1.0, 8, HarmonicIndex::new(1, 0)).unwrap();
        let v = synthesize(&f, &g).unwrap();
        let c = (3.0 / (4.0 * PI)).sqrt();
        for (p, val) in g.nodes().iter().zip(&v) {
            assert!((val - c * p.unit()[2]).abs() < 1e-12);
        }
    }

    #[test]
    fn constant_and_zero_fields() {
        let g = build_quadrature(1, 2.0, 6).unwrap();
        let mut f = SpectralField::zeros(1, 2.0, 6);
        assert!(synthesize(&f, &g).unwrap().iter().all(|v| *v == 0.0));
        f.set(HarmonicIndex::new(0, 0), 3.0).unwrap();
        for v in synthesize(&f, &g).unwrap() {
            assert!((v - 3.0 / (2.0 * PI).sqrt()).abs() < 1e-14);
        }
        let back = analyze(&vec![1.5; g.len()], &g).unwrap();
        assert!((back.coeffs()[0] - 1.5 * (2.0 * PI).sqrt()).abs() < 1e-12);
        assert!(back.coeffs()[1..].iter().all(|c| c.abs() < 1e-12));
    }

    #[test]
    fn round_trip_small() {
        for dim in [1, 2] {
            let l_max = 10;
            let g = build_quadrature(dim, 1.7, l_max).unwrap();
            let n = coefficient_count(dim, l_max);
            let coeffs: Vec<f64> = (0..n)
                .map(|i| ((i * 7919) % 13) as f64 / 13.0 - 0.5)
                .collect();
            let f = SpectralField::from_coeffs(dim, 1.7, l_max, coeffs).unwrap();
            let back = analyze(&synthesize(&f, &g).unwrap(), &g).unwrap();
            for (a, b) in f.coeffs().iter().zip(back.coeffs()) {
                assert!((a - b).abs() < 1e-12);
            }
            let s = SynthesisMatrix::new(&g, l_max).unwrap();
            let back2 = s.analyze(&s.synthesize(&f).unwrap()).unwrap();
            for (a, b) in f.coeffs().iter().zip(back2.coeffs()) {
                assert!((a - b).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn band_limit_mismatch_is_reported() {
        let g = build_quadrature(2, 1.0, 4).unwrap();
        let f = SpectralField::zeros(2, 1.0, 6);
        assert!(matches!(
            synthesize(&f, &g),
            Err(HarmonicsError::BandLimitMismatch { .. })
        ));
        assert!(matches!(
            analyze(&[0.0; 3], &g),
            Err(HarmonicsError::LengthMismatch { .. })
        ));
    }

    #[test]
    fn laplacian_examples() {
        let f = SpectralField::unit(2, 1.0, 4, HarmonicIndex::new(1, 0)).unwrap();
        assert_eq!(apply_laplacian_power(&f, 0), f);
        assert_eq!(
            apply_laplacian_power(&f, 1)
                .get(HarmonicIndex::new(1, 0))
                .unwrap(),
            -2.0
        );
        let g = SpectralField::from_coeffs(2, 3.0, 4, (0..25).map(|i| i as f64 * 0.1).collect())
            .unwrap();
        let twice = apply_laplacian_power(&apply_laplacian_power(&g, 1), 1);
        assert_eq!(apply_laplacian_power(&g, 2), twice);
    }

    #[test]
    fn sobolev_examples() {
        let f = SpectralField::unit(2, 1.0, 4, HarmonicIndex::new(0, 0)).unwrap();
        for k in [-3, 0, 2] {
            assert_eq!(sobolev_norm(&f, k), 1.0);
        }
        let f = SpectralField::unit(2, 1.0, 4, HarmonicIndex::new(1, 0)).unwrap();
        assert!((sobolev_norm(&f, 1) - 3f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn reflection_flips_x_d() {
        for dim in [1, 2] {
            let l_max = 7;
            let g = build_quadrature(dim, 1.0, l_max).unwrap();
            let n = coefficient_count(dim, l_max);
            let f = SpectralField::from_coeffs(
                dim,
                1.0,
                l_max,
                (0..n).map(|i| (i as f64).sin()).collect(),
            )
            .unwrap();
            let rf = reflect_field(&f);
            for p in g.nodes() {
                let mut u = p.unit();
                u[dim - 1] = -u[dim - 1];
                let q = SpherePoint::from_unit(&u, 1.0);
                assert!((evaluate_at(&rf, p) - evaluate_at(&f, &q)).abs() < 1e-12);
            }
            assert_eq!(reflect_field(&rf), f);
        }
    }
}
