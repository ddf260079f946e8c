//! The sphere `x² + (y − R)² = R²` in `ℝ^{D+1}`, its stereographic chart, quadrature
//! rules for the surface measure and the half-space/collar regions used by the
//! reflection machinery.
//!
//! Points are stored in embedding coordinates `(x_1, …, x_D, y)`. The south pole is
//! `(0, 0)` and maps to the origin of the chart; the north pole `(0, 2R)` is the point
//! removed by the chart and is never a quadrature node.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::quadrature::{composite_gauss, gauss_legendre};

/// Relative distance to the north pole below which the chart is refused.
pub const POLE_EPS: f64 = 1e-12;

/// Relative tolerance for the on-sphere invariant.
pub const ON_SPHERE_TOL: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("radius must be positive and finite, got {0}")]
    InvalidRadius(f64),
    #[error("point is not on the sphere: residual {residual:e}")]
    NotOnSphere { residual: f64 },
    #[error("point is within {distance:e} of the removed pole (0, 2R)")]
    PoleProximity { distance: f64 },
    #[error("unsupported dimension {0}; quadrature is available for D = 1 and D = 2")]
    UnsupportedDimension(usize),
    #[error("resolution must be at least 1")]
    InvalidResolution,
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
}

/// A point of `𝕊_R ⊂ ℝ^D × ℝ`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpherePoint {
    x: Vec<f64>,
    y: f64,
    radius: f64,
}

impl SpherePoint {
    pub fn new(x: Vec<f64>, y: f64, radius: f64) -> Result<Self, GeometryError> {
        check_radius(radius)?;
        let r2: f64 = x.iter().map(|v| v * v).sum::<f64>() + (y - radius) * (y - radius);
        let residual = (r2 - radius * radius).abs() / (radius * radius);
        if !(residual <= ON_SPHERE_TOL) {
            return Err(GeometryError::NotOnSphere { residual });
        }
        Ok(Self { x, y, radius })
    }

    /// Point with unit direction `u ∈ 𝕊^D` measured from the centre `(0, R)`.
    pub fn from_unit(u: &[f64], radius: f64) -> Self {
        let d = u.len() - 1;
        Self {
            x: u[..d].iter().map(|v| v * radius).collect(),
            y: radius + radius * u[d],
            radius,
        }
    }

    pub fn south_pole(dim: usize, radius: f64) -> Self {
        Self {
            x: vec![0.0; dim],
            y: 0.0,
            radius,
        }
    }

    pub fn x(&self) -> &[f64] {
        &self.x
    }

    pub fn y(&self) -> f64 {
        self.y
    }

    pub fn radius(&self) -> f64 {
        self.radius
    }

    pub fn dim(&self) -> usize {
        self.x.len()
    }

    /// The last planar coordinate `x_D`, the one flipped by the reflection.
    pub fn x_d(&self) -> f64 {
        *self.x.last().expect("dimension >= 1")
    }

    /// Unit direction from the sphere's centre, `(x/R, (y − R)/R)`.
    pub fn unit(&self) -> Vec<f64> {
        let mut u: Vec<f64> = self.x.iter().map(|v| v / self.radius).collect();
        u.push((self.y - self.radius) / self.radius);
        u
    }
}

fn check_radius(radius: f64) -> Result<(), GeometryError> {
    if radius > 0.0 && radius.is_finite() {
        Ok(())
    } else {
        Err(GeometryError::InvalidRadius(radius))
    }
}

/// `𝔰(x, y) = 2R x / (2R − y)`.
pub fn stereographic_project(p: &SpherePoint) -> Result<Vec<f64>, GeometryError> {
    let r = p.radius;
    let gap = 2.0 * r - p.y;
    if gap < POLE_EPS * r {
        return Err(GeometryError::PoleProximity { distance: gap });
    }
    let scale = 2.0 * r / gap;
    Ok(p.x.iter().map(|v| scale * v).collect())
}

/// Inverse chart: `y = 2R|u|²/(|u|² + 4R²)`, `x = 4R²u/(|u|² + 4R²)`.
pub fn stereographic_inverse(u: &[f64], radius: f64) -> Result<SpherePoint, GeometryError> {
    check_radius(radius)?;
    let four_r2 = 4.0 * radius * radius;
    let norm = u.iter().fold(0.0f64, |acc, v| acc.hypot(*v));
    if norm <= 2.0 * radius {
        let n2 = norm * norm;
        let denom = n2 + four_r2;
        Ok(SpherePoint {
            x: u.iter().map(|v| four_r2 * v / denom).collect(),
            y: 2.0 * radius * n2 / denom,
            radius,
        })
    } else {
        // Divide through by |u|² so huge arguments stay finite.
        let q = (2.0 * radius / norm) * (2.0 * radius / norm);
        let denom = 1.0 + q;
        Ok(SpherePoint {
            x: u.iter()
                .map(|v| (2.0 * radius / norm) * (2.0 * radius * (v / norm)) / denom)
                .collect(),
            y: 2.0 * radius / denom,
            radius,
        })
    }
}

/// Where a node sits relative to the reflection hyperplane `x_D = 0`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Region {
    Plus,
    Minus,
    Collar,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RegionKind {
    Plus,
    Minus,
    Collar,
    Full,
}

/// A region of the sphere: `plus` is `x_D > αδ`, `minus` is `x_D < −αδ`, the collar
/// is the band in between.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RegionSpec {
    pub kind: RegionKind,
    pub delta: f64,
    pub alpha: f64,
}

impl RegionSpec {
    pub fn new(kind: RegionKind, delta: f64, alpha: f64) -> Self {
        assert!(delta >= 0.0, "collar half-width must be non-negative");
        assert!(alpha >= 1.0, "collar inflation must be at least 1");
        Self { kind, delta, alpha }
    }

    pub fn full() -> Self {
        Self {
            kind: RegionKind::Full,
            delta: 0.0,
            alpha: 1.0,
        }
    }

    /// Collar half-width in the `x_D` coordinate.
    pub fn half_width(&self) -> f64 {
        self.alpha * self.delta
    }

    pub fn contains(&self, region: Region) -> bool {
        match self.kind {
            RegionKind::Full => true,
            RegionKind::Plus => region == Region::Plus,
            RegionKind::Minus => region == Region::Minus,
            RegionKind::Collar => region == Region::Collar,
        }
    }
}

pub fn classify_x_d(x_d: f64, half_width: f64) -> Region {
    if x_d > half_width {
        Region::Plus
    } else if x_d < -half_width {
        Region::Minus
    } else {
        Region::Collar
    }
}

pub fn classify_node(p: &SpherePoint, region: &RegionSpec) -> Region {
    classify_x_d(p.x_d(), region.half_width())
}

/// How a grid was laid out, which fixes what it integrates exactly.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum GridLayout {
    /// Harmonic-exact product rule for band limit `l_max`.
    Transform {
        l_max: usize,
    },
    /// Composite Gauss–Legendre panels conforming to the plus/collar/minus split at
    /// `half_width`.
    Region {
        half_width: f64,
        resolution: usize,
    },
    Custom,
}

/// Nodes and positive weights approximating `∫ · dΩ_R`.
#[derive(Debug, Clone)]
pub struct QuadratureGrid {
    dim: usize,
    radius: f64,
    nodes: Vec<SpherePoint>,
    weights: Vec<f64>,
    layout: GridLayout,
}

impl QuadratureGrid {
    pub fn from_parts(
        dim: usize,
        radius: f64,
        nodes: Vec<SpherePoint>,
        weights: Vec<f64>,
    ) -> Result<Self, GeometryError> {
        check_radius(radius)?;
        if nodes.len() != weights.len() {
            return Err(GeometryError::InvalidGrid(format!(
                "{} nodes but {} weights",
                nodes.len(),
                weights.len()
            )));
        }
        if let Some(w) = weights.iter().find(|w| !(**w > 0.0 && w.is_finite())) {
            return Err(GeometryError::InvalidGrid(format!(
                "non-positive weight {w}"
            )));
        }
        for p in &nodes {
            if p.dim() != dim {
                return Err(GeometryError::DimensionMismatch {
                    expected: dim,
                    got: p.dim(),
                });
            }
        }
        Ok(Self {
            dim,
            radius,
            nodes,
            weights,
            layout: GridLayout::Custom,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn radius(&self) -> f64 {
        self.radius
    }

    pub fn nodes(&self) -> &[SpherePoint] {
        &self.nodes
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn layout(&self) -> GridLayout {
        self.layout
    }

    /// Band limit through which products of harmonics are integrated exactly.
    pub fn band_limit(&self) -> Option<usize> {
        match self.layout {
            GridLayout::Transform { l_max } => Some(l_max),
            _ => None,
        }
    }

    pub fn total_weight(&self) -> f64 {
        crate::quadrature::pairwise_sum(&self.weights)
    }

    /// Typical angular separation of neighbouring nodes.
    pub fn angular_spacing(&self) -> f64 {
        match self.layout {
            GridLayout::Transform { l_max }
            | GridLayout::Region {
                resolution: l_max, ..
            } => transform_spacing(self.dim, l_max),
            GridLayout::Custom => {
                let area = unit_sphere_measure(self.dim);
                (area / self.len().max(1) as f64).powf(1.0 / self.dim as f64)
            }
        }
    }

    /// Classification of every node for the collar half-width of `region`.
    pub fn classify(&self, region: &RegionSpec) -> Vec<Region> {
        self.nodes
            .iter()
            .map(|p| classify_node(p, region))
            .collect()
    }
}

fn transform_spacing(dim: usize, l_max: usize) -> f64 {
    match dim {
        1 => 2.0 * PI / (2 * l_max + 3) as f64,
        _ => PI / (l_max + 1) as f64,
    }
}

/// Measure of the unit sphere `𝕊^D` for the supported dimensions.
pub fn unit_sphere_measure(dim: usize) -> f64 {
    match dim {
        1 => 2.0 * PI,
        2 => 4.0 * PI,
        d => {
            // 2π^{(d+1)/2} / Γ((d+1)/2) via the recursion |S^d| = 2π/(d−1) |S^{d−2}|.
            let mut m = if d % 2 == 1 { 2.0 * PI } else { 4.0 * PI };
            let mut k = if d % 2 == 1 { 1 } else { 2 };
            while k < d {
                k += 2;
                m *= 2.0 * PI / (k as f64 - 1.0);
            }
            m
        }
    }
}

fn check_dim(dim: usize) -> Result<(), GeometryError> {
    if dim == 1 || dim == 2 {
        Ok(())
    } else {
        Err(GeometryError::UnsupportedDimension(dim))
    }
}

/// D = 1 point at angle `theta` from the south pole: `x = R sin θ`, `y = R − R cos θ`.
pub(crate) fn circle_point(theta: f64, radius: f64) -> SpherePoint {
    let (s, c) = theta.sin_cos();
    SpherePoint {
        x: vec![radius * s],
        y: radius - radius * c,
        radius,
    }
}

/// Harmonic-exact grid for band limit `l_max`.
///
/// D = 1 uses `2 l_max + 3` equispaced angles starting at the south pole; the count is
/// odd so the north pole is never a node. D = 2 uses `l_max + 1` Gauss–Legendre nodes
/// in the polar coordinate times `2 l_max + 2` equispaced azimuths.
pub fn build_quadrature(
    dim: usize,
    radius: f64,
    l_max: usize,
) -> Result<QuadratureGrid, GeometryError> {
    check_dim(dim)?;
    check_radius(radius)?;
    if l_max < 1 {
        return Err(GeometryError::InvalidResolution);
    }
    let (nodes, weights) = match dim {
        1 => {
            let n = 2 * l_max + 3;
            let w = radius * 2.0 * PI / n as f64;
            let nodes: Vec<_> = (0..n)
                .map(|j| circle_point(2.0 * PI * j as f64 / n as f64, radius))
                .collect();
            (nodes, vec![w; n])
        }
        _ => {
            let (z, wz) = gauss_legendre(l_max + 1);
            let n_phi = 2 * l_max + 2;
            let dphi = 2.0 * PI / n_phi as f64;
            let mut nodes = Vec::with_capacity(z.len() * n_phi);
            let mut weights = Vec::with_capacity(z.len() * n_phi);
            for (zi, wi) in z.iter().zip(&wz) {
                let st = (1.0 - zi * zi).sqrt();
                for j in 0..n_phi {
                    let (sp, cp) = (dphi * j as f64).sin_cos();
                    nodes.push(SpherePoint::from_unit(&[st * cp, st * sp, *zi], radius));
                    weights.push(radius * radius * wi * dphi);
                }
            }
            (nodes, weights)
        }
    };
    Ok(QuadratureGrid {
        dim,
        radius,
        nodes,
        weights,
        layout: GridLayout::Transform { l_max },
    })
}

/// Panel layout of a region-conforming grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RegionRule {
    /// Panels per two transform-grid spacings, and the azimuthal oversampling for D = 2.
    pub oversampling: usize,
    /// Gauss–Legendre nodes per panel.
    pub points: usize,
}

impl Default for RegionRule {
    fn default() -> Self {
        Self {
            oversampling: 1,
            points: 8,
        }
    }
}

impl RegionRule {
    /// Accurate enough to integrate products of two band-limited fields to round-off.
    pub fn exact_products() -> Self {
        Self {
            oversampling: 2,
            points: 16,
        }
    }
}

fn panels_for(length: f64, panel_width: f64) -> usize {
    ((length / panel_width).ceil() as usize).max(1)
}

/// Grid whose nodes respect the split into plus (`x_D > h`), collar (`|x_D| ≤ h`) and
/// minus (`x_D < −h`) regions exactly, so region integrals do not suffer from nodes
/// straddling a boundary. `resolution` is the band limit of the fields to be integrated.
/// The minus nodes are the exact mirror images of the plus nodes.
pub fn build_region_quadrature(
    dim: usize,
    radius: f64,
    half_width: f64,
    resolution: usize,
    rule: RegionRule,
) -> Result<QuadratureGrid, GeometryError> {
    check_dim(dim)?;
    check_radius(radius)?;
    let RegionRule {
        oversampling,
        points,
    } = rule;
    // An even panel size keeps the removed pole off the node set.
    if resolution < 1 || oversampling < 1 || points < 2 || points % 2 == 1 {
        return Err(GeometryError::InvalidResolution);
    }
    if !(half_width >= 0.0 && half_width.is_finite()) {
        return Err(GeometryError::InvalidGrid(format!(
            "collar half-width {half_width}"
        )));
    }
    let panel_width = 2.0 * transform_spacing(dim, resolution) / oversampling as f64;
    // Angle from the +x_D axis at which the collar starts.
    let t = (half_width / radius).min(1.0);
    let beta_a = t.acos();
    let mut nodes = Vec::new();
    let mut weights = Vec::new();
    match dim {
        1 => {
            // θ measured from the south pole, x_D = R sin θ. The plus arc is (θ_a, π − θ_a).
            let theta_a = t.asin();
            let push_interval =
                |a: f64, b: f64, nodes: &mut Vec<SpherePoint>, weights: &mut Vec<f64>| {
                    if b - a <= 0.0 {
                        return;
                    }
                    let (th, w) = composite_gauss(a, b, panels_for(b - a, panel_width), points);
                    for (ti, wi) in th.iter().zip(&w) {
                        nodes.push(circle_point(*ti, radius));
                        weights.push(radius * wi);
                    }
                };
            let mut plus_nodes = Vec::new();
            let mut plus_weights = Vec::new();
            push_interval(theta_a, PI - theta_a, &mut plus_nodes, &mut plus_weights);
            let minus_nodes: Vec<_> = plus_nodes
                .iter()
                .map(|p: &SpherePoint| SpherePoint {
                    x: vec![-p.x[0]],
                    y: p.y,
                    radius,
                })
                .collect();
            nodes.extend(plus_nodes);
            weights.extend(plus_weights.iter().copied());
            nodes.extend(minus_nodes);
            weights.extend(plus_weights);
            push_interval(-theta_a, theta_a, &mut nodes, &mut weights);
            push_interval(PI - theta_a, PI + theta_a, &mut nodes, &mut weights);
        }
        _ => {
            // Polar angle β from the +x_D axis, azimuth ψ around it:
            // x_D = R cos β, x_1 = R sin β cos ψ, y − R = R sin β sin ψ.
            let n_psi = 2 * (2 * resolution + 2) * oversampling;
            let dpsi = 2.0 * PI / n_psi as f64;
            let push_band = |a: f64,
                             b: f64,
                             mirror: bool,
                             nodes: &mut Vec<SpherePoint>,
                             weights: &mut Vec<f64>| {
                if b - a <= 0.0 {
                    return;
                }
                let (beta, w) = composite_gauss(a, b, panels_for(b - a, panel_width), points);
                for (bi, wi) in beta.iter().zip(&w) {
                    let (sb, cb) = bi.sin_cos();
                    let x_d = if mirror { -cb } else { cb };
                    for j in 0..n_psi {
                        let (sp, cp) = (dpsi * (j as f64 + 0.5)).sin_cos();
                        nodes.push(SpherePoint::from_unit(&[sb * cp, x_d, sb * sp], radius));
                        weights.push(radius * radius * sb * wi * dpsi);
                    }
                }
            };
            push_band(0.0, beta_a, false, &mut nodes, &mut weights);
            push_band(0.0, beta_a, true, &mut nodes, &mut weights);
            push_band(beta_a, PI - beta_a, false, &mut nodes, &mut weights);
        }
    }
    Ok(QuadratureGrid {
        dim,
        radius,
        nodes,
        weights,
        layout: GridLayout::Region {
            half_width,
            resolution,
        },
    })
}

/// Sum of the weights of nodes classified into `region`.
pub fn region_measure(region: &RegionSpec, grid: &QuadratureGrid) -> f64 {
    let h = region.half_width();
    let w: Vec<f64> = grid
        .nodes
        .iter()
        .zip(&grid.weights)
        .filter(|(p, _)| region.contains(classify_x_d(p.x_d(), h)))
        .map(|(_, w)| *w)
        .collect();
    crate::quadrature::pairwise_sum(&w)
}

/// Closed-form measure of the collar `|x_D| ≤ h` on `𝕊_R`.
pub fn collar_measure_exact(dim: usize, radius: f64, half_width: f64) -> f64 {
    let t = (half_width / radius).min(1.0);
    match dim {
        1 => 4.0 * radius * t.asin(),
        2 => 4.0 * PI * radius * radius * t,
        _ => f64::NAN,
    }
}
