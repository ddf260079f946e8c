//! The free Gaussian measure with covariance `Σ f g / (λ + 1)`, seeded sampling, the
//! duality pairing and the half-space decomposition of the covariance into plus, collar
//! and minus blocks.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{build_region_quadrature, classify_x_d, GeometryError, Region, RegionRule};
use crate::harmonics::{
    basis_row, coefficient_count, degree_table, eigenvalue, is_odd_under_reflection, reflect_field,
    HarmonicsError, SpectralField,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GaussianError {
    #[error(transparent)]
    Harmonics(#[from] HarmonicsError),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error("the {0:?} region contains no quadrature nodes or no concentrated modes")]
    DegenerateRegion(Region),
    #[error("collar half-width must be positive and finite, got {0}")]
    InvalidHalfWidth(f64),
    #[error("unsupported decomposition order {0}; use -1 or a non-negative integer")]
    UnsupportedOrder(i32),
}

/// `B(f, g) = Σ f_{l,m} g_{l,m} / (l(l + D − 1) + 1)`.
pub fn covariance(f: &SpectralField, g: &SpectralField) -> Result<f64, GaussianError> {
    f.same_shape(g)?;
    let deg = degree_table(f.dim(), f.l_max());
    let d = f.dim();
    Ok(f.coeffs()
        .iter()
        .zip(g.coeffs())
        .zip(&deg)
        .map(|((a, b), l)| a * b / (eigenvalue(d, *l) + 1.0))
        .sum())
}

/// `φ(f) = Σ φ_{l,m} f_{l,m}`.
pub fn pair(phi: &SpectralField, f: &SpectralField) -> Result<f64, GaussianError> {
    phi.same_shape(f)?;
    Ok(dot(phi.coeffs(), f.coeffs()))
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Per-coefficient variances `1 / (λ_l + 1)`.
pub fn mode_variances(dim: usize, l_max: usize) -> Vec<f64> {
    degree_table(dim, l_max)
        .iter()
        .map(|l| 1.0 / (eigenvalue(dim, *l) + 1.0))
        .collect()
}

/// The random stream for sample `index` under `seed`.
pub fn sample_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

pub(crate) fn fill_standard_normal(rng: &mut ChaCha8Rng, out: &mut [f64]) {
    for v in out.iter_mut() {
        *v = StandardNormal.sample(rng);
    }
}

/// Draws fields from the free measure. Sample `i` is a pure function of `(seed, i)`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FreeFieldSampler {
    dim: usize,
    radius: f64,
    l_max: usize,
    k: i32,
    seed: u64,
    std_dev: Vec<f64>,
}

impl FreeFieldSampler {
    pub fn new(
        dim: usize,
        radius: f64,
        l_max: usize,
        k: i32,
        seed: u64,
    ) -> Result<Self, GaussianError> {
        if dim != 1 && dim != 2 {
            return Err(HarmonicsError::UnsupportedDimension(dim).into());
        }
        let std_dev = mode_variances(dim, l_max)
            .iter()
            .map(|v| v.sqrt())
            .collect();
        Ok(Self {
            dim,
            radius,
            l_max,
            k,
            seed,
            std_dev,
        })
    }

    pub fn with_seed(&self, seed: u64) -> Self {
        Self {
            seed,
            ..self.clone()
        }
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

    pub fn k(&self) -> i32 {
        self.k
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn coefficient_count(&self) -> usize {
        self.std_dev.len()
    }

    pub fn std_devs(&self) -> &[f64] {
        &self.std_dev
    }

    /// Writes the coefficients of sample `index` into `out`.
    pub fn sample_into(&self, index: u64, out: &mut [f64]) {
        let mut rng = sample_rng(self.seed, index);
        fill_standard_normal(&mut rng, out);
        for (v, s) in out.iter_mut().zip(&self.std_dev) {
            *v *= s;
        }
    }

    pub fn sample_field(&self, index: u64) -> SpectralField {
        let mut c = vec![0.0; self.coefficient_count()];
        self.sample_into(index, &mut c);
        SpectralField::from_coeffs(self.dim, self.radius, self.l_max, c)
            .expect("shape is consistent")
    }

    /// Samples `start .. start + count` as the columns of a matrix.
    pub fn sample_batch(&self, start: u64, count: usize) -> DMatrix<f64> {
        let n = self.coefficient_count();
        let mut m = DMatrix::zeros(n, count);
        for j in 0..count {
            self.sample_into(start + j as u64, m.column_mut(j).as_mut_slice());
        }
        m
    }
}

/// Concentration threshold for the plus-region modes.
pub const DEFAULT_CONCENTRATION_TOL: f64 = 1e-6;

/// Projections `P⁺, P⁰, P⁻` on the truncated coefficient space and the covariance blocks
/// `B^a(f, g) = B(P^a f, P^a g)`.
///
/// The projections are orthogonal for the metric `G = diag((λ + 1)^order)`. With the
/// default order −1 this is the covariance itself, so the three blocks add up to `B`
/// without cross terms and the components can be drawn independently. `P⁺` projects onto
/// `A·S⁺` where `A = diag(λ + 1)` and `S⁺` spans the band-limited functions whose
/// `L²` mass is concentrated in `x_D > δ` up to the concentration tolerance; the plus
/// field component then lives in `S⁺`. `P⁻ = Θ P⁺ Θ` exactly.
#[derive(Debug, Clone)]
pub struct HalfSpaceDecomposition {
    dim: usize,
    radius: f64,
    l_max: usize,
    delta: f64,
    alpha: f64,
    order: i32,
    plus_modes: usize,
    min_concentration: f64,
    raw_overlap: f64,
    metric: Vec<f64>,
    projectors: [DMatrix<f64>; 3],
    /// `P^aᵀ C^{1/2}`, mapping a standard normal vector to a draw of component `a`.
    factors: [DMatrix<f64>; 3],
}

/// Order in the component arrays.
pub const COMPONENTS: [Region; 3] = [Region::Plus, Region::Collar, Region::Minus];

fn component_slot(region: Region) -> usize {
    match region {
        Region::Plus => 0,
        Region::Collar => 1,
        Region::Minus => 2,
    }
}

fn reflect_rows(m: &mut DMatrix<f64>, dim: usize) {
    for i in 0..m.nrows() {
        if is_odd_under_reflection(dim, i) {
            m.row_mut(i).neg_mut();
        }
    }
}

fn inverse_sqrt(m: &DMatrix<f64>) -> Result<DMatrix<f64>, GaussianError> {
    let eig = SymmetricEigen::new(m.clone());
    let max = eig.eigenvalues.iter().cloned().fold(0.0f64, f64::max);
    if eig.eigenvalues.iter().any(|v| !(*v > 1e-13 * max)) {
        return Err(GaussianError::DegenerateRegion(Region::Plus));
    }
    let d = DMatrix::from_diagonal(&eig.eigenvalues.map(|v| 1.0 / v.sqrt()));
    let u = &eig.eigenvectors;
    let r = u * d * u.transpose();
    Ok((&r + r.transpose()) * 0.5)
}

/// Concentration matrix `K⁺_{ij} = ∫_{x_D > δ} Y_i Y_j dΩ / R^D`.
pub fn concentration_matrix(
    dim: usize,
    radius: f64,
    l_max: usize,
    delta: f64,
) -> Result<DMatrix<f64>, GaussianError> {
    let grid = build_region_quadrature(dim, radius, delta, l_max, RegionRule::exact_products())?;
    let n_c = coefficient_count(dim, l_max);
    let scale = radius.powi(dim as i32);
    let plus: Vec<usize> = (0..grid.len())
        .filter(|i| classify_x_d(grid.nodes()[*i].x_d(), delta) == Region::Plus)
        .collect();
    if plus.is_empty() {
        return Err(GaussianError::DegenerateRegion(Region::Plus));
    }
    let mut y = DMatrix::zeros(n_c, plus.len());
    let mut row = vec![0.0; n_c];
    for (j, i) in plus.iter().enumerate() {
        basis_row(dim, l_max, &grid.nodes()[*i].unit(), &mut row);
        let sw = (grid.weights()[*i] / scale).sqrt();
        for (r, v) in row.iter().enumerate() {
            y[(r, j)] = sw * v;
        }
    }
    let k = &y * y.transpose();
    Ok((&k + k.transpose()) * 0.5)
}

/// Builds the decomposition for collar half-width `delta` (concentration region
/// `x_D > δ`), band limit `l_max` and metric order `order` (−1 or ≥ 0).
pub fn build_decomposition(
    dim: usize,
    radius: f64,
    l_max: usize,
    delta: f64,
    alpha: f64,
    order: i32,
) -> Result<HalfSpaceDecomposition, GaussianError> {
    build_decomposition_with_tol(
        dim,
        radius,
        l_max,
        delta,
        alpha,
        order,
        DEFAULT_CONCENTRATION_TOL,
    )
}

pub fn build_decomposition_with_tol(
    dim: usize,
    radius: f64,
    l_max: usize,
    delta: f64,
    alpha: f64,
    order: i32,
    concentration_tol: f64,
) -> Result<HalfSpaceDecomposition, GaussianError> {
    if !(delta > 0.0 && delta.is_finite()) {
        return Err(GaussianError::InvalidHalfWidth(delta));
    }
    if order < -1 {
        return Err(GaussianError::UnsupportedOrder(order));
    }
    if delta >= radius {
        return Err(GaussianError::DegenerateRegion(Region::Plus));
    }
    let n_c = coefficient_count(dim, l_max);
    let lambda_p1: Vec<f64> = degree_table(dim, l_max)
        .iter()
        .map(|l| eigenvalue(dim, *l) + 1.0)
        .collect();
    let metric: Vec<f64> = lambda_p1.iter().map(|v| v.powi(order)).collect();

    let k = concentration_matrix(dim, radius, l_max, delta)?;
    let eig = SymmetricEigen::new(k);
    let mut picked: Vec<(f64, usize)> = eig
        .eigenvalues
        .iter()
        .enumerate()
        .filter(|(_, v)| **v > 1.0 - concentration_tol)
        .map(|(i, v)| (*v, i))
        .collect();
    if picked.is_empty() {
        return Err(GaussianError::DegenerateRegion(Region::Plus));
    }
    picked.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
    let p = picked.len();
    let min_concentration = picked.last().map(|x| x.0).unwrap_or(1.0);
    let mut v_plus = DMatrix::zeros(n_c, p);
    for (j, (_, i)) in picked.iter().enumerate() {
        v_plus.set_column(j, &eig.eigenvectors.column(*i));
    }
    if order == -1 {
        for i in 0..n_c {
            v_plus.row_mut(i).scale_mut(lambda_p1[i]);
        }
    }
    let mut v_minus = v_plus.clone();
    reflect_rows(&mut v_minus, dim);

    let g = DMatrix::from_diagonal(&DVector::from_vec(metric.clone()));
    let gv_plus = &g * &v_plus;
    let m11 = v_plus.transpose() * &gv_plus;
    let m12 = v_minus.transpose() * &gv_plus;
    let m11 = (&m11 + m11.transpose()) * 0.5;
    let m12 = (&m12 + m12.transpose()) * 0.5;

    // Overlap of the two spans before orthogonalization.
    let m11_is = inverse_sqrt(&m11)?;
    let coherence = &m11_is * &m12 * &m11_is;
    let raw_overlap = SymmetricEigen::new((&coherence + coherence.transpose()) * 0.5)
        .eigenvalues
        .iter()
        .fold(0.0f64, |a, v| a.max(v.abs()));

    // Symmetric orthogonalization of [V⁺, V⁻] through the even and odd sectors.
    let even = inverse_sqrt(&(&m11 + &m12))?;
    let odd = inverse_sqrt(&(&m11 - &m12))?;
    let x = (&even + &odd) * 0.5;
    let y = (&even - &odd) * 0.5;
    let q_plus = &v_plus * x + &v_minus * y;
    let mut q_minus = q_plus.clone();
    reflect_rows(&mut q_minus, dim);

    let p_plus = &q_plus * (q_plus.transpose() * &g);
    let p_minus = &q_minus * (q_minus.transpose() * &g);
    let p_zero = DMatrix::identity(n_c, n_c) - &p_plus - &p_minus;

    let c_half = DMatrix::from_diagonal(&DVector::from_iterator(
        n_c,
        lambda_p1.iter().map(|v| 1.0 / v.sqrt()),
    ));
    let factors = [
        p_plus.transpose() * &c_half,
        p_zero.transpose() * &c_half,
        p_minus.transpose() * &c_half,
    ];
    Ok(HalfSpaceDecomposition {
        dim,
        radius,
        l_max,
        delta,
        alpha,
        order,
        plus_modes: p,
        min_concentration,
        raw_overlap,
        metric,
        projectors: [p_plus, p_zero, p_minus],
        factors,
    })
}

impl HalfSpaceDecomposition {
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn radius(&self) -> f64 {
        self.radius
    }

    pub fn l_max(&self) -> usize {
        self.l_max
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn order(&self) -> i32 {
        self.order
    }

    /// Number of concentrated modes spanning the plus subspace.
    pub fn plus_modes(&self) -> usize {
        self.plus_modes
    }

    /// Smallest plus-region mass fraction among the selected modes.
    pub fn min_concentration(&self) -> f64 {
        self.min_concentration
    }

    /// Largest cosine between the plus and minus spans before orthogonalization.
    pub fn raw_overlap(&self) -> f64 {
        self.raw_overlap
    }

    pub fn projector(&self, region: Region) -> &DMatrix<f64> {
        &self.projectors[component_slot(region)]
    }

    /// Map from standard normal draws to coefficients of the `region` component.
    pub fn sampling_factor(&self, region: Region) -> &DMatrix<f64> {
        &self.factors[component_slot(region)]
    }

    fn check(&self, f: &SpectralField) -> Result<(), GaussianError> {
        if f.dim() != self.dim || f.l_max() != self.l_max || f.radius() != self.radius {
            return Err(HarmonicsError::ShapeMismatch(
                "field does not match the decomposition".into(),
            )
            .into());
        }
        Ok(())
    }

    pub fn project(
        &self,
        region: Region,
        f: &SpectralField,
    ) -> Result<SpectralField, GaussianError> {
        self.check(f)?;
        let v = DVector::from_column_slice(f.coeffs());
        let out = self.projector(region) * v;
        Ok(SpectralField::from_coeffs(
            self.dim,
            self.radius,
            self.l_max,
            out.as_slice().to_vec(),
        )?)
    }

    /// Inner product in the projection metric.
    pub fn metric_inner(&self, f: &SpectralField, g: &SpectralField) -> Result<f64, GaussianError> {
        self.check(f)?;
        self.check(g)?;
        Ok(f.coeffs()
            .iter()
            .zip(g.coeffs())
            .zip(&self.metric)
            .map(|((a, b), w)| a * b * w)
            .sum())
    }

    pub fn metric_norm(&self, f: &SpectralField) -> Result<f64, GaussianError> {
        Ok(self.metric_inner(f, f)?.sqrt())
    }

    /// `B^a(f, g) = B(P^a f, P^a g)`.
    pub fn block_covariance(
        &self,
        region: Region,
        f: &SpectralField,
        g: &SpectralField,
    ) -> Result<f64, GaussianError> {
        covariance(&self.project(region, f)?, &self.project(region, g)?)
    }

    /// `B(P^a f, P^b g)`.
    pub fn cross_covariance(
        &self,
        a: Region,
        f: &SpectralField,
        b: Region,
        g: &SpectralField,
    ) -> Result<f64, GaussianError> {
        covariance(&self.project(a, f)?, &self.project(b, g)?)
    }

    /// Matrix of the block `B^a` as a bilinear form on coefficients.
    pub fn block_matrix(&self, region: Region) -> DMatrix<f64> {
        let p = self.projector(region);
        let c = DMatrix::from_diagonal(&DVector::from_vec(mode_variances(self.dim, self.l_max)));
        let b = p.transpose() * c * p;
        (&b + b.transpose()) * 0.5
    }

    /// Draw of component `region` for sample `index`.
    pub fn sample_component(&self, region: Region, seed: u64, index: u64) -> SpectralField {
        let n = coefficient_count(self.dim, self.l_max);
        let mut z = vec![0.0; n];
        let mut rng = sample_rng(seed, component_stream(index, region));
        fill_standard_normal(&mut rng, &mut z);
        let out = self.sampling_factor(region) * DVector::from_vec(z);
        SpectralField::from_coeffs(self.dim, self.radius, self.l_max, out.as_slice().to_vec())
            .expect("shape")
    }

    /// Standard normal draws for component `region` of samples `start .. start + count`.
    pub fn component_noise(
        &self,
        region: Region,
        seed: u64,
        start: u64,
        count: usize,
    ) -> DMatrix<f64> {
        let n = coefficient_count(self.dim, self.l_max);
        let mut m = DMatrix::zeros(n, count);
        for j in 0..count {
            let mut rng = sample_rng(seed, component_stream(start + j as u64, region));
            fill_standard_normal(&mut rng, m.column_mut(j).as_mut_slice());
        }
        m
    }
}

/// Stream index of component `region` of sample `index`.
pub fn component_stream(index: u64, region: Region) -> u64 {
    (index << 2) | component_slot(region) as u64
}

/// Independent draws `(φ⁺, φ⁰, φ⁻)` with covariances `B⁺, B⁰, B⁻`.
pub fn sample_decomposed(
    decomp: &HalfSpaceDecomposition,
    seed: u64,
    index: u64,
) -> (SpectralField, SpectralField, SpectralField) {
    (
        decomp.sample_component(Region::Plus, seed, index),
        decomp.sample_component(Region::Collar, seed, index),
        decomp.sample_component(Region::Minus, seed, index),
    )
}

/// `Θ` on fields; re-exported here because it acts on the measure's samples.
pub fn reflect(phi: &SpectralField) -> SpectralField {
    reflect_field(phi)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harmonics::HarmonicIndex;

    #[test]
    fn covariance_examples() {
        let f = SpectralField::unit(2, 1.0, 3, HarmonicIndex::new(0, 0)).unwrap();
        assert_eq!(covariance(&f, &f).unwrap(), 1.0);
        for m in 0..3 {
            let f = SpectralField::unit(2, 1.0, 3, HarmonicIndex::new(1, m)).unwrap();
            assert_eq!(covariance(&f, &f).unwrap(), 1.0 / 3.0);
        }
        let g = SpectralField::unit(2, 1.0, 3, HarmonicIndex::new(2, 1)).unwrap();
        assert_eq!(covariance(&f, &g).unwrap(), 0.0);
        let h = SpectralField::zeros(2, 1.0, 4);
        assert!(covariance(&f, &h).is_err());
    }

    #[test]
    fn pair_picks_coefficient_and_is_linear() {
        let s = FreeFieldSampler::new(1, 2.0, 6, 2, 9).unwrap();
        let phi = s.sample_field(3);
        let e = SpectralField::unit(1, 2.0, 6, HarmonicIndex::new(4, 1)).unwrap();
        assert_eq!(
            pair(&phi, &e).unwrap(),
            phi.get(HarmonicIndex::new(4, 1)).unwrap()
        );
        let f = SpectralField::from_coeffs(1, 2.0, 6, (0..13).map(|i| i as f64).collect()).unwrap();
        let g = SpectralField::from_coeffs(
            1,
            2.0,
            6,
            (0..13).map(|i| 1.0 / (1.0 + i as f64)).collect(),
        )
        .unwrap();
        let lhs = pair(&phi, &f.combine(2.0, &g, -3.0).unwrap()).unwrap();
        let rhs = 2.0 * pair(&phi, &f).unwrap() - 3.0 * pair(&phi, &g).unwrap();
        assert!((lhs - rhs).abs() <= 1e-12 * (1.0 + lhs.abs()));
    }

    #[test]
    fn sampler_is_deterministic() {
        let s = FreeFieldSampler::new(2, 1.0, 5, 2, 42).unwrap();
        assert_eq!(s.sample_field(7), s.sample_field(7));
        assert_ne!(s.sample_field(7), s.sample_field(8));
        let b = s.sample_batch(5, 4);
        assert_eq!(b.column(2).as_slice(), s.sample_field(7).coeffs());
    }

    #[test]
    fn decomposition_resolves_identity() {
        let d = build_decomposition(1, 1.0, 24, 0.1, 4.0, -1).unwrap();
        let n = coefficient_count(1, 24);
        let sum =
            d.projector(Region::Plus) + d.projector(Region::Collar) + d.projector(Region::Minus);
        assert!((sum - DMatrix::<f64>::identity(n, n)).amax() < 1e-10);
        for a in COMPONENTS {
            for b in COMPONENTS {
                let prod = d.projector(a) * d.projector(b);
                if a == b {
                    assert!((&prod - d.projector(a)).amax() < 1e-9, "{a:?} idempotent");
                } else {
                    assert!(prod.amax() < 1e-10, "{a:?} {b:?}");
                }
            }
        }
        assert!(d.plus_modes() > 0);
        assert!(d.raw_overlap() < 1e-2);
    }

    #[test]
    fn decomposition_rejects_bad_inputs() {
        assert!(matches!(
            build_decomposition(1, 1.0, 8, 0.0, 1.0, -1),
            Err(GaussianError::InvalidHalfWidth(_))
        ));
        assert!(matches!(
            build_decomposition(1, 1.0, 8, 1.5, 1.0, -1),
            Err(GaussianError::DegenerateRegion(_))
        ));
        assert!(matches!(
            build_decomposition(1, 1.0, 8, 0.1, 1.0, -2),
            Err(GaussianError::UnsupportedOrder(-2))
        ));
    }

    #[test]
    fn blocks_are_psd_and_sum_to_covariance() {
        let d = build_decomposition(1, 1.0, 16, 0.1, 4.0, -1).unwrap();
        let n = coefficient_count(1, 16);
        let mut total = DMatrix::zeros(n, n);
        for a in COMPONENTS {
            let b = d.block_matrix(a);
            let min = SymmetricEigen::new(b.clone()).eigenvalues.min();
            assert!(min > -1e-12, "{a:?}: {min}");
            total += b;
        }
        let c = DMatrix::from_diagonal(&DVector::from_vec(mode_variances(1, 16)));
        assert!((total - c).amax() < 1e-12);
    }

    #[test]
    fn minus_is_reflected_plus() {
        let d = build_decomposition(1, 2.0, 16, 0.2, 4.0, -1).unwrap();
        let f = SpectralField::from_coeffs(
            1,
            2.0,
            16,
            (0..33).map(|i| ((i * 37) % 11) as f64 - 5.0).collect(),
        )
        .unwrap();
        let lhs = d.project(Region::Minus, &f).unwrap();
        let rhs = reflect_field(&d.project(Region::Plus, &reflect_field(&f)).unwrap());
        for (a, b) in lhs.coeffs().iter().zip(rhs.coeffs()) {
            assert!((a - b).abs() < 1e-12);
        }
    }
}
