//! Full-covariance Gaussian mixture color models with hard component
//! assignment, as used by the GrabCut alternation.

use nalgebra::{Matrix3, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub type Color = [f64; 3];

/// Lower bound on every covariance eigenvalue, in squared 0..255 color units.
pub const COV_FLOOR: f64 = 1e-3;

/// Densities are floored here before taking the negative log.
pub const DENSITY_FLOOR: f64 = 1e-300;

const LOG_2PI: f64 = 1.837_877_066_409_345_3;

/// Lloyd iterations run after k-means++ seeding.
const KMEANS_ITERATIONS: usize = 10;

#[derive(Debug, Error, PartialEq)]
pub enum GmmError {
    #[error("need at least {needed} pixels, got {got}")]
    TooFewPixels { needed: usize, got: usize },
    #[error("component count must be at least 1")]
    NoComponents,
    #[error("assignment {index} out of range for {k} components")]
    AssignmentOutOfRange { index: usize, k: usize },
    #[error("{pixels} pixels but {assignments} assignments")]
    LengthMismatch { pixels: usize, assignments: usize },
    #[error("invalid model: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawComponent", into = "RawComponent")]
pub struct GmmComponent {
    weight: f64,
    mean: Color,
    covariance: [[f64; 3]; 3],
    inverse: [[f64; 3]; 3],
    log_det: f64,
}

#[derive(Serialize, Deserialize)]
struct RawComponent {
    weight: f64,
    mean: Color,
    covariance: [[f64; 3]; 3],
}

impl From<GmmComponent> for RawComponent {
    fn from(c: GmmComponent) -> Self {
        Self {
            weight: c.weight,
            mean: c.mean,
            covariance: c.covariance,
        }
    }
}

impl TryFrom<RawComponent> for GmmComponent {
    type Error = GmmError;

    fn try_from(raw: RawComponent) -> Result<Self, GmmError> {
        GmmComponent::new(raw.weight, raw.mean, raw.covariance)
    }
}

impl GmmComponent {
    /// Checks the weight range and positive-definiteness and caches the
    /// inverse and log-determinant.
    pub fn new(weight: f64, mean: Color, covariance: [[f64; 3]; 3]) -> Result<Self, GmmError> {
        if !(0.0..=1.0).contains(&weight) {
            return Err(GmmError::Invalid(format!("weight {weight} outside [0, 1]")));
        }
        if mean.iter().chain(covariance.iter().flatten()).any(|v| !v.is_finite()) {
            return Err(GmmError::Invalid("non-finite parameter".into()));
        }
        let m = Matrix3::from_fn(|i, j| covariance[i][j]);
        if (m - m.transpose()).abs().max() > 1e-9 * m.abs().max().max(1.0) {
            return Err(GmmError::Invalid("covariance is not symmetric".into()));
        }
        let det = m.determinant();
        let inv = m
            .try_inverse()
            .filter(|_| det > 0.0 && SymmetricEigen::new(m).eigenvalues.min() > 0.0)
            .ok_or_else(|| GmmError::Invalid("covariance is not positive definite".into()))?;
        Ok(Self {
            weight,
            mean,
            covariance,
            inverse: to_array(&inv),
            log_det: det.ln(),
        })
    }

    fn empty() -> Self {
        Self {
            weight: 0.0,
            mean: [0.0; 3],
            covariance: IDENTITY,
            inverse: IDENTITY,
            log_det: 0.0,
        }
    }

    pub fn weight(&self) -> f64 {
        self.weight
    }

    pub fn mean(&self) -> Color {
        self.mean
    }

    pub fn covariance(&self) -> [[f64; 3]; 3] {
        self.covariance
    }

    pub fn inverse_covariance(&self) -> [[f64; 3]; 3] {
        self.inverse
    }

    pub fn log_det(&self) -> f64 {
        self.log_det
    }

    /// Squared Mahalanobis distance of `z` from the mean.
    pub fn mahalanobis2(&self, z: &Color) -> f64 {
        let d = [z[0] - self.mean[0], z[1] - self.mean[1], z[2] - self.mean[2]];
        let mut acc = 0.0;
        for i in 0..3 {
            for j in 0..3 {
                acc += d[i] * self.inverse[i][j] * d[j];
            }
        }
        acc
    }
}

const IDENTITY: [[f64; 3]; 3] = [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]];

fn to_array(m: &Matrix3<f64>) -> [[f64; 3]; 3] {
    let mut out = [[0.0; 3]; 3];
    for (i, row) in out.iter_mut().enumerate() {
        for (j, v) in row.iter_mut().enumerate() {
            *v = m[(i, j)];
        }
    }
    out
}

/// Log of the weighted Gaussian density of `comp` at `z`; `-inf` for a
/// zero-weight component.
pub fn component_loglik(comp: &GmmComponent, z: &Color) -> f64 {
    if comp.weight <= 0.0 {
        return f64::NEG_INFINITY;
    }
    comp.weight.ln() - 0.5 * (3.0 * LOG_2PI + comp.log_det) - 0.5 * comp.mahalanobis2(z)
}

/// Mixture of K components whose weights sum to one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawModel")]
pub struct GmmModel {
    components: Vec<GmmComponent>,
}

#[derive(Deserialize)]
struct RawModel {
    components: Vec<GmmComponent>,
}

impl TryFrom<RawModel> for GmmModel {
    type Error = GmmError;

    fn try_from(raw: RawModel) -> Result<Self, GmmError> {
        GmmModel::new(raw.components)
    }
}

impl GmmModel {
    pub fn new(components: Vec<GmmComponent>) -> Result<Self, GmmError> {
        if components.is_empty() {
            return Err(GmmError::NoComponents);
        }
        let total: f64 = components.iter().map(|c| c.weight).sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(GmmError::Invalid(format!("weights sum to {total}")));
        }
        Ok(Self { components })
    }

    pub fn components(&self) -> &[GmmComponent] {
        &self.components
    }

    pub fn k(&self) -> usize {
        self.components.len()
    }

    /// Log of the mixture density, via log-sum-exp.
    pub fn log_density(&self, z: &Color) -> f64 {
        let terms: Vec<f64> = self.components.iter().map(|c| component_loglik(c, z)).collect();
        let max = terms.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if max == f64::NEG_INFINITY {
            return max;
        }
        max + terms.iter().map(|t| (t - max).exp()).sum::<f64>().ln()
    }

    /// Index and log-likelihood of the best weighted component (lowest index
    /// on ties).
    pub fn best_component(&self, z: &Color) -> (usize, f64) {
        let mut best = (0, f64::NEG_INFINITY);
        for (k, c) in self.components.iter().enumerate() {
            let l = component_loglik(c, z);
            if l > best.1 {
                best = (k, l);
            }
        }
        best
    }

    /// Serializes weights, means and covariances as JSON.
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("model is serializable")
    }
}

/// Seeded k-means++ clustering followed by a per-cluster fit. Deterministic
/// for a fixed seed.
pub fn init_from_pixels(pixels: &[Color], k: usize, seed: u64) -> Result<GmmModel, GmmError> {
    if k == 0 {
        return Err(GmmError::NoComponents);
    }
    if pixels.len() < k {
        return Err(GmmError::TooFewPixels {
            needed: k,
            got: pixels.len(),
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let centers = kmeans_plus_plus(pixels, k, &mut rng);
    let (_, assignments) = lloyd(pixels, centers, KMEANS_ITERATIONS);
    refit(pixels, &assignments, k)
}

fn dist2(a: &Color, b: &Color) -> f64 {
    (a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2) + (a[2] - b[2]).powi(2)
}

fn nearest(centers: &[Color], z: &Color) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (i, c) in centers.iter().enumerate() {
        let d = dist2(c, z);
        if d < best.1 {
            best = (i, d);
        }
    }
    best
}

fn kmeans_plus_plus(pixels: &[Color], k: usize, rng: &mut ChaCha8Rng) -> Vec<Color> {
    let mut centers = vec![pixels[rng.random_range(0..pixels.len())]];
    let mut d2: Vec<f64> = pixels.iter().map(|p| dist2(p, &centers[0])).collect();
    while centers.len() < k {
        let total: f64 = d2.iter().sum();
        let next = if total > 0.0 {
            let mut target = rng.random::<f64>() * total;
            let mut chosen = pixels.len() - 1;
            for (i, &d) in d2.iter().enumerate() {
                if target < d {
                    chosen = i;
                    break;
                }
                target -= d;
            }
            chosen
        } else {
            rng.random_range(0..pixels.len())
        };
        let c = pixels[next];
        for (d, p) in d2.iter_mut().zip(pixels) {
            *d = d.min(dist2(p, &c));
        }
        centers.push(c);
    }
    centers
}

/// Lloyd iterations until the assignment stops changing or `max_iter` runs.
fn lloyd(pixels: &[Color], mut centers: Vec<Color>, max_iter: usize) -> (Vec<Color>, Vec<usize>) {
    let k = centers.len();
    let mut assignments: Vec<usize> = pixels.iter().map(|p| nearest(&centers, p).0).collect();
    for _ in 0..max_iter {
        let mut sums = vec![[0.0; 3]; k];
        let mut counts = vec![0usize; k];
        for (p, &a) in pixels.iter().zip(&assignments) {
            for c in 0..3 {
                sums[a][c] += p[c];
            }
            counts[a] += 1;
        }
        for i in 0..k {
            if counts[i] > 0 {
                let n = counts[i] as f64;
                centers[i] = [sums[i][0] / n, sums[i][1] / n, sums[i][2] / n];
            }
        }
        let next: Vec<usize> = pixels.iter().map(|p| nearest(&centers, p).0).collect();
        if next == assignments {
            break;
        }
        assignments = next;
    }
    (centers, assignments)
}

/// Most likely component for every pixel; ties go to the lowest index and
/// zero-weight components are never chosen.
pub fn assign_components(model: &GmmModel, pixels: &[Color]) -> Vec<usize> {
    pixels.iter().map(|z| model.best_component(z).0).collect()
}

/// Maximum-likelihood weights, means and covariances for the given hard
/// assignment. Covariance eigenvalues are clamped from below at
/// [`COV_FLOOR`], which is the constrained maximum-likelihood estimate.
/// Components with no pixels get weight 0 and identity covariance.
pub fn refit(pixels: &[Color], assignments: &[usize], k: usize) -> Result<GmmModel, GmmError> {
    if k == 0 {
        return Err(GmmError::NoComponents);
    }
    if pixels.len() != assignments.len() {
        return Err(GmmError::LengthMismatch {
            pixels: pixels.len(),
            assignments: assignments.len(),
        });
    }
    if pixels.is_empty() {
        return Err(GmmError::TooFewPixels { needed: 1, got: 0 });
    }
    if let Some(&index) = assignments.iter().find(|&&a| a >= k) {
        return Err(GmmError::AssignmentOutOfRange { index, k });
    }
    let mut counts = vec![0usize; k];
    let mut sums = vec![[0.0; 3]; k];
    for (p, &a) in pixels.iter().zip(assignments) {
        counts[a] += 1;
        for c in 0..3 {
            sums[a][c] += p[c];
        }
    }
    let means: Vec<Color> = sums
        .iter()
        .zip(&counts)
        .map(|(s, &n)| {
            let n = n.max(1) as f64;
            [s[0] / n, s[1] / n, s[2] / n]
        })
        .collect();
    let mut scatter = vec![[[0.0; 3]; 3]; k];
    for (p, &a) in pixels.iter().zip(assignments) {
        let d = [p[0] - means[a][0], p[1] - means[a][1], p[2] - means[a][2]];
        for i in 0..3 {
            for j in 0..3 {
                scatter[a][i][j] += d[i] * d[j];
            }
        }
    }
    let total = pixels.len() as f64;
    let components = (0..k)
        .map(|i| {
            if counts[i] == 0 {
                return Ok(GmmComponent::empty());
            }
            let n = counts[i] as f64;
            let cov = Matrix3::from_fn(|r, c| scatter[i][r][c] / n);
            GmmComponent::new(n / total, means[i], floor_eigenvalues(cov))
        })
        .collect::<Result<Vec<_>, _>>()?;
    GmmModel::new(components)
}

fn floor_eigenvalues(cov: Matrix3<f64>) -> [[f64; 3]; 3] {
    let eig = SymmetricEigen::new(cov);
    if eig.eigenvalues.iter().all(|&l| l <= COV_FLOOR) {
        return to_array(&(Matrix3::identity() * COV_FLOOR));
    }
    if eig.eigenvalues.iter().all(|&l| l >= COV_FLOOR) {
        return to_array(&cov);
    }
    let clamped = eig.eigenvalues.map(|l| l.max(COV_FLOOR));
    let v = eig.eigenvectors;
    let m = v * Matrix3::from_diagonal(&clamped) * v.transpose();
    // re-symmetrize away rounding
    to_array(&((m + m.transpose()) * 0.5))
}

/// Which model a data term is evaluated against.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Side {
    Foreground,
    Background,
}

/// `-log` of the mixture density of `side`'s model at `z`, with the density
/// floored at [`DENSITY_FLOOR`] so the result is always finite.
pub fn data_term(fg: &GmmModel, bg: &GmmModel, z: &Color, side: Side) -> f64 {
    let model = match side {
        Side::Foreground => fg,
        Side::Background => bg,
    };
    -model.log_density(z).max(DENSITY_FLOOR.ln())
}
