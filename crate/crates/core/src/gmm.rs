//! Three-dimensional Gaussian mixtures parameterized through the upper
//! Cholesky factor of each component's precision matrix.
//!
//! A component stores an unconstrained [`UMatrix`]. The factor `Ū` takes the
//! off-diagonal entries as-is and exponentiates the diagonal, so
//! `Σ⁻¹ = ŪᵀŪ` is symmetric positive-definite for any finite input, and
//! `log |Σ⁻¹|^½` is simply the sum of the raw diagonal entries.

use std::fmt::Write as _;

use nalgebra::{Matrix3, Vector3};
use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::rng;

pub type Point3 = Vector3<f64>;

/// `(3/2) log(2π)`, the constant dropped from the reduced likelihood.
pub const HALF_LOG_2PI_3: f64 = 2.756_815_599_614_018;

/// Tolerance on `Σ w = 1` accepted (and corrected) by [`Gmm3::new`].
pub const WEIGHT_RENORM_TOL: f64 = 1e-6;

/// Unconstrained parameters of an upper-triangular precision factor.
///
/// `diag = [u11, u22, u33]` are log-scale; `upper = [u12, u13, u23]`.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct UMatrix {
    pub diag: [f64; 3],
    pub upper: [f64; 3],
}

impl UMatrix {
    pub const ZERO: UMatrix = UMatrix { diag: [0.0; 3], upper: [0.0; 3] };

    pub fn new(diag: [f64; 3], upper: [f64; 3]) -> Self {
        Self { diag, upper }
    }

    /// Six entries in the order `u11 u22 u33 u12 u13 u23`.
    pub fn from_slice(v: &[f64]) -> Self {
        Self { diag: [v[0], v[1], v[2]], upper: [v[3], v[4], v[5]] }
    }

    pub fn to_array(&self) -> [f64; 6] {
        [self.diag[0], self.diag[1], self.diag[2], self.upper[0], self.upper[1], self.upper[2]]
    }

    pub fn is_finite(&self) -> bool {
        self.to_array().iter().all(|v| v.is_finite())
    }

    /// The factor `Ū` (exponentiated diagonal, raw upper triangle).
    pub fn factor(&self) -> Matrix3<f64> {
        let [u11, u22, u33] = self.diag;
        let [u12, u13, u23] = self.upper;
        Matrix3::new(
            u11.exp(), u12, u13, //
            0.0, u22.exp(), u23, //
            0.0, 0.0, u33.exp(),
        )
    }

    /// `Ū v` without materializing the matrix.
    #[inline]
    pub fn whiten(&self, v: &Vector3<f64>) -> Vector3<f64> {
        let [u11, u22, u33] = self.diag;
        let [u12, u13, u23] = self.upper;
        Vector3::new(
            u11.exp() * v.x + u12 * v.y + u13 * v.z,
            u22.exp() * v.y + u23 * v.z,
            u33.exp() * v.z,
        )
    }

    /// Solves `Ū x = z` by back substitution.
    #[inline]
    pub fn unwhiten(&self, z: &Vector3<f64>) -> Vector3<f64> {
        let [u11, u22, u33] = self.diag;
        let [u12, u13, u23] = self.upper;
        let x3 = z.z / u33.exp();
        let x2 = (z.y - u23 * x3) / u22.exp();
        let x1 = (z.x - u12 * x2 - u13 * x3) / u11.exp();
        Vector3::new(x1, x2, x3)
    }

    pub fn log_sqrt_det(&self) -> f64 {
        self.diag.iter().sum()
    }
}

/// Precision matrix `Σ⁻¹ = ŪᵀŪ`.
pub fn reconstruct_precision(u: &UMatrix) -> Result<Matrix3<f64>> {
    if !u.is_finite() {
        return Err(Error::invalid("UMatrix has non-finite entries"));
    }
    let f = u.factor();
    Ok(f.transpose() * f)
}

/// `log |Σ⁻¹|^½`, which equals `u11 + u22 + u33`.
pub fn log_sqrt_det_precision(u: &UMatrix) -> Result<f64> {
    if !u.is_finite() {
        return Err(Error::invalid("UMatrix has non-finite entries"));
    }
    Ok(u.log_sqrt_det())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GaussianComponent {
    pub weight: f64,
    pub mean: Point3,
    pub u: UMatrix,
}

impl GaussianComponent {
    pub fn new(weight: f64, mean: Point3, u: UMatrix) -> Self {
        Self { weight, mean, u }
    }

    /// Log of the unnormalized, unweighted component density at `x`:
    /// `Σ diag(U) − ½‖Ū(x−μ)‖²`.
    #[inline]
    pub fn reduced_log_density(&self, x: &Point3) -> f64 {
        let r = self.u.whiten(&(x - self.mean));
        self.u.log_sqrt_det() - 0.5 * r.norm_squared()
    }

    pub fn covariance(&self) -> Matrix3<f64> {
        let inv = self.u.factor().try_inverse().expect("triangular factor with positive diagonal");
        inv * inv.transpose()
    }
}

/// A normalized mixture of three-dimensional Gaussians.
#[derive(Debug, Clone, PartialEq)]
pub struct Gmm3 {
    components: Vec<GaussianComponent>,
}

impl Gmm3 {
    /// Validates the components. Weights summing to within
    /// [`WEIGHT_RENORM_TOL`] of one are rescaled to sum to one; anything
    /// further off is rejected.
    pub fn new(mut components: Vec<GaussianComponent>) -> Result<Self> {
        if components.is_empty() {
            return Err(Error::invalid("a mixture needs at least one component"));
        }
        for (i, c) in components.iter().enumerate() {
            if !(c.weight.is_finite() && c.weight >= 0.0) {
                return Err(Error::invalid(format!("component {i}: weight {} is not a finite non-negative number", c.weight)));
            }
            if !c.mean.iter().all(|v| v.is_finite()) || !c.u.is_finite() {
                return Err(Error::invalid(format!("component {i}: non-finite parameters")));
            }
        }
        let total: f64 = components.iter().map(|c| c.weight).sum();
        if (total - 1.0).abs() > WEIGHT_RENORM_TOL {
            return Err(Error::invalid(format!("weights sum to {total}, expected 1")));
        }
        if total != 1.0 {
            for c in &mut components {
                c.weight /= total;
            }
        }
        Ok(Self { components })
    }

    pub fn components(&self) -> &[GaussianComponent] {
        &self.components
    }

    pub fn len(&self) -> usize {
        self.components.len()
    }

    pub fn is_empty(&self) -> bool {
        self.components.is_empty()
    }

    pub fn weights(&self) -> impl Iterator<Item = f64> + '_ {
        self.components.iter().map(|c| c.weight)
    }

    pub fn means(&self) -> impl Iterator<Item = &Point3> + '_ {
        self.components.iter().map(|c| &c.mean)
    }

    /// `log Σ w_i exp(Σ diag(U_i) − ½‖Ū_i(x−μ_i)‖²)`, max-shifted.
    pub fn reduced_log_likelihood(&self, x: &Point3) -> f64 {
        let mut terms = [0.0f64; 16];
        let mut heap;
        let buf: &mut [f64] = if self.components.len() <= terms.len() {
            &mut terms[..self.components.len()]
        } else {
            heap = vec![0.0; self.components.len()];
            &mut heap
        };
        for (t, c) in buf.iter_mut().zip(&self.components) {
            *t = c.weight.ln() + c.reduced_log_density(x);
        }
        log_sum_exp(buf)
    }

    pub fn log_pdf(&self, x: &Point3) -> f64 {
        self.reduced_log_likelihood(x) - HALF_LOG_2PI_3
    }

    pub fn pdf(&self, x: &Point3) -> f64 {
        self.log_pdf(x).exp()
    }

    /// Plain-text form: `n=<count>` followed by one line per component,
    /// `w mx my mz u11 u22 u33 u12 u13 u23`.
    pub fn to_text(&self) -> String {
        let mut out = format!("n={}\n", self.components.len());
        for c in &self.components {
            let mut fields = vec![c.weight, c.mean.x, c.mean.y, c.mean.z];
            fields.extend_from_slice(&c.u.to_array());
            let line: Vec<String> = fields.iter().map(|v| fmt_real(*v)).collect();
            let _ = writeln!(out, "{}", line.join(" "));
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut lines = line_offsets(text).filter(|(_, l)| !l.trim().is_empty());
        let (off, header) = lines.next().ok_or(Error::Parse { offset: 0, message: "empty input".into() })?;
        let n: usize = header
            .trim()
            .strip_prefix("n=")
            .and_then(|v| v.trim().parse().ok())
            .ok_or_else(|| Error::Parse { offset: off, message: format!("expected `n=<count>`, found `{}`", header.trim()) })?;
        let mut components = Vec::with_capacity(n);
        for i in 0..n {
            let (off, line) = lines.next().ok_or(Error::Parse {
                offset: text.len(),
                message: format!("expected {n} component lines, found {i}"),
            })?;
            let vals: Vec<f64> = line
                .split_whitespace()
                .map(str::parse)
                .collect::<std::result::Result<_, _>>()
                .map_err(|e| Error::Parse { offset: off, message: format!("bad number: {e}") })?;
            if vals.len() != 10 {
                return Err(Error::Parse { offset: off, message: format!("expected 10 fields, found {}", vals.len()) });
            }
            components.push(GaussianComponent::new(
                vals[0],
                Point3::new(vals[1], vals[2], vals[3]),
                UMatrix::from_slice(&vals[4..]),
            ));
        }
        Gmm3::new(components)
    }
}

/// Mixture density `Σ w_i N(x; μ_i, Σ_i)` with the 3D normalization
/// `(2π)^(-3/2) |Σ⁻¹|^½`.
pub fn gmm_pdf(g: &Gmm3, x: &Point3) -> f64 {
    g.pdf(x)
}

/// Mean reduced negative log-likelihood of a point cloud; this is the exact
/// mean negative log density minus `(3/2) log 2π`.
pub fn reduced_nll(g: &Gmm3, points: &[Point3]) -> Result<f64> {
    if points.is_empty() {
        return Err(Error::invalid("point cloud is empty"));
    }
    let total: f64 = points.iter().map(|x| -g.reduced_log_likelihood(x)).sum();
    Ok(total / points.len() as f64)
}

/// Draws `count` points: component index by weight, then `μ + Ū⁻¹ z`.
pub fn gmm_sample(g: &Gmm3, count: usize, seed: u64) -> Vec<Point3> {
    let mut rng = rng::rng(seed);
    let picker = WeightedIndex::new(g.weights()).expect("validated weights");
    (0..count)
        .map(|_| {
            let c = &g.components[picker.sample(&mut rng)];
            let z = Vector3::new(
                StandardNormal.sample(&mut rng),
                StandardNormal.sample(&mut rng),
                StandardNormal.sample(&mut rng),
            );
            c.mean + c.u.unwhiten(&z)
        })
        .collect()
}

pub(crate) fn log_sum_exp(terms: &[f64]) -> f64 {
    let max = terms.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    max + terms.iter().map(|t| (t - max).exp()).sum::<f64>().ln()
}

/// 17 significant digits, enough to round-trip any `f64`.
pub(crate) fn fmt_real(v: f64) -> String {
    format!("{v:.16e}")
}

/// Lines of `text` paired with their starting byte offsets.
pub(crate) fn line_offsets(text: &str) -> impl Iterator<Item = (usize, &str)> {
    let mut offset = 0;
    text.split_inclusive('\n').map(move |l| {
        let start = offset;
        offset += l.len();
        (start, l.trim_end_matches(['\n', '\r']))
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;
    use approx::assert_relative_eq;
    use proptest::prelude::*;
    use rand::Rng as _;

    /// Plain triple loop, kept separate from nalgebra's product.
    fn matmul(a: &[[f64; 3]; 3], b: &[[f64; 3]; 3]) -> [[f64; 3]; 3] {
        let mut out = [[0.0; 3]; 3];
        for i in 0..3 {
            for j in 0..3 {
                for k in 0..3 {
                    out[i][j] += a[i][k] * b[k][j];
                }
            }
        }
        out
    }

    fn det3(m: &[[f64; 3]; 3]) -> f64 {
        m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1]) - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
            + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
    }

    fn to_rows(m: &Matrix3<f64>) -> [[f64; 3]; 3] {
        let mut out = [[0.0; 3]; 3];
        for i in 0..3 {
            for j in 0..3 {
                out[i][j] = m[(i, j)];
            }
        }
        out
    }

    fn random_u(rng: &mut impl rand::Rng, scale: f64) -> UMatrix {
        let mut v = [0.0; 6];
        for x in &mut v {
            *x = rng.random_range(-scale..scale);
        }
        UMatrix::from_slice(&v)
    }

    fn random_gmm(rng: &mut impl rand::Rng, n: usize) -> Gmm3 {
        let raw: Vec<f64> = (0..n).map(|_| rng.random_range(0.1..1.0)).collect();
        let total: f64 = raw.iter().sum();
        let comps = raw
            .iter()
            .map(|w| {
                GaussianComponent::new(
                    w / total,
                    Point3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)),
                    random_u(rng, 0.8),
                )
            })
            .collect();
        Gmm3::new(comps).unwrap()
    }

    #[test]
    fn precision_examples() {
        assert_eq!(reconstruct_precision(&UMatrix::ZERO).unwrap(), Matrix3::identity());

        let l2 = 2f64.ln();
        let p = reconstruct_precision(&UMatrix::new([l2; 3], [0.0; 3])).unwrap();
        assert_relative_eq!(p, Matrix3::from_diagonal_element(4.0), epsilon = 1e-14);

        let u = UMatrix::new([0.0; 3], [1.0, 0.0, 0.0]);
        let bar = [[1.0, 1.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]];
        let bar_t = [[1.0, 0.0, 0.0], [1.0, 1.0, 0.0], [0.0, 0.0, 1.0]];
        let oracle = matmul(&bar_t, &bar);
        assert_eq!(oracle, [[1.0, 1.0, 0.0], [1.0, 2.0, 0.0], [0.0, 0.0, 1.0]]);
        assert_eq!(to_rows(&reconstruct_precision(&u).unwrap()), oracle);

        let bad = UMatrix::new([f64::NAN, 0.0, 0.0], [0.0; 3]);
        assert!(matches!(reconstruct_precision(&bad), Err(Error::InvalidInput(_))));
        assert!(log_sqrt_det_precision(&bad).is_err());
    }

    #[test]
    fn log_sqrt_det_examples() {
        assert_eq!(log_sqrt_det_precision(&UMatrix::ZERO).unwrap(), 0.0);
        assert_eq!(log_sqrt_det_precision(&UMatrix::new([1.0, 2.0, 3.0], [0.5, -2.0, 7.0])).unwrap(), 6.0);
        let mut rng = rng::rng(11);
        for _ in 0..200 {
            let u = random_u(&mut rng, 1.5);
            let det = det3(&to_rows(&reconstruct_precision(&u).unwrap()));
            let lhs = (2.0 * log_sqrt_det_precision(&u).unwrap()).exp();
            assert_relative_eq!(lhs, det, max_relative = 1e-9);
        }
    }

    #[test]
    fn whiten_unwhiten_inverse() {
        let mut rng = rng::rng(3);
        for _ in 0..100 {
            let u = random_u(&mut rng, 2.0);
            let v = Vector3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
            assert_relative_eq!(u.whiten(&v), u.factor() * v, epsilon = 1e-12);
            assert_relative_eq!(u.unwhiten(&u.whiten(&v)), v, epsilon = 1e-10);
        }
    }

    #[test]
    fn pdf_examples() {
        let single = Gmm3::new(vec![GaussianComponent::new(1.0, Point3::zeros(), UMatrix::ZERO)]).unwrap();
        let expected = (2.0 * PI).powf(-1.5);
        assert_relative_eq!(gmm_pdf(&single, &Point3::zeros()), expected, max_relative = 1e-14);
        assert_relative_eq!(expected, 0.06349363593, max_relative = 1e-10);

        let c = GaussianComponent::new(0.5, Point3::new(0.1, 0.2, 0.3), UMatrix::new([0.3, -0.2, 0.1], [0.4, 0.0, -0.3]));
        let doubled = Gmm3::new(vec![c, c]).unwrap();
        let once = Gmm3::new(vec![GaussianComponent { weight: 1.0, ..c }]).unwrap();
        let x = Point3::new(0.0, -0.5, 1.0);
        assert_relative_eq!(gmm_pdf(&doubled, &x), gmm_pdf(&once, &x), max_relative = 1e-14);
    }

    /// Density through an explicitly inverted covariance matrix.
    fn naive_pdf(g: &Gmm3, x: &Point3) -> f64 {
        g.components()
            .iter()
            .map(|c| {
                let cov = c.covariance();
                let inv = cov.try_inverse().unwrap();
                let d = x - c.mean;
                let q = (d.transpose() * inv * d)[(0, 0)];
                c.weight * (-0.5 * q).exp() / ((2.0 * PI).powi(3) * cov.determinant()).sqrt()
            })
            .sum()
    }

    #[test]
    fn pdf_matches_naive_formula() {
        let mut rng = rng::rng(5);
        for _ in 0..100 {
            let n = rng.random_range(1..5);
            let g = random_gmm(&mut rng, n);
            let x = Point3::new(rng.random_range(-1.5..1.5), rng.random_range(-1.5..1.5), rng.random_range(-1.5..1.5));
            assert_relative_eq!(gmm_pdf(&g, &x), naive_pdf(&g, &x), max_relative = 1e-10);
        }
    }

    #[test]
    fn reduced_nll_examples() {
        let mu = Point3::new(0.3, -0.1, 2.0);
        let g = Gmm3::new(vec![GaussianComponent::new(1.0, mu, UMatrix::ZERO)]).unwrap();
        assert_eq!(reduced_nll(&g, &[mu, mu, mu]).unwrap(), 0.0);
        let x = mu + Point3::new(1.0, 1.0, 0.0);
        assert_relative_eq!(reduced_nll(&g, &[x]).unwrap(), 1.0, epsilon = 1e-15);
        assert!(matches!(reduced_nll(&g, &[]), Err(Error::InvalidInput(_))));
    }

    #[test]
    fn reduced_nll_matches_unstabilized_loop() {
        let mut rng = rng::rng(9);
        for _ in 0..50 {
            let k = rng.random_range(1..6);
            let g = random_gmm(&mut rng, k);
            let pts: Vec<Point3> = (0..40)
                .map(|_| Point3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
                .collect();
            let mut naive = 0.0;
            for x in &pts {
                let mut s = 0.0;
                for c in g.components() {
                    let d = x - c.mean;
                    let r = c.u.factor() * d;
                    s += c.weight * (c.u.diag.iter().sum::<f64>() - 0.5 * r.dot(&r)).exp();
                }
                naive -= s.ln();
            }
            naive /= pts.len() as f64;
            assert_relative_eq!(reduced_nll(&g, &pts).unwrap(), naive, epsilon = 1e-8, max_relative = 1e-8);
        }
    }

    #[test]
    fn reduced_nll_survives_far_points() {
        let g = Gmm3::new(vec![GaussianComponent::new(1.0, Point3::zeros(), UMatrix::new([5.0; 3], [0.0; 3]))]).unwrap();
        let v = reduced_nll(&g, &[Point3::new(100.0, 0.0, 0.0)]).unwrap();
        assert!(v.is_finite() && v > 1e6);
    }

    #[test]
    fn weight_renormalization() {
        let c = |w| GaussianComponent::new(w, Point3::zeros(), UMatrix::ZERO);
        let g = Gmm3::new(vec![c(0.5), c(0.5 + 5e-7)]).unwrap();
        assert!((g.weights().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!(Gmm3::new(vec![c(0.5), c(0.6)]).is_err());
        assert!(Gmm3::new(vec![c(-0.1), c(1.1)]).is_err());
        assert!(Gmm3::new(vec![]).is_err());
    }

    #[test]
    fn sample_single_component_moments() {
        let u = UMatrix::new([0.2, -0.3, 0.5], [0.4, -0.2, 0.3]);
        let mu = Point3::new(1.0, -2.0, 0.5);
        let g = Gmm3::new(vec![GaussianComponent::new(1.0, mu, u)]).unwrap();
        let n = 1_000_000;
        let pts = gmm_sample(&g, n, 42);
        let mean = pts.iter().fold(Point3::zeros(), |a, p| a + p) / n as f64;
        let mut cov = Matrix3::zeros();
        for p in &pts {
            let d = p - mean;
            cov += d * d.transpose();
        }
        cov /= (n - 1) as f64;

        // Oracle covariance from an explicit inverse of ŪᵀŪ.
        let sigma = reconstruct_precision(&u).unwrap().try_inverse().unwrap();
        for i in 0..3 {
            let se = (sigma[(i, i)] / n as f64).sqrt();
            assert!((mean[i] - mu[i]).abs() < 5.0 * se, "mean[{i}]");
            for j in 0..3 {
                // Var of a sample covariance entry for Gaussian data.
                let se = ((sigma[(i, i)] * sigma[(j, j)] + sigma[(i, j)].powi(2)) / n as f64).sqrt();
                assert!((cov[(i, j)] - sigma[(i, j)]).abs() < 5.0 * se, "cov[{i},{j}]");
            }
        }
    }

    #[test]
    fn sample_component_frequencies() {
        let c = |w, x| GaussianComponent::new(w, Point3::new(x, 0.0, 0.0), UMatrix::new([3.0; 3], [0.0; 3]));
        let g = Gmm3::new(vec![c(0.9, 0.0), c(0.1, 10.0)]).unwrap();
        let pts = gmm_sample(&g, 1_000_000, 7);
        let freq = pts.iter().filter(|p| p.x < 5.0).count() as f64 / 1e6;
        assert!((0.897..=0.903).contains(&freq), "{freq}");
    }

    #[test]
    fn pdf_integrates_to_one() {
        // Importance sampling with the mixture itself as proposal against a
        // wider reference density: E_g[h(x)/g(x)] = ∫h = 1.
        let mut rng = rng::rng(21);
        let g = random_gmm(&mut rng, 3);
        let h = Gmm3::new(vec![GaussianComponent::new(1.0, Point3::zeros(), UMatrix::new([-1.5; 3], [0.0; 3]))]).unwrap();
        // Proposal: h, target: g. E_h[g/h] = ∫g.
        let n = 200_000;
        let pts = gmm_sample(&h, n, 99);
        let ratios: Vec<f64> = pts.iter().map(|x| gmm_pdf(&g, x) / gmm_pdf(&h, x)).collect();
        let mean = ratios.iter().sum::<f64>() / n as f64;
        let var = ratios.iter().map(|r| (r - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        let se = (var / n as f64).sqrt();
        assert!((mean - 1.0).abs() < 3.0 * se, "{mean} ± {se}");
    }

    #[test]
    fn text_round_trip_and_errors() {
        let mut rng = rng::rng(1);
        let g = random_gmm(&mut rng, 4);
        assert_eq!(Gmm3::from_text(&g.to_text()).unwrap(), g);
        assert!(matches!(Gmm3::from_text("n=2\n1 0 0 0 0 0 0 0 0 0\n"), Err(Error::Parse { .. })));
        assert!(matches!(Gmm3::from_text("components=1\n"), Err(Error::Parse { offset: 0, .. })));
        match Gmm3::from_text("n=1\n1 0 0 zero 0 0 0 0 0 0\n") {
            Err(Error::Parse { offset, .. }) => assert_eq!(offset, 4),
            other => panic!("{other:?}"),
        }
    }

    proptest! {
        #[test]
        fn precision_is_spd(v in proptest::array::uniform6(-4.0f64..4.0)) {
            let p = reconstruct_precision(&UMatrix::from_slice(&v)).unwrap();
            prop_assert_eq!(p, p.transpose());
            let m1 = p[(0, 0)];
            let m2 = p[(0, 0)] * p[(1, 1)] - p[(0, 1)] * p[(1, 0)];
            let m3 = det3(&to_rows(&p));
            prop_assert!(m1 > 0.0 && m2 > 0.0 && m3 > 0.0);
        }

        // Wider ranges make ŪᵀŪ ill-conditioned enough that rounding in the
        // reconstructed matrix alone exceeds the tolerance.
        #[test]
        fn log_det_identity(v in proptest::array::uniform6(-2.0f64..2.0)) {
            let u = UMatrix::from_slice(&v);
            let p = reconstruct_precision(&u).unwrap();
            let diff = 2.0 * log_sqrt_det_precision(&u).unwrap() - det3(&to_rows(&p)).ln();
            prop_assert!(diff.abs() < 1e-9);
        }

        #[test]
        fn sampling_is_seed_deterministic(seed in any::<u64>()) {
            let mut rng = rng::rng(seed);
            let g = random_gmm(&mut rng, 3);
            let a = gmm_sample(&g, 64, seed);
            let b = gmm_sample(&g, 64, seed);
            prop_assert!(a.iter().zip(&b).all(|(p, q)| p.iter().zip(q.iter()).all(|(x, y)| x.to_bits() == y.to_bits())));
        }
    }
}
