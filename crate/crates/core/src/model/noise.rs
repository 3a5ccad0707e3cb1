use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::C64;

use super::{ModelError, NoiseCov};

/// Whitening transform for one channel's noise covariance `Σ`.
///
/// `White` stores `Σ = σ²·I` and never builds a matrix. `Full` keeps the
/// lower Cholesky factor `Σ = C·Cᴴ`; whitening is forward substitution with
/// `C`.
#[derive(Debug, Clone)]
pub enum Whitener {
    White { variance: f64, dim: usize },
    Full { chol: DMatrix<C64>, cov: DMatrix<C64> },
}

/// Draw one `CN(0, 1)` sample.
pub fn standard_cn<R: Rng + ?Sized>(rng: &mut R) -> C64 {
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    C64::new(re, im) * std::f64::consts::FRAC_1_SQRT_2
}

impl Whitener {
    pub fn new(cov: &NoiseCov, dim: usize, channel: usize) -> Result<Self, ModelError> {
        match cov {
            NoiseCov::Variance(v) => {
                if !(v.is_finite() && *v > 0.0) {
                    return Err(ModelError::NotPositiveDefinite { channel });
                }
                Ok(Whitener::White { variance: *v, dim })
            }
            NoiseCov::Matrix { re, im } => {
                if re.len() != dim || im.len() != dim {
                    return Err(ModelError::DimensionMismatch { expected: dim, got: re.len() });
                }
                let cov = DMatrix::from_fn(dim, dim, |i, j| C64::new(re[i][j], im[i][j]));
                Self::from_matrix(cov, channel)
            }
        }
    }

    pub fn from_matrix(cov: DMatrix<C64>, channel: usize) -> Result<Self, ModelError> {
        let scale = cov.iter().map(|v| v.norm()).fold(0.0, f64::max).max(f64::MIN_POSITIVE);
        let herm_err = (&cov - cov.adjoint()).iter().map(|v| v.norm()).fold(0.0, f64::max);
        if herm_err > 1e-9 * scale {
            return Err(ModelError::NotPositiveDefinite { channel });
        }
        let chol = nalgebra::Cholesky::new(cov.clone()).ok_or(ModelError::NotPositiveDefinite { channel })?.unpack();
        let pd = chol.diagonal().iter().all(|d| d.re.is_finite() && d.re > 0.0 && d.im.abs() <= 1e-12 * d.re);
        if !pd {
            return Err(ModelError::NotPositiveDefinite { channel });
        }
        Ok(Whitener::Full { chol, cov })
    }

    pub fn dim(&self) -> usize {
        match self {
            Whitener::White { dim, .. } => *dim,
            Whitener::Full { cov, .. } => cov.nrows(),
        }
    }

    /// `σ²` for white noise.
    pub fn white_variance(&self) -> Option<f64> {
        match self {
            Whitener::White { variance, .. } => Some(*variance),
            Whitener::Full { .. } => None,
        }
    }

    pub fn trace(&self) -> f64 {
        match self {
            Whitener::White { variance, dim } => variance * *dim as f64,
            Whitener::Full { cov, .. } => cov.diagonal().iter().map(|v| v.re).sum(),
        }
    }

    /// `log det Σ`.
    pub fn log_det(&self) -> f64 {
        match self {
            Whitener::White { variance, dim } => *dim as f64 * variance.ln(),
            Whitener::Full { chol, .. } => 2.0 * chol.diagonal().iter().map(|v| v.re.ln()).sum::<f64>(),
        }
    }

    fn check(&self, v: &[C64]) -> Result<(), ModelError> {
        if v.len() != self.dim() {
            return Err(ModelError::DimensionMismatch { expected: self.dim(), got: v.len() });
        }
        Ok(())
    }

    /// `C⁻¹·v` by forward substitution.
    pub fn whiten(&self, v: &[C64]) -> Result<Vec<C64>, ModelError> {
        self.check(v)?;
        match self {
            Whitener::White { variance, .. } => {
                let s = 1.0 / variance.sqrt();
                Ok(v.iter().map(|x| x * s).collect())
            }
            Whitener::Full { chol, .. } => {
                let mut w = DVector::from_column_slice(v);
                chol.solve_lower_triangular_mut(&mut w);
                Ok(w.iter().copied().collect())
            }
        }
    }

    /// `(sᴴ Σ⁻¹ z, sᴴ Σ⁻¹ s)`.
    pub fn products(&self, z: &[C64], s: &[C64]) -> Result<(C64, f64), ModelError> {
        self.check(z)?;
        self.check(s)?;
        match self {
            Whitener::White { variance, .. } => {
                let cross: C64 = s.iter().zip(z).map(|(a, b)| a.conj() * b).sum();
                let gram: f64 = s.iter().map(|a| a.norm_sqr()).sum();
                Ok((cross / *variance, gram / *variance))
            }
            Whitener::Full { .. } => {
                let ws = self.whiten(s)?;
                let wz = self.whiten(z)?;
                let cross: C64 = ws.iter().zip(&wz).map(|(a, b)| a.conj() * b).sum();
                let gram: f64 = ws.iter().map(|a| a.norm_sqr()).sum();
                Ok((cross, gram))
            }
        }
    }

    /// `‖C⁻¹ z‖² = zᴴ Σ⁻¹ z`.
    pub fn quad_form(&self, z: &[C64]) -> Result<f64, ModelError> {
        Ok(self.whiten(z)?.iter().map(|a| a.norm_sqr()).sum())
    }

    /// `hᴴ Σ h`, the output variance of the linear combiner `hᴴ z`.
    pub fn variance_along(&self, h: &[C64]) -> Result<f64, ModelError> {
        self.check(h)?;
        match self {
            Whitener::White { variance, .. } => Ok(variance * h.iter().map(|a| a.norm_sqr()).sum::<f64>()),
            Whitener::Full { cov, .. } => {
                let hv = DVector::from_column_slice(h);
                Ok((hv.adjoint() * cov * &hv)[(0, 0)].re)
            }
        }
    }

    /// Add one `CN(0, Σ)` draw to `out`.
    pub fn add_sample<R: Rng + ?Sized>(&self, rng: &mut R, out: &mut [C64]) {
        match self {
            Whitener::White { variance, .. } => {
                let sd = variance.sqrt();
                for v in out.iter_mut() {
                    *v += standard_cn(rng) * sd;
                }
            }
            Whitener::Full { chol, .. } => {
                let w = DVector::from_fn(chol.nrows(), |_, _| standard_cn(rng));
                let c = chol * w;
                for (v, x) in out.iter_mut().zip(c.iter()) {
                    *v += x;
                }
            }
        }
    }
}
