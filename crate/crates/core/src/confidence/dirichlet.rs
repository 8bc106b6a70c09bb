use serde::{Deserialize, Serialize};
use statrs::function::gamma::{digamma, ln_gamma};

use super::{entropy_categorical, ProbVec};
use crate::error::{invalid, Result};

/// Concentration parameters of a Dirichlet posterior over categories.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct DirichletParams(Vec<f64>);

impl DirichletParams {
    pub fn new(alpha: Vec<f64>) -> Result<Self> {
        if alpha.len() < 2 {
            return invalid("Dirichlet needs at least two categories");
        }
        if let Some(a) = alpha.iter().find(|a| !a.is_finite() || **a <= 0.0) {
            return invalid(format!("Dirichlet concentration {a} must be positive"));
        }
        Ok(Self(alpha))
    }

    /// `k` categories with the same concentration `a`.
    pub fn symmetric(k: usize, a: f64) -> Result<Self> {
        Self::new(vec![a; k])
    }

    pub fn alpha(&self) -> &[f64] {
        &self.0
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    /// `α₀ = Σ α_j`.
    pub fn total(&self) -> f64 {
        self.0.iter().sum()
    }

    /// Predictive (posterior mean) distribution `α / α₀`.
    pub fn mean(&self) -> ProbVec {
        let total = self.total();
        ProbVec::new(self.0.iter().map(|a| a / total).collect())
            .expect("positive concentrations normalise")
    }

    /// Adds a (possibly fractional) observation of category `j`.
    pub fn observe(&mut self, j: usize, weight: f64) -> Result<()> {
        if j >= self.0.len() {
            return invalid(format!("category {j} out of range"));
        }
        if !weight.is_finite() || weight < 0.0 {
            return invalid(format!("observation weight {weight} must be non-negative"));
        }
        self.0[j] += weight;
        Ok(())
    }

    /// Same distribution with every concentration multiplied by `k`.
    pub fn scaled(&self, k: f64) -> Result<Self> {
        Self::new(self.0.iter().map(|a| a * k).collect())
    }
}

impl TryFrom<Vec<f64>> for DirichletParams {
    type Error = crate::Error;
    fn try_from(v: Vec<f64>) -> Result<Self> {
        Self::new(v)
    }
}

impl From<DirichletParams> for Vec<f64> {
    fn from(d: DirichletParams) -> Self {
        d.0
    }
}

/// `ln B(α) = Σ ln Γ(α_j) − ln Γ(α₀)`.
pub fn ln_multivariate_beta(alpha: &[f64]) -> f64 {
    let total: f64 = alpha.iter().sum();
    alpha.iter().map(|&a| ln_gamma(a)).sum::<f64>() - ln_gamma(total)
}

/// Differential entropy of a Dirichlet density:
/// `ln B(α) + (α₀ − K) ψ(α₀) − Σ (α_j − 1) ψ(α_j)`.
pub fn dirichlet_entropy(d: &DirichletParams) -> f64 {
    let k = d.dim() as f64;
    let total = d.total();
    ln_multivariate_beta(&d.0) + (total - k) * digamma(total)
        - d.0.iter().map(|&a| (a - 1.0) * digamma(a)).sum::<f64>()
}

/// Total predictive entropy split into its aleatoric and epistemic parts.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UncertaintySplit {
    pub total: f64,
    pub aleatoric: f64,
    pub epistemic: f64,
}

/// Decomposes the entropy of the Dirichlet predictive.
///
/// `total` is the entropy of the mean; `aleatoric` is the expected entropy of
/// a categorical drawn from the posterior, which has the closed form
/// `Σ (α_j/α₀)(ψ(α₀+1) − ψ(α_j+1))`; `epistemic` is their difference (the
/// mutual information between outcome and parameters).
pub fn epistemic_aleatoric_decompose(d: &DirichletParams) -> UncertaintySplit {
    let total_alpha = d.total();
    let psi_total = digamma(total_alpha + 1.0);
    let aleatoric: f64 =
        d.0.iter()
            .map(|&a| (a / total_alpha) * (psi_total - digamma(a + 1.0)))
            .sum();
    let total = entropy_categorical(&d.mean());
    UncertaintySplit {
        total,
        aleatoric,
        epistemic: total - aleatoric,
    }
}
