use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::SeededRng;

/// Finite prompt distribution `p(q)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PromptSet {
    prompts: Vec<Vec<u32>>,
    weights: Vec<f64>,
}

impl PromptSet {
    pub fn new(prompts: Vec<Vec<u32>>, weights: Vec<f64>) -> Result<Self> {
        if prompts.is_empty() {
            return Err(Error::InvalidPromptSet("no prompts".into()));
        }
        if prompts.len() != weights.len() {
            return Err(Error::InvalidPromptSet(format!(
                "{} prompts but {} weights",
                prompts.len(),
                weights.len()
            )));
        }
        if let Some(w) = weights.iter().find(|w| !(**w > 0.0) || !w.is_finite()) {
            return Err(Error::InvalidPromptSet(format!("weight {w} is not positive")));
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidPromptSet(format!("weights sum to {total}, expected 1")));
        }
        for (i, p) in prompts.iter().enumerate() {
            if prompts[..i].contains(p) {
                return Err(Error::InvalidPromptSet(format!("prompt {i} is a duplicate")));
            }
        }
        Ok(Self { prompts, weights })
    }

    /// `n` single-token prompts `[0], [1], ...` with equal weight.
    pub fn uniform(n: usize) -> Result<Self> {
        let prompts = (0..n as u32).map(|i| vec![i]).collect();
        Self::new(prompts, vec![1.0 / n as f64; n])
    }

    /// `n` distinct prompts with weights normalized from `raw` (must be positive).
    pub fn weighted(raw: &[f64]) -> Result<Self> {
        let total: f64 = raw.iter().sum();
        let mut weights: Vec<f64> = raw.iter().map(|w| w / total).collect();
        // push the rounding residue onto the last weight so the sum is exact to 1e-16
        let residue = 1.0 - weights.iter().sum::<f64>();
        if let Some(last) = weights.last_mut() {
            *last += residue;
        }
        let prompts = (0..raw.len() as u32).map(|i| vec![i]).collect();
        Self::new(prompts, weights)
    }

    pub fn len(&self) -> usize {
        self.prompts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.prompts.is_empty()
    }

    pub fn prompts(&self) -> &[Vec<u32>] {
        &self.prompts
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn weight(&self, id: usize) -> f64 {
        self.weights[id]
    }

    pub fn check_id(&self, id: usize) -> Result<()> {
        if id < self.len() {
            Ok(())
        } else {
            Err(Error::PromptOutOfRange { id, count: self.len() })
        }
    }

    /// Draws a prompt id from `p(q)`.
    pub fn sample(&self, rng: &mut SeededRng) -> usize {
        if self.len() == 1 {
            return 0;
        }
        let mut acc = 0.0;
        let cdf: Vec<f64> = self
            .weights
            .iter()
            .map(|w| {
                acc += w;
                acc
            })
            .collect();
        rng.categorical_cdf(&cdf)
    }
}
