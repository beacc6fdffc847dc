use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A response `a_1..a_T` to one prompt, optionally carrying the teacher's
/// per-token log-probs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub prompt_id: usize,
    pub tokens: Vec<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub teacher_logprobs: Option<Vec<f64>>,
}

impl Trajectory {
    pub fn new(prompt_id: usize, tokens: Vec<u32>) -> Self {
        Self {
            prompt_id,
            tokens,
            teacher_logprobs: None,
        }
    }

    pub fn with_teacher_logprobs(mut self, logprobs: Vec<f64>) -> Result<Self> {
        if logprobs.len() != self.tokens.len() {
            return Err(Error::LengthMismatch {
                expected: self.tokens.len(),
                got: logprobs.len(),
            });
        }
        check_logprobs(&logprobs)?;
        self.teacher_logprobs = Some(logprobs);
        Ok(self)
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }
}

pub(crate) fn check_logprobs(logprobs: &[f64]) -> Result<()> {
    for (position, &value) in logprobs.iter().enumerate() {
        if !(value <= 1e-12) {
            return Err(Error::PositiveLogProb { position, value });
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn stored_logprobs_validated() {
        let t = Trajectory::new(0, vec![0, 1]);
        assert!(t.clone().with_teacher_logprobs(vec![-0.1]).is_err());
        assert!(t.clone().with_teacher_logprobs(vec![-0.1, 0.5]).is_err());
        assert!(t.clone().with_teacher_logprobs(vec![-0.1, f64::NAN]).is_err());
        assert!(t.with_teacher_logprobs(vec![-0.1, 0.0]).is_ok());
    }
}
