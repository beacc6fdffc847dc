//! Tabular softmax autoregressive policies.
//!
//! A policy assigns, for every prompt, position `t` and truncated context
//! (the last `order` tokens, left-padded), a softmax distribution over the
//! vocabulary. Responses have a fixed length, so the response space is the
//! finite set of `V^T` token strings.

mod format;
mod gradient;
mod prompts;
mod shape;
mod tabular;
mod trajectory;

pub use format::{read_policy, write_policy};
pub use gradient::GradientVector;
pub use prompts::PromptSet;
pub use shape::{ContextSlot, GroupKey, PolicyShape, Vocab};
pub use tabular::{InitSpec, TabularPolicy};
pub(crate) use trajectory::check_logprobs;
pub use trajectory::Trajectory;
