use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Vocabulary size `V`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Vocab(usize);

impl Vocab {
    pub fn new(size: usize) -> Result<Self> {
        if size < 2 {
            return Err(Error::VocabTooSmall(size));
        }
        Ok(Self(size))
    }

    pub fn size(self) -> usize {
        self.0
    }
}

/// One slot of a truncated context: a real token or left padding.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ContextSlot {
    Pad,
    Token(u32),
}

impl fmt::Display for ContextSlot {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ContextSlot::Pad => f.write_str("_"),
            ContextSlot::Token(t) => write!(f, "{t}"),
        }
    }
}

/// Coordinates of one softmax group.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct GroupKey {
    pub prompt: usize,
    pub position: usize,
    /// Exactly `order` slots, oldest first.
    pub context: Vec<ContextSlot>,
}

/// Parameter layout of a tabular policy.
///
/// Groups are laid out prompt-major, then by position, then by the base-`V`
/// code of the observed context tokens. Each group owns `V` consecutive
/// logits.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PolicyShape {
    vocab: Vocab,
    horizon: usize,
    order: usize,
    prompts: usize,
    position_offsets: Vec<usize>,
    groups_per_prompt: usize,
}

impl PolicyShape {
    pub fn new(vocab: Vocab, horizon: usize, order: usize, prompts: usize) -> Result<Self> {
        if horizon == 0 {
            return Err(Error::ZeroHorizon);
        }
        if order > horizon - 1 {
            return Err(Error::OrderTooLarge {
                order,
                max: horizon - 1,
            });
        }
        if prompts == 0 {
            return Err(Error::InvalidPromptSet("no prompts".into()));
        }
        let v = vocab.size();
        let mut position_offsets = Vec::with_capacity(horizon);
        let mut acc = 0usize;
        for t in 0..horizon {
            position_offsets.push(acc);
            acc = v
                .checked_pow(t.min(order) as u32)
                .and_then(|g| acc.checked_add(g))
                .ok_or_else(|| Error::Config("policy table too large".into()))?;
        }
        Ok(Self {
            vocab,
            horizon,
            order,
            prompts,
            position_offsets,
            groups_per_prompt: acc,
        })
    }

    pub fn vocab(&self) -> usize {
        self.vocab.size()
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn prompts(&self) -> usize {
        self.prompts
    }

    /// Whether every prefix maps to its own context.
    pub fn is_full_capacity(&self) -> bool {
        self.order + 1 == self.horizon
    }

    pub fn num_groups(&self) -> usize {
        self.groups_per_prompt * self.prompts
    }

    pub fn num_params(&self) -> usize {
        self.num_groups() * self.vocab()
    }

    /// Group used at position `t` (0-based) after emitting `prefix[..t]`.
    #[inline]
    pub fn group(&self, prompt: usize, t: usize, prefix: &[u32]) -> usize {
        let m = t.min(self.order);
        let v = self.vocab();
        let code = prefix[t - m..t].iter().fold(0usize, |acc, &tok| acc * v + tok as usize);
        prompt * self.groups_per_prompt + self.position_offsets[t] + code
    }

    /// Fills `out[t]` with the group visited at each position of `tokens`.
    pub fn groups_into(&self, prompt: usize, tokens: &[u32], out: &mut [usize]) {
        for (t, slot) in out.iter_mut().enumerate().take(self.horizon) {
            *slot = self.group(prompt, t, tokens);
        }
    }

    pub fn group_key(&self, group: usize) -> GroupKey {
        assert!(group < self.num_groups(), "group {group} out of range");
        let prompt = group / self.groups_per_prompt;
        let within = group % self.groups_per_prompt;
        let position = self
            .position_offsets
            .iter()
            .rposition(|&off| off <= within)
            .expect("offsets start at zero");
        let mut code = within - self.position_offsets[position];
        let m = position.min(self.order);
        let v = self.vocab();
        let mut observed = vec![0u32; m];
        for slot in observed.iter_mut().rev() {
            *slot = (code % v) as u32;
            code /= v;
        }
        let mut context = vec![ContextSlot::Pad; self.order - m];
        context.extend(observed.into_iter().map(ContextSlot::Token));
        GroupKey {
            prompt,
            position,
            context,
        }
    }

    /// Inverse of [`group_key`](Self::group_key); `None` when the key names
    /// an impossible context (wrong padding or out-of-range tokens).
    pub fn group_of_key(&self, key: &GroupKey) -> Option<usize> {
        if key.prompt >= self.prompts || key.position >= self.horizon || key.context.len() != self.order {
            return None;
        }
        let m = key.position.min(self.order);
        let (pad, observed) = key.context.split_at(self.order - m);
        if pad.iter().any(|s| *s != ContextSlot::Pad) {
            return None;
        }
        let v = self.vocab();
        let mut code = 0usize;
        for slot in observed {
            match slot {
                ContextSlot::Token(tok) if (*tok as usize) < v => code = code * v + *tok as usize,
                _ => return None,
            }
        }
        Some(key.prompt * self.groups_per_prompt + self.position_offsets[key.position] + code)
    }

    /// Total number of response strings, `V^T`, saturating at `u128::MAX`.
    pub fn sequence_count(&self) -> u128 {
        (self.vocab() as u128)
            .checked_pow(self.horizon as u32)
            .unwrap_or(u128::MAX)
    }

    /// Shapes agree on everything except the context order.
    pub fn same_space(&self, other: &PolicyShape) -> bool {
        self.vocab == other.vocab && self.horizon == other.horizon && self.prompts == other.prompts
    }
}
