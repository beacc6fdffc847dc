//! Self-describing text format for tabular policies.
//!
//! ```text
//! tabular-policy 1
//! vocab 2
//! horizon 2
//! order 1
//! prompts 1
//! prompt 0 1.0000000000000000e0 0
//! logit 0 0 _ 0 -3.1415926535897931e-1
//! ...
//! ```
//!
//! `prompt <id> <weight> <tokens...>`; `logit <prompt> <t> <context>
//! <action> <value>` where the context is a comma-separated list of exactly
//! `order` slots (`_` for padding) or `-` when the order is zero. Reals are
//! written with 17 significant digits, so a round trip is bit-exact.

use std::fmt::Write as _;
use std::str::FromStr;

use crate::error::{Error, Result};

use super::shape::{ContextSlot, GroupKey, PolicyShape, Vocab};
use super::{PromptSet, TabularPolicy};

const MAGIC: &str = "tabular-policy 1";

pub(crate) fn fmt_real(x: f64) -> String {
    format!("{x:.16e}")
}

pub fn write_policy(policy: &TabularPolicy) -> String {
    let shape = policy.shape();
    let mut out = String::new();
    let _ = writeln!(out, "{MAGIC}");
    let _ = writeln!(out, "vocab {}", shape.vocab());
    let _ = writeln!(out, "horizon {}", shape.horizon());
    let _ = writeln!(out, "order {}", shape.order());
    let prompts = policy.prompt_set();
    let _ = writeln!(out, "prompts {}", prompts.len());
    for (id, (q, w)) in prompts.prompts().iter().zip(prompts.weights()).enumerate() {
        let _ = write!(out, "prompt {id} {}", fmt_real(*w));
        for tok in q {
            let _ = write!(out, " {tok}");
        }
        out.push('\n');
    }
    let v = shape.vocab();
    for (i, logit) in policy.logits().iter().enumerate() {
        let key = shape.group_key(i / v);
        let ctx = if key.context.is_empty() {
            "-".to_string()
        } else {
            key.context
                .iter()
                .map(ToString::to_string)
                .collect::<Vec<_>>()
                .join(",")
        };
        let _ = writeln!(
            out,
            "logit {} {} {} {} {}",
            key.prompt,
            key.position,
            ctx,
            i % v,
            fmt_real(*logit)
        );
    }
    out
}

struct Lines<'a> {
    inner: std::iter::Enumerate<std::str::Lines<'a>>,
    line: usize,
}

impl<'a> Lines<'a> {
    fn next_fields(&mut self) -> Result<Option<Vec<&'a str>>> {
        for (i, raw) in self.inner.by_ref() {
            self.line = i + 1;
            let trimmed = raw.trim();
            if trimmed.is_empty() || trimmed.starts_with('#') {
                continue;
            }
            return Ok(Some(trimmed.split_whitespace().collect()));
        }
        Ok(None)
    }

    fn err(&self, message: impl Into<String>) -> Error {
        Error::Parse {
            line: self.line,
            message: message.into(),
        }
    }

    fn header(&mut self, key: &str) -> Result<usize> {
        let fields = self
            .next_fields()?
            .ok_or_else(|| self.err(format!("missing `{key}`")))?;
        match fields.as_slice() {
            [k, v] if *k == key => self.parse(v),
            _ => Err(self.err(format!("expected `{key} <n>`"))),
        }
    }

    fn parse<T: FromStr>(&self, s: &str) -> Result<T> {
        s.parse().map_err(|_| self.err(format!("cannot parse `{s}`")))
    }
}

pub fn read_policy(text: &str) -> Result<TabularPolicy> {
    let mut lines = Lines {
        inner: text.lines().enumerate(),
        line: 0,
    };
    match lines.next_fields()? {
        Some(f) if f.join(" ") == MAGIC => {}
        _ => return Err(lines.err(format!("expected `{MAGIC}`"))),
    }
    let vocab = lines.header("vocab")?;
    let horizon = lines.header("horizon")?;
    let order = lines.header("order")?;
    let n_prompts = lines.header("prompts")?;
    let mut prompts = Vec::with_capacity(n_prompts);
    let mut weights = Vec::with_capacity(n_prompts);
    for expected in 0..n_prompts {
        let fields = lines.next_fields()?.ok_or_else(|| lines.err("missing prompt line"))?;
        if fields.len() < 3 || fields[0] != "prompt" {
            return Err(lines.err("expected `prompt <id> <weight> <tokens...>`"));
        }
        let id: usize = lines.parse(fields[1])?;
        if id != expected {
            return Err(lines.err(format!("prompt id {id}, expected {expected}")));
        }
        weights.push(lines.parse::<f64>(fields[2])?);
        prompts.push(
            fields[3..]
                .iter()
                .map(|s| lines.parse::<u32>(s))
                .collect::<Result<Vec<_>>>()?,
        );
    }
    let prompt_set = PromptSet::new(prompts, weights)?;
    let shape = PolicyShape::new(Vocab::new(vocab)?, horizon, order, n_prompts)?;
    let mut logits = vec![f64::NAN; shape.num_params()];
    while let Some(fields) = lines.next_fields()? {
        if fields.len() != 6 || fields[0] != "logit" {
            return Err(lines.err("expected `logit <prompt> <t> <context> <action> <value>`"));
        }
        let context = if fields[3] == "-" {
            Vec::new()
        } else {
            fields[3]
                .split(',')
                .map(|s| {
                    if s == "_" {
                        Ok(ContextSlot::Pad)
                    } else {
                        lines.parse::<u32>(s).map(ContextSlot::Token)
                    }
                })
                .collect::<Result<Vec<_>>>()?
        };
        let key = GroupKey {
            prompt: lines.parse(fields[1])?,
            position: lines.parse(fields[2])?,
            context,
        };
        let group = shape
            .group_of_key(&key)
            .ok_or_else(|| lines.err("logit row names an impossible context"))?;
        let action: usize = lines.parse(fields[4])?;
        if action >= vocab {
            return Err(lines.err(format!("action {action} out of range")));
        }
        let slot = &mut logits[group * vocab + action];
        if !slot.is_nan() {
            return Err(lines.err("duplicate logit row"));
        }
        let value: f64 = lines.parse(fields[5])?;
        if !value.is_finite() {
            return Err(lines.err("logit must be finite"));
        }
        *slot = value;
    }
    if let Some(i) = logits.iter().position(|l| l.is_nan()) {
        let key = shape.group_key(i / vocab);
        return Err(Error::Parse {
            line: lines.line,
            message: format!("missing logit for {key:?} action {}", i % vocab),
        });
    }
    TabularPolicy::from_logits(shape, prompt_set, logits)
}
