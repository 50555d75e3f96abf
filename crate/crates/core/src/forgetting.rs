//! Sliding-window and exponential-decay forgetting.

use std::collections::VecDeque;
use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::schema::Instance;

/// Window sizes swept by the default experiment grid.
pub const DEFAULT_WINDOWS: [usize; 3] = [20, 50, 500];
/// Decay rates swept by the default experiment grid.
pub const DEFAULT_DECAYS: [f64; 3] = [0.005, 0.05, 0.15];

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ForgetPolicy {
    None,
    /// Keep only the `W` most recent instances.
    Window(usize),
    /// Multiply all counts by `exp(-D)` once per step.
    Decay(f64),
}

impl ForgetPolicy {
    pub fn validate(&self) -> Result<()> {
        match *self {
            ForgetPolicy::Window(0) => Err(Error::Config("window size must be at least 1".into())),
            ForgetPolicy::Decay(d) if !(d > 0.0 && d.is_finite()) => Err(Error::Config(format!(
                "decay rate must be positive and finite, got {d}"
            ))),
            _ => Ok(()),
        }
    }

    /// Decay rate handed to the count stores (zero unless decaying).
    pub fn decay_rate(&self) -> f64 {
        match *self {
            ForgetPolicy::Decay(d) => d,
            _ => 0.0,
        }
    }

    /// Per-step multiplicative factor `exp(-D)`; `None` for non-decay policies.
    pub fn step_factor(&self) -> Option<f64> {
        match *self {
            ForgetPolicy::Decay(d) => Some((-d).exp()),
            _ => None,
        }
    }

    pub fn variant_name(&self) -> &'static str {
        match self {
            ForgetPolicy::None => "none",
            ForgetPolicy::Window(_) => "window",
            ForgetPolicy::Decay(_) => "decay",
        }
    }

    /// The numeric parameter as printed in result tables (empty for `None`).
    pub fn param_string(&self) -> String {
        match *self {
            ForgetPolicy::None => String::new(),
            ForgetPolicy::Window(w) => w.to_string(),
            ForgetPolicy::Decay(d) => d.to_string(),
        }
    }

    /// Window sizes and decay rates used by the sweet-path grid.
    pub fn default_sweep() -> Vec<ForgetPolicy> {
        DEFAULT_WINDOWS
            .iter()
            .map(|&w| ForgetPolicy::Window(w))
            .chain(DEFAULT_DECAYS.iter().map(|&d| ForgetPolicy::Decay(d)))
            .collect()
    }
}

impl fmt::Display for ForgetPolicy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            ForgetPolicy::None => write!(f, "none"),
            ForgetPolicy::Window(w) => write!(f, "w{w}"),
            ForgetPolicy::Decay(d) => write!(f, "d{d}"),
        }
    }
}

/// Parses `none`, `w20`, `window:20`, `d0.05` or `decay:0.05`.
impl FromStr for ForgetPolicy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::Config(format!("unrecognised forgetting policy {s:?}"));
        let s = s.trim();
        let policy = if s == "none" {
            ForgetPolicy::None
        } else if let Some(w) = s.strip_prefix("window:").or_else(|| s.strip_prefix('w')) {
            ForgetPolicy::Window(w.parse().map_err(|_| bad())?)
        } else if let Some(d) = s.strip_prefix("decay:").or_else(|| s.strip_prefix('d')) {
            ForgetPolicy::Decay(d.parse().map_err(|_| bad())?)
        } else {
            return Err(bad());
        };
        policy.validate()?;
        Ok(policy)
    }
}

/// FIFO of the instances currently inside a sliding window.
#[derive(Debug, Clone)]
pub struct WindowQueue {
    buffer: VecDeque<Instance>,
    capacity: usize,
}

impl WindowQueue {
    pub fn new(capacity: usize) -> Result<Self> {
        if capacity == 0 {
            return Err(Error::Config("window size must be at least 1".into()));
        }
        Ok(Self {
            buffer: VecDeque::with_capacity(capacity + 1),
            capacity,
        })
    }

    /// Pushes `x`; returns the oldest instance once the queue exceeds capacity.
    pub fn admit(&mut self, x: Instance) -> Option<Instance> {
        self.buffer.push_back(x);
        if self.buffer.len() > self.capacity {
            self.buffer.pop_front()
        } else {
            None
        }
    }

    pub fn len(&self) -> usize {
        self.buffer.len()
    }

    pub fn is_empty(&self) -> bool {
        self.buffer.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn iter(&self) -> impl Iterator<Item = &Instance> {
        self.buffer.iter()
    }
}
