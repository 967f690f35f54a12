//! Single-modality supervision loss arithmetic.
//!
//! The detection heads are out of scope, so everything here works on
//! already-evaluated scalar losses: per-level classification and
//! localization terms are folded into a branch loss, and the three branch
//! losses into the total
//! `fuse + lambda * visible + eta * infrared`.

use crate::error::{Error, Result};

/// Pyramid levels P2..P5.
pub const LEVELS: usize = 4;
pub const DEFAULT_LAMBDA: f64 = 0.0625;
pub const DEFAULT_ETA: f64 = 0.0625;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LevelTerm {
    pub cls_loss: f64,
    pub loc_loss: f64,
    /// Assigned category, 0 for background.
    pub t_star: u32,
}

/// Pre-evaluated loss terms for the four pyramid levels.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LevelLossTerms {
    levels: [LevelTerm; LEVELS],
}

impl LevelLossTerms {
    pub fn new(levels: [LevelTerm; LEVELS]) -> Result<Self> {
        for (i, l) in levels.iter().enumerate() {
            for (what, v) in [("cls", l.cls_loss), ("loc", l.loc_loss)] {
                if !v.is_finite() || v < 0.0 {
                    return Err(Error::InvalidRecord(format!(
                        "level P{} {what} loss must be finite and non-negative, got {v}",
                        i + 2
                    )));
                }
            }
        }
        Ok(LevelLossTerms { levels })
    }

    /// Builds from parallel per-level arrays.
    pub fn from_arrays(cls: [f64; LEVELS], loc: [f64; LEVELS], t_star: [u32; LEVELS]) -> Result<Self> {
        Self::new(std::array::from_fn(|i| LevelTerm {
            cls_loss: cls[i],
            loc_loss: loc[i],
            t_star: t_star[i],
        }))
    }

    pub fn levels(&self) -> &[LevelTerm; LEVELS] {
        &self.levels
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossConfig {
    pub lambda: f64,
    pub eta: f64,
    pub beta: f64,
}

impl Default for LossConfig {
    fn default() -> Self {
        LossConfig {
            lambda: DEFAULT_LAMBDA,
            eta: DEFAULT_ETA,
            beta: 1.0,
        }
    }
}

impl LossConfig {
    pub fn new(lambda: f64, eta: f64, beta: f64) -> Result<Self> {
        for (what, v) in [("lambda", lambda), ("eta", eta), ("beta", beta)] {
            if !v.is_finite() || v < 0.0 {
                return Err(Error::InvalidRecord(format!("{what} must be finite and non-negative, got {v}")));
            }
        }
        Ok(LossConfig { lambda, eta, beta })
    }
}

/// 1 for a foreground assignment, 0 for background.
pub fn indicator(t_star: u32) -> u32 {
    u32::from(t_star > 0)
}

/// `sum_P cls_P + beta * [t*_P > 0] * loc_P`.
///
/// Classification and localization are accumulated separately, then combined.
pub fn branch_loss(terms: &LevelLossTerms, beta: f64) -> f64 {
    let mut cls = 0.0;
    let mut loc = 0.0;
    for l in terms.levels() {
        cls += l.cls_loss;
        if indicator(l.t_star) == 1 {
            loc += l.loc_loss;
        }
    }
    cls + beta * loc
}

pub fn sms_total(loss_fuse: f64, loss_vrsi: f64, loss_irsi: f64, cfg: &LossConfig) -> f64 {
    loss_fuse + cfg.lambda * loss_vrsi + cfg.eta * loss_irsi
}
