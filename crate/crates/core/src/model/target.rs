use serde::{Deserialize, Serialize};

use crate::motion::NEUTRAL;
use crate::{Error, Result};

/// What a stream or batch row is stylized towards.
///
/// The latent combination is `r0(z) + sum_k w_k r_k(z)` over the residual
/// weights below; the decoder is conditioned on the same convex mixture of
/// one-hot style vectors.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum TargetSpec {
    /// A single target style at full strength.
    Style { style: usize },
    /// `alpha * first + (1 - alpha) * second`.
    Blend {
        first: usize,
        second: usize,
        alpha: f64,
    },
    /// `alpha * style` over the neutral basis; `alpha = 0` is reconstruction
    /// in the neutral style.
    Scaled { style: usize, alpha: f64 },
}

impl TargetSpec {
    pub fn style(style: usize) -> Self {
        TargetSpec::Style { style }
    }

    /// The style the stream is primarily heading to.
    pub fn primary_style(&self) -> usize {
        match *self {
            TargetSpec::Style { style } | TargetSpec::Scaled { style, .. } => style,
            TargetSpec::Blend { first, .. } => first,
        }
    }

    pub fn alpha(&self) -> Option<f64> {
        match *self {
            TargetSpec::Style { .. } => None,
            TargetSpec::Blend { alpha, .. } | TargetSpec::Scaled { alpha, .. } => Some(alpha),
        }
    }

    pub fn validate(&self, styles: usize) -> Result<()> {
        let check = |s: usize| {
            if s < styles {
                Ok(())
            } else {
                Err(Error::Range(format!("style {s} outside [0, {styles})")))
            }
        };
        match *self {
            TargetSpec::Style { style } => check(style),
            TargetSpec::Blend {
                first,
                second,
                alpha,
            } => {
                check(first)?;
                check(second)?;
                check_alpha(alpha)
            }
            TargetSpec::Scaled { style, alpha } => {
                check(style)?;
                check_alpha(alpha)
            }
        }
    }

    /// `(style, weight)` for every engaged residual branch, ascending by
    /// style. Neutral never has a residual branch. Engaged branches keep
    /// running even at weight zero so their state stays warm.
    pub fn residual_weights(&self) -> Vec<(usize, f64)> {
        let mut out: Vec<(usize, f64)> = Vec::with_capacity(2);
        let mut add = |s: usize, w: f64| {
            if s == NEUTRAL {
                return;
            }
            match out.iter_mut().find(|(k, _)| *k == s) {
                Some(e) => e.1 += w,
                None => out.push((s, w)),
            }
        };
        match *self {
            TargetSpec::Style { style } => add(style, 1.0),
            TargetSpec::Blend {
                first,
                second,
                alpha,
            } => {
                add(first, alpha);
                add(second, 1.0 - alpha);
            }
            TargetSpec::Scaled { style, alpha } => add(style, alpha),
        }
        out.sort_by_key(|e| e.0);
        out
    }

    /// Style mixture fed to the decoder.
    pub fn decoder_condition(&self, styles: usize) -> Vec<f64> {
        let mut c = vec![0.0; styles];
        match *self {
            TargetSpec::Style { style } => c[style] = 1.0,
            TargetSpec::Blend {
                first,
                second,
                alpha,
            } => {
                c[first] += alpha;
                c[second] += 1.0 - alpha;
            }
            TargetSpec::Scaled { style, alpha } => {
                c[style] += alpha;
                c[NEUTRAL] += 1.0 - alpha;
            }
        }
        c
    }
}

fn check_alpha(alpha: f64) -> Result<()> {
    if (0.0..=1.0).contains(&alpha) {
        Ok(())
    } else {
        Err(Error::Range(format!("alpha {alpha} outside [0, 1]")))
    }
}
