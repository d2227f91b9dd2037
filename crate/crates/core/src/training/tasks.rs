use std::collections::BTreeSet;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::io::MotionWindow;
use crate::motion::NEUTRAL;
use crate::nn::seeded_rng;
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskKind {
    Reconstruction,
    Transfer,
}

/// One window and the style it is to be rendered in.
#[derive(Clone, Copy, Debug)]
pub struct TrainingTask<'a> {
    pub window: &'a MotionWindow,
    pub target_style: usize,
    pub kind: TaskKind,
}

impl TrainingTask<'_> {
    pub fn validate(&self) -> Result<()> {
        let s = self.window.style;
        let ok = match self.kind {
            TaskKind::Reconstruction => self.target_style == s,
            TaskKind::Transfer => (s == NEUTRAL) != (self.target_style == NEUTRAL),
        };
        if ok {
            Ok(())
        } else {
            Err(Error::Protocol(format!(
                "{:?} task from style {s} to {} breaks the neutral/style scheme",
                self.kind, self.target_style
            )))
        }
    }
}

/// One epoch of batches. Windows are shuffled and cut into groups of
/// `batch_size`; each window contributes a reconstruction task and a
/// transfer task (neutral to a uniformly drawn style present in the data,
/// any other style to neutral). Reconstruction tasks come first in each
/// batch.
pub fn sample_tasks(
    windows: &[MotionWindow],
    batch_size: usize,
    seed: u64,
) -> Result<Vec<Vec<TrainingTask<'_>>>> {
    if batch_size == 0 {
        return Err(Error::Range("batch size must be positive".into()));
    }
    let styles: BTreeSet<usize> = windows.iter().map(|w| w.style).collect();
    if !styles.contains(&NEUTRAL) {
        return Err(Error::Protocol(
            "no neutral windows to build transfer tasks from".into(),
        ));
    }
    let targets: Vec<usize> = styles.into_iter().filter(|&s| s != NEUTRAL).collect();
    if targets.is_empty() {
        return Err(Error::Protocol(
            "transfer tasks need at least one non-neutral style".into(),
        ));
    }
    let mut rng = seeded_rng(seed);
    let mut order: Vec<usize> = (0..windows.len()).collect();
    order.shuffle(&mut rng);
    Ok(order
        .chunks(batch_size)
        .map(|chunk| {
            let mut batch: Vec<TrainingTask<'_>> = chunk
                .iter()
                .map(|&i| TrainingTask {
                    window: &windows[i],
                    target_style: windows[i].style,
                    kind: TaskKind::Reconstruction,
                })
                .collect();
            for &i in chunk {
                let w = &windows[i];
                let target_style = if w.style == NEUTRAL {
                    targets[rng.gen_range(0..targets.len())]
                } else {
                    NEUTRAL
                };
                batch.push(TrainingTask {
                    window: w,
                    target_style,
                    kind: TaskKind::Transfer,
                });
            }
            batch
        })
        .collect())
}
