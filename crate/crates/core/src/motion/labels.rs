use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Index of the neutral style.
pub const NEUTRAL: usize = 0;

macro_rules! label {
    ($name:ident, $what:literal) => {
        #[derive(
            Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize,
        )]
        pub struct $name {
            index: usize,
            count: usize,
        }

        impl $name {
            pub fn new(index: usize, count: usize) -> Result<Self> {
                if index >= count {
                    return Err(Error::Range(format!(
                        concat!($what, " index {} out of range [0, {})"),
                        index, count
                    )));
                }
                Ok(Self { index, count })
            }

            pub fn index(self) -> usize {
                self.index
            }

            pub fn count(self) -> usize {
                self.count
            }

            pub fn one_hot(self) -> Vec<f64> {
                let mut v = vec![0.0; self.count];
                v[self.index] = 1.0;
                v
            }
        }
    };
}

label!(StyleLabel, "style");
label!(ContentLabel, "content");

impl StyleLabel {
    pub fn neutral(count: usize) -> Result<Self> {
        Self::new(NEUTRAL, count)
    }

    pub fn is_neutral(self) -> bool {
        self.index == NEUTRAL
    }
}
