//! Moving windows of activity counts around each epoch.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::num::{Matrix, Scalar};

/// Extent of a moving window in epochs relative to the current one:
/// `past ≤ 0 ≤ future`, covering epochs `t+past ..= t+future`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct WindowSpec {
    pub past: i32,
    pub future: i32,
}

impl WindowSpec {
    pub fn new(past: i32, future: i32) -> Result<Self> {
        if past > 0 || future < 0 {
            return Err(Error::InvalidConfig(format!(
                "window must satisfy past ≤ 0 ≤ future, got [{past},{future}]"
            )));
        }
        Ok(WindowSpec { past, future })
    }

    /// Number of epochs covered: `future − past + 1`.
    pub fn width(&self) -> usize {
        (self.future - self.past + 1) as usize
    }

    pub fn validate(&self) -> Result<()> {
        WindowSpec::new(self.past, self.future).map(|_| ())
    }
}

/// What to put in window slots that fall outside the recording.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EdgeMode {
    /// Repeat the first/last observed value (the default; avoids spurious
    /// zero-activity artifacts at the ends of a night).
    #[default]
    Replicate,
    ZeroFill,
}

/// One row per epoch holding the activity values in the window around it.
pub fn window_matrix<S: Scalar>(
    activity: &[S],
    spec: &WindowSpec,
    edge: EdgeMode,
) -> Result<Matrix<S>> {
    spec.validate()?;
    if activity.is_empty() {
        return Err(Error::EmptySequence);
    }
    let n = activity.len() as i64;
    let mut out = Matrix::zeros(0, spec.width());
    let mut row = vec![S::zero(); spec.width()];
    for t in 0..n {
        for (slot, offset) in (spec.past as i64..=spec.future as i64).enumerate() {
            let i = t + offset;
            row[slot] = match edge {
                EdgeMode::Replicate => activity[i.clamp(0, n - 1) as usize],
                EdgeMode::ZeroFill => {
                    if (0..n).contains(&i) {
                        activity[i as usize]
                    } else {
                        S::zero()
                    }
                }
            };
        }
        out.push_row(&row);
    }
    Ok(out)
}
