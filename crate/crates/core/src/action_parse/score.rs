use crate::error::{Error, Result};

/// Number of evenly spaced score classes over `[0, 100]`.
pub const SCORE_BINS: usize = 49;

const WIDTH: f64 = 100.0 / SCORE_BINS as f64;

/// Bin of a score in `[0, 100]`; out-of-range scores are clamped with a warning.
pub fn discretize_score(score: f64) -> Result<usize> {
    if score.is_nan() {
        return Err(Error::NonFinite("score is NaN".into()));
    }
    let clamped = score.clamp(0.0, 100.0);
    if clamped != score {
        log::warn!("score {score} clamped to {clamped}");
    }
    Ok(((clamped / 100.0 * SCORE_BINS as f64).floor() as usize).min(SCORE_BINS - 1))
}

/// Center value of a bin.
pub fn bin_center(bin: usize) -> f64 {
    (bin.min(SCORE_BINS - 1) as f64 + 0.5) * WIDTH
}
