use super::{McwfError, StateVector};
use crate::baths::JumpChannel;
use crate::scalar::{norm_sqr, Real};

/// Picks channel `k` with probability `alpha_k |E_k psi|^2 / sum_l alpha_l |E_l psi|^2`
/// by inverting the cumulative weights at `u` in `[0, 1)`.
pub fn select_jump<T: Real>(
    state: &StateVector<T>,
    channels: &[JumpChannel<T>],
    u: f64,
) -> Result<usize, McwfError> {
    let weights: Vec<f64> = channels
        .iter()
        .map(|ch| ch.rate.as_f64() * ch.operator.image_norm_sqr(state.amplitudes()).as_f64())
        .collect();
    pick(&weights, u)
}

pub(crate) fn pick(weights: &[f64], u: f64) -> Result<usize, McwfError> {
    let total: f64 = weights.iter().sum();
    if !(total > 0.0) {
        return Err(McwfError::DarkState);
    }
    let target = u * total;
    let mut cumulative = 0.0;
    let mut last_nonzero = 0;
    for (k, &w) in weights.iter().enumerate() {
        if w > 0.0 {
            last_nonzero = k;
        }
        cumulative += w;
        if target < cumulative {
            return Ok(k);
        }
    }
    // u * total can round up to the full sum
    Ok(last_nonzero)
}

/// Replaces `psi` by `E psi / |E psi|`.
pub fn apply_jump<T: Real>(
    state: &StateVector<T>,
    channel: &JumpChannel<T>,
) -> Result<StateVector<T>, McwfError> {
    if channel.operator.dim() != state.dim() {
        return Err(McwfError::DimensionMismatch {
            expected: state.dim(),
            got: channel.operator.dim(),
        });
    }
    let mut out = state.amplitudes().to_vec();
    channel.operator.apply(state.amplitudes(), &mut out);
    let n = norm_sqr(&out);
    // relative to the input so that tiny unnormalized states still jump
    if !(n > T::epsilon() * T::epsilon() * state.squared_norm()) {
        return Err(McwfError::InvalidJump);
    }
    let mut s = StateVector::new(out);
    s.normalize();
    Ok(s)
}
