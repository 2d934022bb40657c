use crate::error::{Error, Result};

/// Transformer-style sinusoidal encoding of a non-negative integer position.
///
/// Entry `2k` is `sin(t / 10000^(2k/d))` and entry `2k+1` the matching cosine.
pub fn time_embed(t: usize, dim: usize) -> Result<Vec<f64>> {
    let mut out = vec![0.0; dim];
    time_embed_into(t, dim, &mut out)?;
    Ok(out)
}

pub fn time_embed_into(t: usize, dim: usize, out: &mut [f64]) -> Result<()> {
    if dim < 2 || !dim.is_multiple_of(2) {
        return Err(Error::config(format!("embedding dimension must be even and >= 2, got {dim}")));
    }
    debug_assert_eq!(out.len(), dim);
    let t = t as f64;
    for k in 0..dim / 2 {
        let freq = 10_000f64.powf(2.0 * k as f64 / dim as f64);
        let angle = t / freq;
        out[2 * k] = angle.sin();
        out[2 * k + 1] = angle.cos();
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_is_alternating() {
        let e = time_embed(0, 8).unwrap();
        assert_eq!(e, vec![0.0, 1.0, 0.0, 1.0, 0.0, 1.0, 0.0, 1.0]);
    }

    #[test]
    fn entries_bounded() {
        for t in [0, 1, 7, 99, 1000, 123_456] {
            assert!(time_embed(t, 32).unwrap().iter().all(|v| (-1.0..=1.0).contains(v)));
        }
    }

    #[test]
    fn neighbouring_steps_differ() {
        let a = time_embed(1, 16).unwrap();
        let b = time_embed(2, 16).unwrap();
        // direct evaluation of the first pair: |sin 1 - sin 2| = 0.0678...
        let linf = a.iter().zip(&b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
        assert!(linf > 1e-6);
        assert!((linf - ((1f64).cos() - (2f64).cos()).abs()).abs() < 1e-12);
    }

    #[test]
    fn odd_dimension_rejected() {
        assert!(time_embed(3, 7).is_err());
        assert!(time_embed(3, 0).is_err());
    }
}
