//! Brownian-bridge first-passage probabilities.
//!
//! Between two grid points a particle's path is a Brownian bridge once its
//! endpoints are known, so the chance that it touched an absorbing barrier
//! in between has the closed form `exp(-2 x0 x1 / (sigma^2 dt))`, where `x0`
//! and `x1` are the endpoint distances to the barrier. Drift does not enter:
//! conditioning on the endpoints removes it.
//!
//! Strips are handled as two independent single-barrier corrections. The
//! neglected double-crossing term is of order `exp(-2 w^2 / (sigma^2 dt))` for a
//! strip of width `w`.

use rand::Rng;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BridgeError {
    #[error("bridge endpoints must lie strictly on the open side of the barrier (x0 = {x0}, x1 = {x1})")]
    NonPositiveOffset { x0: f64, x1: f64 },
    #[error("bridge duration and diffusion must be positive (dt = {dt}, diffusion = {diffusion})")]
    NonPositiveScale { dt: f64, diffusion: f64 },
}

/// Endpoint offsets of a bridge measured from the barrier.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BridgeQuery {
    x0: f64,
    x1: f64,
    dt: f64,
    diffusion: f64,
}

impl BridgeQuery {
    pub fn new(x0: f64, x1: f64, dt: f64, diffusion: f64) -> Result<Self, BridgeError> {
        // written so that NaN fails too
        if !(x0 > 0.0 && x1 > 0.0) {
            return Err(BridgeError::NonPositiveOffset { x0, x1 });
        }
        if !(dt > 0.0 && diffusion > 0.0) {
            return Err(BridgeError::NonPositiveScale { dt, diffusion });
        }
        Ok(Self {
            x0,
            x1,
            dt,
            diffusion,
        })
    }

    pub fn x0(&self) -> f64 {
        self.x0
    }

    pub fn x1(&self) -> f64 {
        self.x1
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn diffusion(&self) -> f64 {
        self.diffusion
    }
}

/// Probability that the bridge described by `q` touches the barrier.
pub fn crossing_prob(q: &BridgeQuery) -> f64 {
    crossing_probability(q.x0, q.x1, q.dt, q.diffusion)
}

/// Bernoulli draw with success probability [`crossing_prob`].
pub fn sample_crossing<R: Rng + ?Sized>(q: &BridgeQuery, rng: &mut R) -> bool {
    rng.random::<f64>() < crossing_prob(q)
}

/// Unchecked form of [`crossing_prob`] for the engine's hot loop. Offsets must
/// be positive.
#[inline]
pub(crate) fn crossing_probability(x0: f64, x1: f64, dt: f64, diffusion: f64) -> f64 {
    (-2.0 * x0 * x1 / (diffusion * dt)).exp()
}

/// Which wall of an absorbing interval a path left through.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Side {
    Lower,
    Upper,
}

/// Tests one path segment from `x0` to `x1` over `dt` against the open
/// interval `(lo, hi)`. `x0` is assumed inside. An endpoint on or past a wall
/// is a certain kill; otherwise each wall gets its own bridge draw, lower
/// first.
#[inline]
pub fn strip_segment<R: Rng + ?Sized>(
    x0: f64,
    x1: f64,
    lo: f64,
    hi: f64,
    dt: f64,
    diffusion: f64,
    rng: &mut R,
) -> Option<Side> {
    if x1 <= lo {
        return Some(Side::Lower);
    }
    if x1 >= hi {
        return Some(Side::Upper);
    }
    if rng.random::<f64>() < crossing_probability(x0 - lo, x1 - lo, dt, diffusion) {
        return Some(Side::Lower);
    }
    if rng.random::<f64>() < crossing_probability(hi - x0, hi - x1, dt, diffusion) {
        return Some(Side::Upper);
    }
    None
}

/// Single-barrier version of [`strip_segment`]: offsets are signed distances
/// into the allowed half-line. Returns true when the segment is absorbed.
#[inline]
pub fn barrier_segment<R: Rng + ?Sized>(
    offset0: f64,
    offset1: f64,
    dt: f64,
    diffusion: f64,
    rng: &mut R,
) -> bool {
    if offset1 <= 0.0 {
        return true;
    }
    rng.random::<f64>() < crossing_probability(offset0, offset1, dt, diffusion)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::RngStream;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    #[test]
    fn unit_bridge_value() {
        let q = BridgeQuery::new(1.0, 1.0, 1.0, 1.0).unwrap();
        assert_relative_eq!(crossing_prob(&q), 0.1353352832366127, max_relative = 1e-12);
    }

    #[test]
    fn limits() {
        let near = BridgeQuery::new(1e-300, 1.0, 1.0, 1.0).unwrap();
        assert_eq!(crossing_prob(&near), 1.0);
        let quick = BridgeQuery::new(1.0, 1.0, 1e-6, 1.0).unwrap();
        assert_eq!(crossing_prob(&quick), 0.0);
    }

    #[test]
    fn rejects_bad_queries() {
        assert!(matches!(
            BridgeQuery::new(0.0, 1.0, 1.0, 1.0),
            Err(BridgeError::NonPositiveOffset { .. })
        ));
        assert!(BridgeQuery::new(1.0, -0.1, 1.0, 1.0).is_err());
        assert!(BridgeQuery::new(f64::NAN, 1.0, 1.0, 1.0).is_err());
        assert!(matches!(
            BridgeQuery::new(1.0, 1.0, 0.0, 1.0),
            Err(BridgeError::NonPositiveScale { .. })
        ));
        assert!(BridgeQuery::new(1.0, 1.0, 1.0, -1.0).is_err());
    }

    #[test]
    fn degenerate_samplers() {
        let mut rng = RngStream::new(0, 0, 0);
        let never = BridgeQuery::new(1.0, 1.0, 1e-6, 1.0).unwrap();
        let always = BridgeQuery::new(1e-300, 1.0, 1.0, 1.0).unwrap();
        for _ in 0..10_000 {
            assert!(!sample_crossing(&never, &mut rng));
            assert!(sample_crossing(&always, &mut rng));
        }
    }

    #[test]
    fn sampler_frequency() {
        let mut rng = RngStream::new(11, 0, 0);
        let q = BridgeQuery::new(1.0, 1.0, 1.0, 1.0).unwrap();
        let n = 100_000;
        let hits = (0..n).filter(|_| sample_crossing(&q, &mut rng)).count();
        let p = (-2.0f64).exp();
        let freq = hits as f64 / n as f64;
        let se = (p * (1.0 - p) / n as f64).sqrt();
        assert!((freq - p).abs() < 3.0 * se, "freq {freq} vs {p} (se {se})");
    }

    #[test]
    fn strip_endpoint_outside_always_kills() {
        let mut rng = RngStream::new(0, 0, 0);
        for _ in 0..100 {
            assert_eq!(strip_segment(1.0, -0.1, 0.0, 2.0, 0.01, 1.0, &mut rng), Some(Side::Lower));
            assert_eq!(strip_segment(1.0, 2.0, 0.0, 2.0, 0.01, 1.0, &mut rng), Some(Side::Upper));
            assert!(barrier_segment(1.0, 0.0, 0.01, 1.0, &mut rng));
        }
    }

    #[test]
    fn strip_interior_short_step_survives() {
        let mut rng = RngStream::new(0, 0, 0);
        for _ in 0..1000 {
            assert_eq!(strip_segment(1.0, 1.0, 0.0, 2.0, 1e-4, 1.0, &mut rng), None);
        }
    }

    proptest! {
        #[test]
        fn symmetric(x0 in 1e-3f64..5.0, x1 in 1e-3f64..5.0, dt in 1e-3f64..5.0, s in 0.1f64..4.0) {
            let a = crossing_probability(x0, x1, dt, s);
            let b = crossing_probability(x1, x0, dt, s);
            prop_assert_eq!(a, b);
        }

        #[test]
        fn monotone(x0 in 1e-2f64..3.0, x1 in 1e-2f64..3.0, dt in 1e-2f64..3.0, bump in 1e-3f64..1.0) {
            let p = crossing_probability(x0, x1, dt, 1.0);
            prop_assume!(p > 1e-300 && p < 1.0);
            prop_assert!(crossing_probability(x0 + bump, x1, dt, 1.0) < p);
            prop_assert!(crossing_probability(x0, x1 + bump, dt, 1.0) < p);
            prop_assert!(crossing_probability(x0, x1, dt + bump, 1.0) > p);
        }

        #[test]
        fn scale_invariant(x0 in 1e-2f64..3.0, x1 in 1e-2f64..3.0, dt in 0.1f64..3.0, s in 0.5f64..4.0, c in 0.1f64..10.0) {
            let a = crossing_probability(x0, x1, dt, s);
            let b = crossing_probability(c * x0, c * x1, c * c * dt, s);
            prop_assert!((a - b).abs() <= 1e-12 * a.max(1e-300), "{} vs {}", a, b);
        }

        #[test]
        fn in_unit_interval(x0 in 1e-9f64..1e3, x1 in 1e-9f64..1e3, dt in 1e-9f64..1e3) {
            let p = crossing_probability(x0, x1, dt, 1.0);
            prop_assert!((0.0..=1.0).contains(&p));
        }
    }
}
