//! Reproduction-time parameter variation.
//!
//! Mutators see only the parent's parameters and a random stream; they get no
//! fitness or ranking signal.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::programs::ProgramEntry;

pub const SIGMA_MIN: f64 = 1e-6;
pub const SIGMA_MAX: f64 = 1.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MutatorKind {
    Basic,
    Adaptive,
    /// Children are exact copies and share the parent's program slot.
    Disabled,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MutatorConfig {
    pub kind: MutatorKind,
    pub update_prob: f64,
    pub base_sigma: f64,
    pub meta_update_prob: f64,
    pub meta_sigma: f64,
}

impl MutatorConfig {
    pub fn basic(sigma: f64) -> Self {
        Self {
            kind: MutatorKind::Basic,
            update_prob: 0.2,
            base_sigma: sigma,
            meta_update_prob: 0.2,
            meta_sigma: 0.1,
        }
    }

    pub fn adaptive(initial_sigma: f64) -> Self {
        Self {
            kind: MutatorKind::Adaptive,
            ..Self::basic(initial_sigma)
        }
    }

    pub fn disabled() -> Self {
        Self {
            kind: MutatorKind::Disabled,
            ..Self::basic(0.0)
        }
    }

    pub fn varies(&self) -> bool {
        self.kind != MutatorKind::Disabled
    }

    pub fn validate(&self) -> Result<()> {
        let prob = |p: f64| (0.0..=1.0).contains(&p);
        if !prob(self.update_prob) || !prob(self.meta_update_prob) {
            return Err(Error::Config("mutator probabilities must lie in [0, 1]".into()));
        }
        if !(self.base_sigma >= 0.0 && self.meta_sigma >= 0.0) {
            return Err(Error::Config("mutator sigmas must be >= 0".into()));
        }
        Ok(())
    }

    /// Initial mutator state stored next to fresh logic parameters.
    pub fn initial_state(&self, n_params: usize) -> Vec<f64> {
        match self.kind {
            MutatorKind::Adaptive => vec![self.base_sigma.clamp(SIGMA_MIN, SIGMA_MAX); n_params],
            MutatorKind::Basic | MutatorKind::Disabled => Vec::new(),
        }
    }
}

/// Each coordinate is resampled around its value with probability `update_prob`.
pub fn mutate_basic<R: Rng + ?Sized>(
    params: &[f64],
    sigma: f64,
    update_prob: f64,
    rng: &mut R,
) -> Vec<f64> {
    params
        .iter()
        .map(|&x| {
            if rng.random::<f64>() < update_prob {
                let z: f64 = rng.sample(StandardNormal);
                x + sigma * z
            } else {
                x
            }
        })
        .collect()
}

/// Mutate an augmented vector `[params ‖ sigmas]`.
///
/// Parameters move with their parent's own sigma; afterwards each sigma is scaled
/// by `exp(meta_sigma * N(0, 1))` with probability `meta_update_prob`.
pub fn mutate_adaptive<R: Rng + ?Sized>(
    augmented: &[f64],
    update_prob: f64,
    meta_update_prob: f64,
    meta_sigma: f64,
    rng: &mut R,
) -> Vec<f64> {
    assert!(augmented.len().is_multiple_of(2), "augmented vector must have even length");
    let n = augmented.len() / 2;
    let (params, sigmas) = augmented.split_at(n);
    let mut out = Vec::with_capacity(augmented.len());
    for (x, s) in params.iter().zip(sigmas) {
        if rng.random::<f64>() < update_prob {
            let z: f64 = rng.sample(StandardNormal);
            out.push(x + s * z);
        } else {
            out.push(*x);
        }
    }
    for &s in sigmas {
        if rng.random::<f64>() < meta_update_prob {
            let z: f64 = rng.sample(StandardNormal);
            out.push((s * (meta_sigma * z).exp()).clamp(SIGMA_MIN, SIGMA_MAX));
        } else {
            out.push(s);
        }
    }
    out
}

/// Produce a child entry. The parent is not modified.
pub fn spawn_child_params<R: Rng + ?Sized>(
    parent: &ProgramEntry,
    mutator: &MutatorConfig,
    rng: &mut R,
) -> ProgramEntry {
    match mutator.kind {
        MutatorKind::Disabled => parent.clone(),
        MutatorKind::Basic => ProgramEntry {
            logic: mutate_basic(&parent.logic, mutator.base_sigma, mutator.update_prob, rng),
            mutator_state: Vec::new(),
        },
        MutatorKind::Adaptive => {
            let n = parent.logic.len();
            let mut augmented = parent.logic.clone();
            if parent.mutator_state.len() == n {
                augmented.extend_from_slice(&parent.mutator_state);
            } else {
                augmented.extend(mutator.initial_state(n));
            }
            let mut out = mutate_adaptive(
                &augmented,
                mutator.update_prob,
                mutator.meta_update_prob,
                mutator.meta_sigma,
                rng,
            );
            let sigmas = out.split_off(n);
            ProgramEntry {
                logic: out,
                mutator_state: sigmas,
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn zero_sigma_is_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let p: Vec<f64> = (0..100).map(|i| i as f64 * 0.1).collect();
        assert_eq!(mutate_basic(&p, 0.0, 0.2, &mut rng), p);
    }

    #[test]
    fn changed_deltas_have_sigma_spread() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let p = vec![1.0; 100_000];
        let sigma = 0.05;
        let out = mutate_basic(&p, sigma, 0.2, &mut rng);
        let deltas: Vec<f64> = out.iter().zip(&p).map(|(a, b)| a - b).filter(|d| *d != 0.0).collect();
        let frac = deltas.len() as f64 / p.len() as f64;
        assert!((frac - 0.2).abs() < 0.005, "fraction {frac}");
        let n = deltas.len() as f64;
        let mean = deltas.iter().sum::<f64>() / n;
        let std = (deltas.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
        assert!((std / sigma - 1.0).abs() < 0.05, "std {std}");
    }

    #[test]
    fn adaptive_zero_sigmas_keep_params() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut aug = vec![0.5; 50];
        aug.extend(vec![0.0; 50]);
        let out = mutate_adaptive(&aug, 1.0, 0.5, 0.1, &mut rng);
        assert_eq!(out.len(), 100);
        assert_eq!(&out[..50], &aug[..50]);
        assert!(out[50..].iter().any(|s| *s != 0.0));
    }

    #[test]
    fn adaptive_sigmas_stay_clamped() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut aug = vec![0.0; 8];
        aug.extend(vec![0.5; 8]);
        for _ in 0..10_000 {
            aug = mutate_adaptive(&aug, 0.2, 1.0, 2.0, &mut rng);
            assert!(aug[8..].iter().all(|s| (SIGMA_MIN..=SIGMA_MAX).contains(s)));
        }
    }

    #[test]
    fn child_entries() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let parent = ProgramEntry::new(vec![0.1; 40], &MutatorConfig::basic(0.01));
        let child = spawn_child_params(&parent, &MutatorConfig::basic(0.01), &mut rng);
        assert!(child.mutator_state.is_empty());
        assert_eq!(child.logic.len(), 40);

        let adaptive = MutatorConfig::adaptive(0.01);
        let parent = ProgramEntry::new(vec![0.1; 40], &adaptive);
        let snapshot = parent.clone();
        let child = spawn_child_params(&parent, &adaptive, &mut rng);
        assert_eq!(parent, snapshot);
        assert_eq!(child.logic.len() + child.mutator_state.len(), 2 * parent.logic.len());
        assert_ne!(child.mutator_state, parent.mutator_state);

        let same = spawn_child_params(&parent, &MutatorConfig::disabled(), &mut rng);
        assert_eq!(same, parent);
    }

    #[test]
    fn same_stream_same_child() {
        let m = MutatorConfig::adaptive(0.05);
        let parent = ProgramEntry::new(vec![0.3; 64], &m);
        let a = spawn_child_params(&parent, &m, &mut ChaCha8Rng::seed_from_u64(9));
        let b = spawn_child_params(&parent, &m, &mut ChaCha8Rng::seed_from_u64(9));
        assert_eq!(a, b);
    }
}
