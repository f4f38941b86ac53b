//! Rollout generation. Rollout `k` reads only its own random streams, so a
//! batch is the same whether it is produced serially or on a thread pool.

use std::ops::Range;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::input_design::{sample_input, InputSchedule};
use crate::rng::{substream, Source};
use crate::system::{simulate_rollout, InitialState, NoiseSampler, Rollout, SystemModel};

/// Rollouts handed to the workers at a time.
pub const CHUNK: usize = 512;

/// Everything needed to reproduce rollout `k` of an experiment.
#[derive(Debug, Clone)]
pub struct RolloutSource<'a> {
    pub model: &'a SystemModel,
    pub sampler: &'a NoiseSampler,
    pub initial: &'a InitialState,
    pub schedule: &'a InputSchedule,
    pub seed: u64,
}

impl RolloutSource<'_> {
    /// Simulates rollout `k`.
    pub fn rollout(&self, k: u64) -> Result<Rollout> {
        let x0 = self
            .initial
            .sample(&mut substream(self.seed, k, Source::InitialState));
        let mut rng_u = substream(self.seed, k, Source::Input);
        let inputs = (0..self.schedule.horizon())
            .map(|t| sample_input(self.schedule, t, &mut rng_u))
            .collect();
        let mut rng_a = substream(self.seed, k, Source::NoiseA);
        let mut rng_b = substream(self.seed, k, Source::NoiseB);
        simulate_rollout(self.model, self.sampler, x0, inputs, &mut rng_a, &mut rng_b).map_err(
            |e| match e {
                Error::Explosion { step, norm, .. } => Error::Explosion {
                    rollout: k as usize,
                    step,
                    norm,
                },
                other => other,
            },
        )
    }

    /// Rollouts `range` in index order, generated in parallel.
    pub fn batch(&self, range: Range<u64>) -> Result<RolloutBatch> {
        let rollouts = self.map_ordered(range, Ok)?;
        RolloutBatch::new(rollouts)
    }

    /// Simulates each rollout in `range` on the current thread pool, applies
    /// `f` to it and returns the results in index order. The first error by
    /// index wins.
    pub fn map_ordered<T, F>(&self, range: Range<u64>, f: F) -> Result<Vec<T>>
    where
        T: Send,
        F: Fn(Rollout) -> Result<T> + Sync,
    {
        let results: Vec<Result<T>> = range
            .into_par_iter()
            .map(|k| self.rollout(k).and_then(&f))
            .collect();
        results.into_iter().collect()
    }
}

/// Independent rollouts sharing one horizon.
#[derive(Debug, Clone, PartialEq)]
pub struct RolloutBatch {
    rollouts: Vec<Rollout>,
}

impl RolloutBatch {
    pub fn new(rollouts: Vec<Rollout>) -> Result<Self> {
        let first = rollouts.first().ok_or(Error::EmptyBatch)?;
        let horizon = first.horizon();
        for r in &rollouts {
            if r.horizon() != horizon || r.states.len() != horizon + 1 {
                return Err(Error::HorizonMismatch {
                    expected: horizon,
                    actual: r.horizon(),
                });
            }
        }
        Ok(RolloutBatch { rollouts })
    }

    pub fn len(&self) -> usize {
        self.rollouts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rollouts.is_empty()
    }

    pub fn horizon(&self) -> usize {
        self.rollouts[0].horizon()
    }

    pub fn rollouts(&self) -> &[Rollout] {
        &self.rollouts
    }
}
