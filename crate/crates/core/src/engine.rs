//! Synchronous round driver shared by every network algorithm.

use alloc::vec::Vec;

use crate::data::Streams;
use crate::metrics::{RoundRecord, RunTrace};
use crate::{Error, Result};

/// One learner's sample for the current round.
#[derive(Debug, Clone, Copy)]
pub struct SampleRef<'a> {
    pub x: &'a [f64],
    pub y: f64,
}

/// An online learning algorithm over `K` learners, advanced one
/// synchronous round at a time. Round `t` must depend only on state left
/// by round `t - 1` and on the round-`t` samples.
pub trait NetworkAlgorithm {
    fn num_learners(&self) -> usize;

    /// Predicts every learner's label with round-start state, then updates.
    /// The returned record carries the cross predictions `f̂_l(x_k)`.
    fn round(&mut self, samples: &[SampleRef<'_>]) -> Result<RoundRecord>;
}

/// Feeds `streams` through `alg` for `streams.len()` rounds.
pub fn run_streams<A: NetworkAlgorithm + ?Sized>(alg: &mut A, streams: &Streams) -> Result<RunTrace> {
    let k = alg.num_learners();
    if streams.num_learners() != k {
        return Err(Error::Parameter(alloc::format!(
            "algorithm has {k} learners but {} streams were supplied",
            streams.num_learners()
        )));
    }
    let mut rounds = Vec::with_capacity(streams.len());
    for t in 0..streams.len() {
        let samples: Vec<SampleRef<'_>> = (0..k)
            .map(|i| {
                let s = streams.sample(i, t);
                SampleRef { x: &s.x, y: s.y }
            })
            .collect();
        rounds.push(alg.round(&samples)?);
    }
    Ok(RunTrace::new(k, rounds))
}
