//! Model-free first-order Markov speaker forecaster.

use rand::distr::{weighted::WeightedIndex, Distribution};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::ForecastError;
use crate::model::{PlayerId, Turn};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Decoding {
    /// Argmax with ties to the lowest player index.
    #[default]
    Greedy,
    /// Draws from the smoothed transition row.
    Sampled,
}

/// Speaker-to-speaker transition counts over players `0..n`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TransitionCounts {
    counts: Vec<Vec<u64>>,
}

impl TransitionCounts {
    /// Counts consecutive speaker pairs; the player set is `0..=max speaker`.
    pub fn from_speakers(speakers: &[PlayerId]) -> Self {
        let n = speakers.iter().map(|p| p.index() + 1).max().unwrap_or(0);
        let mut counts = vec![vec![0u64; n]; n];
        for pair in speakers.windows(2) {
            counts[pair[0].index()][pair[1].index()] += 1;
        }
        TransitionCounts { counts }
    }

    pub fn players(&self) -> usize {
        self.counts.len()
    }

    pub fn count(&self, from: PlayerId, to: PlayerId) -> u64 {
        self.counts[from.index()][to.index()]
    }

    pub fn scaled(&self, factor: u64) -> Self {
        TransitionCounts {
            counts: self.counts.iter().map(|row| row.iter().map(|c| c * factor).collect()).collect(),
        }
    }

    fn smoothed_row(&self, from: PlayerId) -> impl Iterator<Item = u64> + '_ {
        self.counts[from.index()].iter().map(|c| c + 1)
    }

    fn argmax(&self, from: PlayerId) -> PlayerId {
        let mut best = (0usize, 0u64);
        for (i, w) in self.smoothed_row(from).enumerate() {
            if w > best.1 {
                best = (i, w);
            }
        }
        PlayerId(best.0 as u32)
    }

    /// Emits `k` speakers following `start`.
    pub fn decode(&self, start: PlayerId, k: usize, decoding: Decoding, seed: u64) -> Vec<PlayerId> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut current = start;
        let mut out = Vec::with_capacity(k);
        for _ in 0..k {
            current = match decoding {
                Decoding::Greedy => self.argmax(current),
                Decoding::Sampled => {
                    let dist = WeightedIndex::new(self.smoothed_row(current)).expect("weights are positive");
                    PlayerId(dist.sample(&mut rng) as u32)
                }
            };
            out.push(current);
        }
        out
    }
}

/// Greedy add-one-smoothed Markov forecast of the next `k` speakers.
pub fn markov_speaker_baseline(window: &[Turn], k: usize, seed: u64) -> Result<Vec<PlayerId>, ForecastError> {
    markov_speaker_forecast(window, k, Decoding::Greedy, seed)
}

pub fn markov_speaker_forecast(
    window: &[Turn],
    k: usize,
    decoding: Decoding,
    seed: u64,
) -> Result<Vec<PlayerId>, ForecastError> {
    let speakers: Vec<PlayerId> = window.iter().map(|t| t.speaker).collect();
    markov_from_speakers(&speakers, k, decoding, seed)
}

pub fn markov_from_speakers(
    speakers: &[PlayerId],
    k: usize,
    decoding: Decoding,
    seed: u64,
) -> Result<Vec<PlayerId>, ForecastError> {
    let last = *speakers.last().ok_or(ForecastError::EmptyWindow)?;
    Ok(TransitionCounts::from_speakers(speakers).decode(last, k, decoding, seed))
}
