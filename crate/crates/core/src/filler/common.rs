//! Plain fillers used as stress inputs and null baselines.

use super::{FillerRound, ObliviousFiller};
use crate::error::Result;
use crate::moves::FillMove;
use crate::num::FillValue;
use crate::rng::SplitRng;

/// Each round: p drawn uniformly from [1, n], a random p-subset of cups,
/// and a random quarter-unit amount in each. Oblivious by construction.
pub struct UniformRandomFiller {
    n: usize,
    rng: SplitRng,
}

impl UniformRandomFiller {
    pub fn new(n: usize, rng: SplitRng) -> Self {
        UniformRandomFiller { n, rng }
    }
}

impl<N: FillValue> ObliviousFiller<N> for UniformRandomFiller {
    fn next(&mut self) -> Result<FillerRound<N>> {
        let p = 1 + self.rng.below(self.n as u64) as usize;
        let cups = self.rng.subset(self.n, p);
        let adds = cups
            .into_iter()
            .map(|c| (c, N::from_ratio(1 + self.rng.below(4) as i64, 4)))
            .collect::<Vec<_>>();
        Ok(FillerRound::Move(FillMove::new(p, adds)))
    }
    fn name(&self) -> String {
        "uniform-random".into()
    }
}

/// Sweeps p through 1..=n and back, pouring a full unit into p rotating
/// cups. Exercises every processor count against the emptier.
pub struct PtOscillator {
    n: usize,
    round: u64,
}

impl PtOscillator {
    pub fn new(n: usize) -> Self {
        PtOscillator { n, round: 0 }
    }

    fn p_for(&self, t: u64) -> usize {
        let n = self.n as u64;
        if n == 1 {
            return 1;
        }
        let period = 2 * (n - 1);
        let x = t % period;
        let p = if x < n { x + 1 } else { 2 * n - 1 - x };
        p as usize
    }
}

impl<N: FillValue> ObliviousFiller<N> for PtOscillator {
    fn next(&mut self) -> Result<FillerRound<N>> {
        let t = self.round;
        self.round += 1;
        let p = self.p_for(t);
        let adds = (0..p)
            .map(|i| (((t as usize) + i) % self.n, N::one()))
            .collect::<Vec<_>>();
        Ok(FillerRound::Move(FillMove::new(p, adds)))
    }
    fn name(&self) -> String {
        "pt-oscillate".into()
    }
}

/// The null strategy: half a unit into every cup, every round, forever.
pub struct UniformFillNull {
    n: usize,
}

impl UniformFillNull {
    pub fn new(n: usize) -> Self {
        assert!(n >= 2, "uniform fill needs at least 2 cups");
        UniformFillNull { n }
    }
}

impl<N: FillValue> ObliviousFiller<N> for UniformFillNull {
    fn next(&mut self) -> Result<FillerRound<N>> {
        let p = self.n / 2;
        let share = N::from_int(p as i64).div_nat(self.n);
        let adds = (0..self.n).map(|c| (c, share.clone())).collect::<Vec<_>>();
        Ok(FillerRound::Move(FillMove::new(p, adds)))
    }
    fn name(&self) -> String {
        "uniform-fill".into()
    }
}

/// Cheap pressure filler: one unit into cup `t mod n` with p = 1. Used as
/// the fallback after a constructive strategy completes its run.
pub struct RotatingPour {
    n: usize,
    round: u64,
}

impl RotatingPour {
    pub fn new(n: usize) -> Self {
        RotatingPour { n, round: 0 }
    }
}

impl<N: FillValue> ObliviousFiller<N> for RotatingPour {
    fn next(&mut self) -> Result<FillerRound<N>> {
        let c = (self.round as usize) % self.n;
        self.round += 1;
        Ok(FillerRound::Move(FillMove::new(1, [(c, N::one())])))
    }
    fn name(&self) -> String {
        "rotating-pour".into()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::num::Rat;
    use crate::rng::{consumer, SplitRng};

    #[test]
    fn oscillator_covers_full_p_spectrum() {
        let mut f = PtOscillator::new(4);
        let mut seen = std::collections::BTreeSet::new();
        for _ in 0..12 {
            match <PtOscillator as ObliviousFiller<Rat>>::next(&mut f).unwrap() {
                FillerRound::Move(m) => {
                    m.validate(4).unwrap();
                    seen.insert(m.p);
                }
                _ => panic!("oscillator never finishes"),
            }
        }
        assert_eq!(seen, (1..=4).collect());
    }

    #[test]
    fn uniform_random_moves_are_always_legal() {
        let mut f = UniformRandomFiller::new(6, SplitRng::new(3, 0, consumer::FILLER));
        for _ in 0..200 {
            match <UniformRandomFiller as ObliviousFiller<Rat>>::next(&mut f).unwrap() {
                FillerRound::Move(m) => m.validate(6).unwrap(),
                _ => panic!("never finishes"),
            }
        }
    }

    #[test]
    fn null_filler_splits_evenly() {
        let mut f = UniformFillNull::new(8);
        match <UniformFillNull as ObliviousFiller<Rat>>::next(&mut f).unwrap() {
            FillerRound::Move(m) => {
                assert_eq!(m.p, 4);
                assert_eq!(m.adds.len(), 8);
                assert!(m.adds.values().all(|a| *a == Rat::from_ratio(1, 2)));
            }
            _ => panic!(),
        }
    }
}
