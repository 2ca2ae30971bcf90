//! High-level histories of concurrent runs and a linearizability checker for
//! the set type.

mod checker;
mod history;

pub use checker::{
    check_linearizable, check_linearizable_with_cap, verify_witness, CheckError, Verdict,
    DEFAULT_STATE_CAP, MAX_OPS,
};
pub use history::{
    oracle_apply, record_run, History, HistoryError, OpRecord, SetModel, ThreadProgram,
};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::set_api::{ImplKind, OpKind, SetError};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct StressConfig {
    pub threads: usize,
    pub ops_per_thread: usize,
    /// Keys are drawn from `1..=key_range`.
    pub key_range: i64,
    pub rounds: usize,
    pub seed: u64,
}

/// Uniform op kinds and keys. The same seed always yields the same programs.
pub fn random_programs(
    rng: &mut impl Rng,
    threads: usize,
    ops_per_thread: usize,
    key_range: i64,
) -> Vec<ThreadProgram> {
    const KINDS: [OpKind; 3] = [OpKind::Insert, OpKind::Remove, OpKind::Contains];
    (0..threads)
        .map(|_| {
            (0..ops_per_thread)
                .map(|_| {
                    let kind = KINDS[rng.random_range(0..3)];
                    (kind, rng.random_range(1..=key_range))
                })
                .collect()
        })
        .collect()
}

/// Seed of round `round`; rerunning one round needs only this value.
pub fn round_seed(seed: u64, round: usize) -> u64 {
    seed.wrapping_add((round as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15))
}

/// A random initial set and programs for one round.
pub fn round_input(config: &StressConfig, round_seed: u64) -> (Vec<i64>, Vec<ThreadProgram>) {
    let mut rng = ChaCha8Rng::seed_from_u64(round_seed);
    let initial = (1..=config.key_range)
        .filter(|_| rng.random_bool(0.5))
        .collect();
    let programs = random_programs(
        &mut rng,
        config.threads,
        config.ops_per_thread,
        config.key_range,
    );
    (initial, programs)
}

#[derive(Debug)]
pub struct StressFailure {
    pub round: usize,
    pub round_seed: u64,
    pub history: History,
    pub error: Option<CheckError>,
}

#[derive(Debug, thiserror::Error)]
pub enum StressError {
    #[error(transparent)]
    Set(#[from] SetError),
}

/// Runs `config.rounds` recorded rounds and checks each history. Returns the
/// first round that is not linearizable (or whose search hit the cap).
pub fn stress(kind: ImplKind, config: &StressConfig) -> Result<Option<StressFailure>, StressError> {
    for round in 0..config.rounds {
        let seed = round_seed(config.seed, round);
        let (initial, programs) = round_input(config, seed);
        let history = record_run(kind, &programs, &initial)?;
        let failure = |error| StressFailure {
            round,
            round_seed: seed,
            history: history.clone(),
            error,
        };
        match check_linearizable(&history) {
            Ok(Verdict::Linearizable(_)) => {}
            Ok(Verdict::NotLinearizable) => return Ok(Some(failure(None))),
            Err(e) => return Ok(Some(failure(Some(e)))),
        }
    }
    Ok(None)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn same_seed_same_programs() {
        let config = StressConfig {
            threads: 2,
            ops_per_thread: 5,
            key_range: 4,
            rounds: 1,
            seed: 9,
        };
        assert_eq!(round_input(&config, 3), round_input(&config, 3));
        let (_, programs) = round_input(&config, 3);
        assert_eq!(programs.len(), 2);
        assert!(programs
            .iter()
            .flatten()
            .all(|&(_, k)| (1..=4).contains(&k)));
    }

    #[test]
    fn recorded_two_thread_histories_are_well_formed() {
        let config = StressConfig {
            threads: 2,
            ops_per_thread: 5,
            key_range: 4,
            rounds: 1,
            seed: 1,
        };
        for round in 0..20 {
            let (initial, programs) = round_input(&config, round_seed(1, round));
            let h = record_run(ImplKind::Versioned, &programs, &initial).unwrap();
            assert_eq!(h.ops.len(), 10);
            h.check_well_formed().unwrap();
        }
    }

    #[test]
    fn sequential_impl_is_refused() {
        let config = StressConfig {
            threads: 1,
            ops_per_thread: 1,
            key_range: 1,
            rounds: 1,
            seed: 0,
        };
        assert!(stress(ImplKind::Sequential, &config).is_err());
    }
}
