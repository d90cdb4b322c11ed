use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::InteractionGraph;
use crate::error::{Error, Result};

/// Users with fewer interactions than this are kept entirely in train.
pub const MIN_SPLIT_INTERACTIONS: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SplitRatios {
    pub train: f64,
    pub val: f64,
    pub test: f64,
}

impl Default for SplitRatios {
    fn default() -> Self {
        Self {
            train: 0.7,
            val: 0.1,
            test: 0.2,
        }
    }
}

impl SplitRatios {
    pub fn validate(&self) -> Result<()> {
        let all = [self.train, self.val, self.test];
        if all.iter().any(|r| !(r.is_finite() && *r > 0.0)) {
            return Err(Error::Config(format!("split ratios must be positive, got {all:?}")));
        }
        if (all.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return Err(Error::Config(format!("split ratios must sum to 1, got {all:?}")));
        }
        Ok(())
    }

    /// `(train, val, test)` counts for a user with `n` interactions. Val and
    /// test round down so the remainder lands in train.
    pub fn counts(&self, n: usize) -> (usize, usize, usize) {
        if n < MIN_SPLIT_INTERACTIONS {
            return (n, 0, 0);
        }
        let val = (self.val * n as f64 + 1e-9).floor() as usize;
        let test = (self.test * n as f64 + 1e-9).floor() as usize;
        (n - val - test, val, test)
    }
}

#[derive(Debug, Clone)]
pub struct SplitBundle {
    pub train: InteractionGraph,
    pub val: InteractionGraph,
    pub test: InteractionGraph,
    pub seed: u64,
    pub ratios: SplitRatios,
}

/// Per-user shuffled split. Each part preserves the source order of its
/// interactions.
pub fn split_interactions(g: &InteractionGraph, ratios: SplitRatios, seed: u64) -> Result<SplitBundle> {
    ratios.validate()?;
    let mut by_user: Vec<Vec<usize>> = vec![Vec::new(); g.n_users()];
    for (k, it) in g.interactions().iter().enumerate() {
        by_user[it.user].push(k);
    }

    #[derive(Clone, Copy)]
    enum Part {
        Train,
        Val,
        Test,
    }
    let mut part = vec![Part::Train; g.len()];
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for rows in by_user.iter_mut() {
        let (n_train, n_val, _) = ratios.counts(rows.len());
        if n_train == rows.len() {
            continue;
        }
        rows.shuffle(&mut rng);
        for (pos, &k) in rows.iter().enumerate() {
            part[k] = if pos < n_train {
                Part::Train
            } else if pos < n_train + n_val {
                Part::Val
            } else {
                Part::Test
            };
        }
    }

    let (mut train, mut val, mut test) = (Vec::new(), Vec::new(), Vec::new());
    for (it, p) in g.interactions().iter().zip(&part) {
        match p {
            Part::Train => train.push(*it),
            Part::Val => val.push(*it),
            Part::Test => test.push(*it),
        }
    }
    Ok(SplitBundle {
        train: g.with_interactions(train)?,
        val: g.with_interactions(val)?,
        test: g.with_interactions(test)?,
        seed,
        ratios,
    })
}
