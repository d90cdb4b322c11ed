//! Uniform BPR triplet sampling with rejection-sampled negatives.

use rand::Rng;

use crate::data::InteractionGraph;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BprBatch {
    pub users: Vec<usize>,
    pub pos: Vec<usize>,
    pub neg: Vec<usize>,
}

impl BprBatch {
    pub fn len(&self) -> usize {
        self.users.len()
    }

    pub fn is_empty(&self) -> bool {
        self.users.is_empty()
    }
}

#[derive(Debug, Clone)]
pub struct BprSampler {
    pairs: Vec<(usize, usize)>,
    user_items: Vec<Vec<usize>>,
    n_items: usize,
}

impl BprSampler {
    /// Users who interacted with every item cannot be given a negative and
    /// are dropped with a warning.
    pub fn new(train: &InteractionGraph) -> Result<Self> {
        let user_items = train.user_items();
        let n_items = train.n_items();
        let full: Vec<usize> = (0..train.n_users())
            .filter(|&u| !user_items[u].is_empty() && user_items[u].len() == n_items)
            .collect();
        if !full.is_empty() {
            log::warn!("skipping {} user(s) who interacted with every item", full.len());
        }
        let pairs: Vec<(usize, usize)> = train
            .interactions()
            .iter()
            .filter(|x| user_items[x.user].len() < n_items)
            .map(|x| (x.user, x.item))
            .collect();
        if pairs.is_empty() {
            return Err(Error::Data("no train interaction admits a negative sample".into()));
        }
        Ok(Self {
            pairs,
            user_items,
            n_items,
        })
    }

    pub fn n_pairs(&self) -> usize {
        self.pairs.len()
    }

    pub fn sample<R: Rng>(&self, batch_size: usize, rng: &mut R) -> BprBatch {
        let mut batch = BprBatch {
            users: Vec::with_capacity(batch_size),
            pos: Vec::with_capacity(batch_size),
            neg: Vec::with_capacity(batch_size),
        };
        for _ in 0..batch_size {
            let (u, i) = self.pairs[rng.random_range(0..self.pairs.len())];
            let j = loop {
                let j = rng.random_range(0..self.n_items);
                if self.user_items[u].binary_search(&j).is_err() {
                    break j;
                }
            };
            batch.users.push(u);
            batch.pos.push(i);
            batch.neg.push(j);
        }
        batch
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn forced_triplet() {
        let g = InteractionGraph::from_pairs(1, 2, &[(0, 0)]).unwrap();
        let s = BprSampler::new(&g).unwrap();
        let b = s.sample(50, &mut ChaCha8Rng::seed_from_u64(1));
        assert!(b.users.iter().all(|u| *u == 0));
        assert!(b.pos.iter().all(|i| *i == 0));
        assert!(b.neg.iter().all(|j| *j == 1));
    }

    #[test]
    fn saturated_users_skipped() {
        let g = InteractionGraph::from_pairs(2, 2, &[(0, 0), (0, 1), (1, 0)]).unwrap();
        let s = BprSampler::new(&g).unwrap();
        assert_eq!(s.n_pairs(), 1);
        let all = InteractionGraph::from_pairs(1, 1, &[(0, 0)]).unwrap();
        assert!(BprSampler::new(&all).is_err());
    }

    #[test]
    fn deterministic_per_seed() {
        let g = InteractionGraph::from_pairs(3, 5, &[(0, 0), (1, 2), (2, 4), (0, 3)]).unwrap();
        let s = BprSampler::new(&g).unwrap();
        let mut a = ChaCha8Rng::seed_from_u64(4);
        let mut b = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..3 {
            assert_eq!(s.sample(16, &mut a), s.sample(16, &mut b));
        }
    }

    #[test]
    fn triplets_respect_train_membership() {
        let g = InteractionGraph::from_pairs(3, 5, &[(0, 0), (1, 2), (2, 4), (0, 3), (1, 1)]).unwrap();
        let s = BprSampler::new(&g).unwrap();
        let ui = g.user_items();
        let b = s.sample(500, &mut ChaCha8Rng::seed_from_u64(9));
        for k in 0..b.len() {
            assert!(ui[b.users[k]].contains(&b.pos[k]));
            assert!(!ui[b.users[k]].contains(&b.neg[k]));
        }
    }
}
