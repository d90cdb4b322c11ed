//! Heterophilic synthetic benchmark.
//!
//! Items are dealt round-robin into genres and users round-robin into groups;
//! every group has a home genre (`group % n_item_genres`). Each draw of a user
//! comes from the home genre with probability `1 - cross_rate`, otherwise it is
//! uniform over the whole catalogue. Inside the home genre every group has its
//! own Zipf-shaped preference over a group-specific permutation of the genre's
//! items (`skew = 0` makes it uniform).

use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{IdMap, Interaction, InteractionGraph};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SynthParams {
    pub users: usize,
    pub items: usize,
    pub user_groups: usize,
    pub genres: usize,
    pub cross_rate: f64,
    pub per_user: usize,
    pub skew: f64,
    pub seed: u64,
}

impl Default for SynthParams {
    fn default() -> Self {
        Self {
            users: 2000,
            items: 1000,
            user_groups: 8,
            genres: 4,
            cross_rate: 0.3,
            per_user: 20,
            skew: 0.8,
            seed: 7,
        }
    }
}

impl SynthParams {
    pub fn validate(&self) -> Result<()> {
        if self.users == 0 || self.items == 0 || self.user_groups == 0 || self.genres == 0 || self.per_user == 0 {
            return Err(Error::Config("synthetic generator counts must be positive".into()));
        }
        if !(0.0..=1.0).contains(&self.cross_rate) {
            return Err(Error::Config(format!("cross_rate {} outside [0, 1]", self.cross_rate)));
        }
        if self.genres > self.items {
            return Err(Error::Config("more genres than items".into()));
        }
        if self.per_user > self.items {
            return Err(Error::Config(format!(
                "interactions per user ({}) exceeds item count ({})",
                self.per_user, self.items
            )));
        }
        if !(self.skew.is_finite() && self.skew >= 0.0) {
            return Err(Error::Config("skew must be finite and non-negative".into()));
        }
        Ok(())
    }
}

/// Ground-truth labels retained for diagnostics.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthLabels {
    pub user_group: Vec<usize>,
    pub user_home_genre: Vec<usize>,
    pub item_genre: Vec<usize>,
}

impl SynthLabels {
    /// Share of interactions whose item lies in the user's home genre.
    pub fn home_genre_fraction(&self, g: &InteractionGraph) -> f64 {
        if g.is_empty() {
            return 0.0;
        }
        let home = g
            .interactions()
            .iter()
            .filter(|it| self.item_genre[it.item] == self.user_home_genre[it.user])
            .count();
        home as f64 / g.len() as f64
    }
}

pub fn generate_synthetic_heterophilic(p: &SynthParams) -> Result<(InteractionGraph, SynthLabels)> {
    p.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(p.seed);

    let item_genre: Vec<usize> = (0..p.items).map(|i| i % p.genres).collect();
    let user_group: Vec<usize> = (0..p.users).map(|u| u % p.user_groups).collect();
    let user_home_genre: Vec<usize> = user_group.iter().map(|g| g % p.genres).collect();

    let mut genre_items: Vec<Vec<usize>> = vec![Vec::new(); p.genres];
    for (i, &g) in item_genre.iter().enumerate() {
        genre_items[g].push(i);
    }

    // Per group: items of its home genre in preference order with cumulative
    // Zipf weights.
    let prefs: Vec<(Vec<usize>, Vec<f64>)> = (0..p.user_groups)
        .map(|g| {
            let mut order = genre_items[g % p.genres].clone();
            order.shuffle(&mut rng);
            let mut acc = 0.0;
            let cdf = (0..order.len())
                .map(|r| {
                    acc += 1.0 / ((r + 1) as f64).powf(p.skew);
                    acc
                })
                .collect();
            (order, cdf)
        })
        .collect();

    let mut interactions = Vec::with_capacity(p.users * p.per_user);
    let mut taken = vec![false; p.items];
    for u in 0..p.users {
        let (order, cdf) = &prefs[user_group[u]];
        let home = user_home_genre[u];
        let home_size = genre_items[home].len();
        let mut chosen = Vec::with_capacity(p.per_user);
        let mut home_taken = 0usize;
        while chosen.len() < p.per_user {
            let cross = rng.random::<f64>() < p.cross_rate;
            let item = if cross || home_taken == home_size {
                rng.random_range(0..p.items)
            } else {
                let target = rng.random::<f64>() * cdf[cdf.len() - 1];
                let r = cdf.partition_point(|&c| c <= target).min(order.len() - 1);
                order[r]
            };
            if taken[item] {
                continue;
            }
            taken[item] = true;
            if item_genre[item] == home {
                home_taken += 1;
            }
            chosen.push(item);
        }
        for &i in &chosen {
            taken[i] = false;
            interactions.push(Interaction::new(u, i));
        }
    }

    let graph = InteractionGraph::new(
        Arc::new(IdMap::sequential("u", p.users)),
        Arc::new(IdMap::sequential("i", p.items)),
        interactions,
    )?;
    Ok((
        graph,
        SynthLabels {
            user_group,
            user_home_genre,
            item_genre,
        },
    ))
}
