use std::collections::HashMap;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numkit::rng::keyed_rng;

/// Largest player count the exact method enumerates (2ⁿ coalitions).
pub const MAX_EXACT_PLAYERS: usize = 12;

/// A cooperative game: `value` maps a coalition (membership flag per
/// player) to a payoff.
pub trait Game {
    fn n_players(&self) -> usize;
    fn value(&self, coalition: &[bool]) -> Result<f64>;
}

/// Plain closure over coalitions, handy for constructed games.
pub struct FnGame<F> {
    pub n: usize,
    pub f: F,
}

impl<F: Fn(&[bool]) -> f64> Game for FnGame<F> {
    fn n_players(&self) -> usize {
        self.n
    }
    fn value(&self, coalition: &[bool]) -> Result<f64> {
        Ok((self.f)(coalition))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "lowercase")]
pub enum Method {
    Exact,
    Permutation {
        n_samples: usize,
        seed: u64,
        /// All n! orderings were used instead of sampling.
        enumerated: bool,
    },
}

#[derive(Clone, Debug, PartialEq)]
pub struct ShapleyValues {
    pub phi: Vec<f64>,
    /// Standard error per player (permutation method only).
    pub stderr: Option<Vec<f64>>,
    pub base_value: f64,
    pub full_value: f64,
    pub method: Method,
}

fn coalition_of(mask: usize, n: usize) -> Vec<bool> {
    (0..n).map(|i| mask >> i & 1 == 1).collect()
}

/// `φᵢ = Σ_{S⊆N∖{i}} |S|!(n−|S|−1)!/n! · (v(S∪{i}) − v(S))`, over all 2ⁿ
/// coalitions.
pub fn shapley_exact(game: &dyn Game) -> Result<ShapleyValues> {
    let n = game.n_players();
    if n > MAX_EXACT_PLAYERS {
        return Err(Error::Config(format!(
            "exact Shapley supports at most {MAX_EXACT_PLAYERS} players, got {n}"
        )));
    }
    let values = (0..1usize << n)
        .map(|m| game.value(&coalition_of(m, n)))
        .collect::<Result<Vec<f64>>>()?;
    // weight[s] = s!(n−s−1)!/n!
    let mut fact = vec![1.0f64; n + 1];
    for k in 1..=n {
        fact[k] = fact[k - 1] * k as f64;
    }
    let weight: Vec<f64> = (0..n.max(1))
        .map(|s| fact[s] * fact[n.saturating_sub(s + 1)] / fact[n])
        .collect();
    let mut phi = vec![0.0; n];
    for (i, p) in phi.iter_mut().enumerate() {
        let bit = 1usize << i;
        for m in (0..1usize << n).filter(|m| m & bit == 0) {
            *p += weight[m.count_ones() as usize] * (values[m | bit] - values[m]);
        }
    }
    Ok(ShapleyValues {
        phi,
        stderr: None,
        base_value: values[0],
        full_value: values[(1usize << n) - 1],
        method: Method::Exact,
    })
}

/// Memoizes coalition values by bitset.
struct Cache<'a> {
    game: &'a dyn Game,
    seen: HashMap<Vec<u64>, f64>,
}

impl Cache<'_> {
    fn value(&mut self, coalition: &[bool]) -> Result<f64> {
        let mut key = vec![0u64; coalition.len().div_ceil(64)];
        for (i, &b) in coalition.iter().enumerate() {
            if b {
                key[i / 64] |= 1 << (i % 64);
            }
        }
        if let Some(&v) = self.seen.get(&key) {
            return Ok(v);
        }
        let v = self.game.value(coalition)?;
        self.seen.insert(key, v);
        Ok(v)
    }
}

/// Lexicographic successor; false after the last permutation.
fn next_permutation(p: &mut [usize]) -> bool {
    let Some(i) = (1..p.len()).rev().find(|&i| p[i - 1] < p[i]) else {
        return false;
    };
    let j = (i..p.len())
        .rev()
        .find(|&j| p[j] > p[i - 1])
        .expect("exists by choice of i");
    p.swap(i - 1, j);
    p[i..].reverse();
    true
}

/// Mean marginal contribution over player orderings. When `n! ≤
/// n_samples` every ordering is used once, in lexicographic order;
/// otherwise `n_samples` orderings are drawn with a generator keyed by
/// `seed`. Standard errors are the sample standard deviation over `√m`.
pub fn shapley_permutation(game: &dyn Game, n_samples: usize, seed: u64) -> Result<ShapleyValues> {
    if n_samples == 0 {
        return Err(Error::Config("n_samples must be at least 1".into()));
    }
    let n = game.n_players();
    let mut cache = Cache {
        game,
        seen: HashMap::new(),
    };
    let base_value = cache.value(&vec![false; n])?;
    let full_value = cache.value(&vec![true; n])?;

    let n_fact = (1..=n).try_fold(1usize, |acc, k| acc.checked_mul(k));
    let enumerate = n_fact.is_some_and(|f| f <= n_samples);
    let mut sum = vec![0.0; n];
    let mut sum_sq = vec![0.0; n];
    let mut m = 0usize;
    let mut perm: Vec<usize> = (0..n).collect();
    let mut rng = keyed_rng(seed, "shapley.permutation", 0);
    loop {
        if !enumerate {
            if m == n_samples {
                break;
            }
            perm.sort_unstable();
            perm.shuffle(&mut rng);
        }
        let mut coalition = vec![false; n];
        let mut prev = base_value;
        for &i in &perm {
            coalition[i] = true;
            let v = cache.value(&coalition)?;
            let d = v - prev;
            sum[i] += d;
            sum_sq[i] += d * d;
            prev = v;
        }
        m += 1;
        if enumerate && !next_permutation(&mut perm) {
            break;
        }
    }
    let mf = m as f64;
    let phi: Vec<f64> = sum.iter().map(|s| s / mf).collect();
    let stderr = phi
        .iter()
        .zip(&sum_sq)
        .map(|(mean, sq)| {
            if enumerate || m < 2 {
                0.0
            } else {
                let var = (sq - mf * mean * mean).max(0.0) / (mf - 1.0);
                (var / mf).sqrt()
            }
        })
        .collect();
    Ok(ShapleyValues {
        phi,
        stderr: Some(stderr),
        base_value,
        full_value,
        method: Method::Permutation {
            n_samples,
            seed,
            enumerated: enumerate,
        },
    })
}
