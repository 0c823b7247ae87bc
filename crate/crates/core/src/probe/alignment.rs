use std::collections::BTreeMap;

use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{AttributeTable, CcaOptions, CcaProblem, ProbeResult};
use crate::error::{invalid, Error, Result};
use crate::rng::{self, stream};
use crate::stats::{average_ranks, cosine, norm, spearman, two_sided_normal_p};

/// Pairwise cosines between probe directions with permutation p-values.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AlignmentMatrix {
    pub attributes: Vec<String>,
    pub cosine: Vec<Vec<f64>>,
    /// `None` on the diagonal.
    pub p_value: Vec<Vec<Option<f64>>>,
    pub n_perm: usize,
}

/// Cosine similarity of every pair of directions. The p-value of a pair is
/// the add-one proportion of permutations (both attributes shuffled
/// independently, directions recomputed) whose absolute cosine reaches the
/// observed absolute cosine.
pub fn alignment_matrix(
    directions: &[ProbeResult],
    phi: &DMatrix<f64>,
    table: &AttributeTable,
    n_perm: usize,
    seed: u64,
    options: &CcaOptions,
) -> Result<AlignmentMatrix> {
    let k = directions.len();
    if k < 2 {
        return Err(invalid("alignment needs at least two directions"));
    }
    if n_perm == 0 {
        return Err(invalid("need at least one permutation"));
    }
    let mut cos = vec![vec![0.0; k]; k];
    for i in 0..k {
        for j in 0..k {
            cos[i][j] = cosine(&directions[i].direction, &directions[j].direction)
                .ok_or_else(|| Error::Degenerate("zero direction".into()))?;
        }
    }

    let problems: Vec<(CcaProblem, Vec<f64>)> = directions
        .iter()
        .map(|p| {
            let (rows, values) = table.get(&p.attribute)?.covered();
            Ok((CcaProblem::new(phi, rows, options)?, values))
        })
        .collect::<Result<_>>()?;

    // Each permutation shuffles every attribute with its own stream.
    let exceed: Vec<Vec<usize>> = (0..n_perm)
        .into_par_iter()
        .map(|b| -> Result<Vec<Vec<usize>>> {
            let perm_dirs: Vec<Vec<f64>> = problems
                .iter()
                .enumerate()
                .map(|(a, (problem, values))| {
                    let mut rng = rng::seeded(rng::derive(rng::derive(seed, b as u64), a as u64), stream::PERMUTATION);
                    let mut v = values.clone();
                    v.shuffle(&mut rng);
                    Ok(problem.direction(phi, &v, None)?.0)
                })
                .collect::<Result<_>>()?;
            let mut hits = vec![vec![0usize; k]; k];
            for i in 0..k {
                for j in (i + 1)..k {
                    let c = cosine(&perm_dirs[i], &perm_dirs[j]).unwrap_or(0.0).abs();
                    if c >= cos[i][j].abs() {
                        hits[i][j] = 1;
                        hits[j][i] = 1;
                    }
                }
            }
            Ok(hits)
        })
        .try_fold(
            || vec![vec![0usize; k]; k],
            |mut acc, hits| {
                let hits = hits?;
                for i in 0..k {
                    for j in 0..k {
                        acc[i][j] += hits[i][j];
                    }
                }
                Ok::<_, Error>(acc)
            },
        )
        .try_reduce(
            || vec![vec![0usize; k]; k],
            |mut a, b| {
                for i in 0..k {
                    for j in 0..k {
                        a[i][j] += b[i][j];
                    }
                }
                Ok(a)
            },
        )?;

    let p_value = (0..k)
        .map(|i| {
            (0..k)
                .map(|j| (i != j).then(|| (1 + exceed[i][j]) as f64 / (1 + n_perm) as f64))
                .collect()
        })
        .collect();
    Ok(AlignmentMatrix {
        attributes: directions.iter().map(|p| p.attribute.clone()).collect(),
        cosine: cos,
        p_value,
        n_perm,
    })
}

/// Spearman correlation between the projections of all entities onto two
/// unit directions.
pub fn projection_spearman(phi: &DMatrix<f64>, w1: &[f64], w2: &[f64]) -> Result<f64> {
    for w in [w1, w2] {
        if w.len() != phi.ncols() {
            return Err(invalid("direction has the wrong dimension"));
        }
        if (norm(w) - 1.0).abs() > 1e-8 {
            return Err(invalid("directions must have unit norm"));
        }
    }
    let project = |w: &[f64]| -> Vec<f64> { (phi * nalgebra::DVector::from_column_slice(w)).as_slice().to_vec() };
    spearman(&project(w1), &project(w2)).ok_or_else(|| Error::Degenerate("constant projection".into()))
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Ordering {
    AHigher,
    BHigher,
    Equal,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OrderingTest {
    /// Mann-Whitney U of group A.
    pub u: f64,
    pub p_value: f64,
    /// Which group has the larger median position.
    pub direction: Ordering,
}

fn median(xs: &mut [f64]) -> f64 {
    xs.sort_by(f64::total_cmp);
    let n = xs.len();
    if n % 2 == 1 {
        xs[n / 2]
    } else {
        0.5 * (xs[n / 2 - 1] + xs[n / 2])
    }
}

/// Two-sided Mann-Whitney U test of `positions` between two entity groups,
/// normal approximation with tie correction.
pub fn ordering_test(positions: &[f64], group_a: &[usize], group_b: &[usize]) -> Result<OrderingTest> {
    if group_a.len() < 2 || group_b.len() < 2 {
        return Err(invalid("both groups need at least two members"));
    }
    let lookup = |g: &[usize]| -> Result<Vec<f64>> {
        g.iter()
            .map(|&i| {
                positions
                    .get(i)
                    .copied()
                    .ok_or_else(|| Error::UnknownEntity(format!("#{i}")))
            })
            .collect()
    };
    let mut a = lookup(group_a)?;
    let mut b = lookup(group_b)?;
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let pooled: Vec<f64> = a.iter().chain(&b).copied().collect();
    let ranks = average_ranks(&pooled);
    let rank_sum_a: f64 = ranks[..a.len()].iter().sum();
    let u = rank_sum_a - na * (na + 1.0) / 2.0;

    let n = na + nb;
    let mut sorted = pooled.clone();
    sorted.sort_by(f64::total_cmp);
    let mut tie_term = 0.0;
    let mut i = 0;
    while i < sorted.len() {
        let mut j = i;
        while j < sorted.len() && sorted[j] == sorted[i] {
            j += 1;
        }
        let t = (j - i) as f64;
        tie_term += t * t * t - t;
        i = j;
    }
    let var = na * nb / 12.0 * ((n + 1.0) - tie_term / (n * (n - 1.0)));
    let p_value = if var <= 0.0 {
        1.0
    } else {
        two_sided_normal_p((u - na * nb / 2.0) / var.sqrt())
    };
    let (ma, mb) = (median(&mut a), median(&mut b));
    let direction = match ma.partial_cmp(&mb) {
        Some(std::cmp::Ordering::Greater) => Ordering::AHigher,
        Some(std::cmp::Ordering::Less) => Ordering::BHigher,
        _ => Ordering::Equal,
    };
    Ok(OrderingTest { u, p_value, direction })
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Decile {
    First,
    Last,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TokenLift {
    pub token: String,
    /// Frequency in the decile over frequency among all entities.
    pub lift: f64,
    pub decile_frequency: f64,
    pub overall_frequency: f64,
}

/// Tokens over-represented among the entities in the lowest or highest
/// tenth of `positions`. Tokens held by fewer than `min_support` of the
/// decile are dropped. Sorted by lift, descending.
pub fn decile_overrepresentation(
    positions: &[f64],
    tokens: &[Vec<String>],
    decile: Decile,
    min_support: f64,
) -> Result<Vec<TokenLift>> {
    let n = positions.len();
    if n < 10 {
        return Err(invalid("decile analysis needs at least 10 entities"));
    }
    if tokens.len() != n {
        return Err(invalid("one token list per entity is required"));
    }
    if !(0.0..=1.0).contains(&min_support) {
        return Err(invalid("min_support must lie in [0, 1]"));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| positions[i].total_cmp(&positions[j]).then(i.cmp(&j)));
    let size = n / 10;
    let members = match decile {
        Decile::First => &order[..size],
        Decile::Last => &order[n - size..],
    };

    let count = |ids: &mut dyn Iterator<Item = usize>| {
        let mut c: BTreeMap<&str, usize> = BTreeMap::new();
        for i in ids {
            let mut seen: Vec<&str> = tokens[i].iter().map(String::as_str).collect();
            seen.sort_unstable();
            seen.dedup();
            for t in seen {
                *c.entry(t).or_default() += 1;
            }
        }
        c
    };
    let overall = count(&mut (0..n));
    let inside = count(&mut members.iter().copied());

    let mut out: Vec<TokenLift> = inside
        .into_iter()
        .filter_map(|(t, c)| {
            let decile_frequency = c as f64 / size as f64;
            let overall_frequency = overall[t] as f64 / n as f64;
            (decile_frequency >= min_support).then(|| TokenLift {
                token: t.to_string(),
                lift: decile_frequency / overall_frequency,
                decile_frequency,
                overall_frequency,
            })
        })
        .collect();
    out.sort_by(|a, b| b.lift.total_cmp(&a.lift).then_with(|| a.token.cmp(&b.token)));
    Ok(out)
}
