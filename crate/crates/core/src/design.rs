//! The two competing designs and stratified SRSWOR sampling under them.
//!
//! Under [`Design::OnePerStratum`] the sampling strata are the original `2H`
//! strata with one unit drawn from each. Under [`Design::TwoPerStratum`] the
//! sampling strata are the `H` groups (the two strata merged) with two units
//! drawn from each. Both designs select `2H` units in total.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numeric::mix_seed;
use crate::population::FinitePopulation;

pub const DEFAULT_ENUMERATION_CAP: u64 = 1_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Design {
    OnePerStratum,
    TwoPerStratum,
}

impl Design {
    /// Units drawn per sampling stratum.
    pub fn per_stratum(self) -> usize {
        match self {
            Design::OnePerStratum => 1,
            Design::TwoPerStratum => 2,
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Design::OnePerStratum => "one_per_stratum",
            Design::TwoPerStratum => "two_per_stratum",
        }
    }

    /// Sizes of the sampling strata of `pop` under this design.
    pub fn stratum_sizes(self, pop: &FinitePopulation) -> Vec<usize> {
        match self {
            Design::OnePerStratum => pop.sizes(),
            Design::TwoPerStratum => pop.group_sizes(),
        }
    }

    /// Weights of the sampling strata of `pop` under this design.
    pub fn weights(self, pop: &FinitePopulation) -> Vec<f64> {
        match self {
            Design::OnePerStratum => pop.weights().to_vec(),
            Design::TwoPerStratum => pop.group_weights(),
        }
    }

    pub(crate) fn check_feasible(self, pop: &FinitePopulation) -> Result<()> {
        let n = self.per_stratum();
        if let Some((s, size)) = self.stratum_sizes(pop).into_iter().enumerate().find(|(_, m)| *m < n) {
            return Err(Error::DesignInfeasible(format!(
                "sampling stratum {} has {} units but the {} design draws {}",
                s + 1,
                size,
                self.label(),
                n
            )));
        }
        Ok(())
    }
}

/// Value of unit `j` of sampling stratum `s`. Group strata are addressed as
/// the lower stratum's units followed by the upper stratum's.
fn unit_value(pop: &FinitePopulation, design: Design, s: usize, j: usize) -> f64 {
    match design {
        Design::OnePerStratum => pop.stratum(s)[j],
        Design::TwoPerStratum => {
            let [a, b] = pop.pairs()[s];
            let first = pop.stratum(a);
            if j < first.len() {
                first[j]
            } else {
                pop.stratum(b)[j - first.len()]
            }
        }
    }
}

/// One realized sample.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleDraw {
    pub design: Design,
    pub replication: u64,
    /// Selected unit positions within each sampling stratum.
    pub units: Vec<Vec<usize>>,
    /// Selected values, aligned with `units`.
    pub values: Vec<Vec<f64>>,
    /// Population sizes of the sampling strata.
    pub stratum_sizes: Vec<usize>,
}

impl SampleDraw {
    pub fn stratum_means(&self) -> Vec<f64> {
        self.values
            .iter()
            .map(|v| v.iter().sum::<f64>() / v.len() as f64)
            .collect()
    }

    /// Sampling-stratum weights `N_s / sum N_s`.
    pub fn weights(&self) -> Vec<f64> {
        let total: usize = self.stratum_sizes.iter().sum();
        self.stratum_sizes.iter().map(|&n| n as f64 / total as f64).collect()
    }
}

/// Partial Fisher-Yates over the virtual array `0..m`, touching only the
/// `n` swapped positions.
fn srswor<R: Rng + ?Sized>(rng: &mut R, m: usize, n: usize) -> Vec<usize> {
    let mut moved: Vec<(usize, usize)> = Vec::with_capacity(n);
    let lookup =
        |moved: &[(usize, usize)], pos: usize| moved.iter().rev().find(|(p, _)| *p == pos).map_or(pos, |(_, v)| *v);
    let mut out = Vec::with_capacity(n);
    for k in 0..n {
        let j = rng.random_range(k..m);
        let at_j = lookup(&moved, j);
        let at_k = lookup(&moved, k);
        moved.push((j, at_k));
        out.push(at_j);
    }
    out
}

/// Draw one stratified SRSWOR sample; deterministic in `rep_seed`.
pub fn draw_sample(pop: &FinitePopulation, design: Design, rep_seed: u64) -> Result<SampleDraw> {
    design.check_feasible(pop)?;
    Ok(draw_unchecked(pop, design, rep_seed, 0))
}

/// Draw replication `replication` of a study seeded with `master_seed`.
pub fn draw_replication(
    pop: &FinitePopulation,
    design: Design,
    master_seed: u64,
    replication: u64,
) -> Result<SampleDraw> {
    design.check_feasible(pop)?;
    Ok(draw_unchecked(
        pop,
        design,
        mix_seed(master_seed, replication),
        replication,
    ))
}

pub(crate) fn draw_unchecked(pop: &FinitePopulation, design: Design, rep_seed: u64, replication: u64) -> SampleDraw {
    let mut rng = ChaCha8Rng::seed_from_u64(rep_seed);
    let sizes = design.stratum_sizes(pop);
    let n = design.per_stratum();
    let mut units = Vec::with_capacity(sizes.len());
    let mut values = Vec::with_capacity(sizes.len());
    for (s, &m) in sizes.iter().enumerate() {
        let picked = srswor(&mut rng, m, n);
        values.push(picked.iter().map(|&j| unit_value(pop, design, s, j)).collect());
        units.push(picked);
    }
    SampleDraw {
        design,
        replication,
        units,
        values,
        stratum_sizes: sizes,
    }
}

fn binomial(m: usize, k: usize) -> u128 {
    if k > m {
        return 0;
    }
    let k = k.min(m - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        acc = acc * (m - i) as u128 / (i + 1) as u128;
    }
    acc
}

fn combinations(m: usize, k: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut current: Vec<usize> = (0..k).collect();
    if k > m {
        return out;
    }
    loop {
        out.push(current.clone());
        let Some(i) = (0..k).rev().find(|&i| current[i] != i + m - k) else {
            return out;
        };
        current[i] += 1;
        for t in i + 1..k {
            current[t] = current[t - 1] + 1;
        }
    }
}

/// A sample together with its exact selection probability.
#[derive(Debug, Clone, PartialEq)]
pub struct EnumeratedSample {
    pub draw: SampleDraw,
    pub probability: f64,
}

/// Iterator over every possible sample of a design.
#[derive(Debug, Clone)]
pub struct SampleEnumerator<'a> {
    pop: &'a FinitePopulation,
    design: Design,
    choices: Vec<Vec<Vec<usize>>>,
    odometer: Vec<usize>,
    sizes: Vec<usize>,
    count: u128,
    next_index: u64,
    done: bool,
}

impl SampleEnumerator<'_> {
    /// Total number of samples the iterator yields.
    pub fn count_total(&self) -> u128 {
        self.count
    }
}

impl Iterator for SampleEnumerator<'_> {
    type Item = EnumeratedSample;

    fn next(&mut self) -> Option<Self::Item> {
        if self.done {
            return None;
        }
        let units: Vec<Vec<usize>> = self
            .odometer
            .iter()
            .zip(&self.choices)
            .map(|(&i, c)| c[i].clone())
            .collect();
        let values = units
            .iter()
            .enumerate()
            .map(|(s, u)| u.iter().map(|&j| unit_value(self.pop, self.design, s, j)).collect())
            .collect();
        let item = EnumeratedSample {
            draw: SampleDraw {
                design: self.design,
                replication: self.next_index,
                units,
                values,
                stratum_sizes: self.sizes.clone(),
            },
            probability: 1.0 / self.count as f64,
        };
        self.next_index += 1;

        // advance the odometer, last stratum fastest
        let mut s = self.odometer.len();
        loop {
            if s == 0 {
                self.done = true;
                break;
            }
            s -= 1;
            self.odometer[s] += 1;
            if self.odometer[s] < self.choices[s].len() {
                break;
            }
            self.odometer[s] = 0;
        }
        Some(item)
    }
}

/// Enumerate all samples of `design` on `pop`, each with probability
/// `1 / prod_s C(N_s, n_s)`. Fails if the count exceeds `cap`.
pub fn enumerate_samples(pop: &FinitePopulation, design: Design, cap: u64) -> Result<SampleEnumerator<'_>> {
    design.check_feasible(pop)?;
    let sizes = design.stratum_sizes(pop);
    let n = design.per_stratum();
    let mut count: u128 = 1;
    for &m in &sizes {
        count = count.saturating_mul(binomial(m, n));
    }
    if count > cap as u128 {
        return Err(Error::OracleInfeasible { count, cap });
    }
    let choices = sizes.iter().map(|&m| combinations(m, n)).collect();
    Ok(SampleEnumerator {
        pop,
        design,
        choices,
        odometer: vec![0; sizes.len()],
        sizes,
        count,
        next_index: 0,
        done: false,
    })
}
