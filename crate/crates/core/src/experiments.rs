//! Graph generators and experiment harnesses: stochastic block models, the
//! reduced chain model, random centers on a line, and `k_opt` frequency tables.
//!
//! Every sampler uses `ChaCha8Rng` seeded with `seed_from_u64(seed)`; sample `s`
//! of an experiment draws from stream `s` of that generator.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::outer::{k_opt_sweep, OuterConfig, SweepTable};
use crate::graph::WeightMatrix;

pub(crate) fn rng_for(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Stochastic block model: community sizes and a symmetric edge-probability matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SbmSpec {
    pub community_sizes: Vec<usize>,
    pub p: Vec<Vec<f64>>,
    pub seed: u64,
}

impl SbmSpec {
    pub fn validate(&self) -> Result<()> {
        let r = self.community_sizes.len();
        if self.p.len() != r || self.p.iter().any(|row| row.len() != r) {
            return Err(Error::DimensionMismatch { expected: r, got: self.p.len() });
        }
        for a in 0..r {
            for b in 0..r {
                let v = self.p[a][b];
                if !(0.0..=1.0).contains(&v) {
                    return Err(Error::InvalidInput(format!("p[{a}][{b}] = {v} not in [0, 1]")));
                }
                if v != self.p[b][a] {
                    return Err(Error::InvalidInput("probability matrix not symmetric".into()));
                }
            }
        }
        Ok(())
    }

    pub fn n(&self) -> usize {
        self.community_sizes.iter().sum()
    }

    /// Community index of every vertex.
    pub fn labels(&self) -> Vec<usize> {
        self.community_sizes
            .iter()
            .enumerate()
            .flat_map(|(c, &s)| std::iter::repeat(c).take(s))
            .collect()
    }

    /// Chain-coupled model: `p_aa = 1`, consecutive communities `a, a+1` coupled with
    /// `p_a = (r − a)/(r − 1) · p1` (1-based `a`), all other pairs zero.
    pub fn chain(r: usize, size: usize, p1: f64, seed: u64) -> Result<Self> {
        if r < 2 {
            return Err(Error::InvalidInput("chain model needs r >= 2".into()));
        }
        let mut p = vec![vec![0.0; r]; r];
        for (a, row) in p.iter_mut().enumerate() {
            row[a] = 1.0;
        }
        for a in 1..r {
            let pa = (r - a) as f64 / (r - 1) as f64 * p1;
            p[a - 1][a] = pa;
            p[a][a - 1] = pa;
        }
        let spec = Self { community_sizes: vec![size; r], p, seed };
        spec.validate()?;
        Ok(spec)
    }
}

/// Samples an unweighted SBM graph: each pair `i < j` is an edge with probability `p_{c(i) c(j)}`.
pub fn sample_sbm(spec: &SbmSpec) -> Result<WeightMatrix> {
    spec.validate()?;
    let labels = spec.labels();
    let n = labels.len();
    let mut rng = rng_for(spec.seed, 0);
    let mut trip = Vec::new();
    for i in 0..n {
        for j in i + 1..n {
            let p = spec.p[labels[i]][labels[j]];
            if rng.gen::<f64>() < p {
                trip.push((i, j, 1.0));
            }
        }
    }
    WeightMatrix::from_triplets(n, trip)
}

/// Reduced chain model on `2r` vertices: pair `(2a, 2a+1)` carries weight `size`,
/// and pairs `a−1`, `a` are coupled by `μ_a I_2` with `μ_a = (r − a)/(r − 1) · μ1`.
pub fn reduced_chain_model(r: usize, mu1: f64, size: f64) -> Result<WeightMatrix> {
    if r < 2 {
        return Err(Error::InvalidInput("chain model needs r >= 2".into()));
    }
    if !(mu1 >= 0.0 && size >= 0.0) {
        return Err(Error::InvalidInput("weights must be nonnegative".into()));
    }
    let mut trip = Vec::new();
    for a in 0..r {
        trip.push((2 * a, 2 * a + 1, size));
    }
    for a in 1..r {
        let mu = (r - a) as f64 / (r - 1) as f64 * mu1;
        let (p, q) = (2 * (a - 1), 2 * a);
        trip.push((p, q, mu));
        trip.push((p + 1, q + 1, mu));
    }
    WeightMatrix::from_triplets(2 * r, trip)
}

/// Random points on a line drawn around a set of centers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CentersSpec {
    pub centers: Vec<f64>,
    pub n: usize,
    pub alpha: f64,
    pub weight_tol: f64,
    pub seed: u64,
}

impl CentersSpec {
    /// Six centers `0, 8, …, 40` and 120 points.
    pub fn six_centers(alpha: f64, seed: u64) -> Self {
        Self {
            centers: (0..6).map(|j| 8.0 * j as f64).collect(),
            n: 120,
            alpha,
            weight_tol: 1e-4,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.centers.is_empty() || self.n < self.centers.len() {
            return Err(Error::InvalidInput("need at least one center and n >= #centers".into()));
        }
        if !(self.alpha > 0.0) {
            return Err(Error::InvalidInput("alpha must be positive".into()));
        }
        if !(self.weight_tol > 0.0 && self.weight_tol < 1.0) {
            return Err(Error::InvalidInput("weight_tol must lie in (0, 1)".into()));
        }
        Ok(())
    }
}

/// `n` points: pick a center uniformly, add a standard normal deviate.
pub fn sample_centers(spec: &CentersSpec) -> Result<Vec<f64>> {
    sample_centers_stream(spec, 0)
}

/// As [`sample_centers`], drawing from stream `stream` of the seeded generator.
pub fn sample_centers_stream(spec: &CentersSpec, stream: u64) -> Result<Vec<f64>> {
    spec.validate()?;
    let mut rng = rng_for(spec.seed, stream);
    Ok((0..spec.n)
        .map(|_| {
            let j = rng.gen_range(0..spec.centers.len());
            let z: f64 = StandardNormal.sample(&mut rng);
            spec.centers[j] + z
        })
        .collect())
}

/// `w_ij = exp(−α (x_i − x_j)²)`, dropped when below `weight_tol`.
pub fn gaussian_similarity(points: &[f64], alpha: f64, weight_tol: f64) -> Result<WeightMatrix> {
    if !(alpha > 0.0) {
        return Err(Error::InvalidInput("alpha must be positive".into()));
    }
    let n = points.len();
    let mut trip = Vec::new();
    for i in 0..n {
        for j in i + 1..n {
            let f = (-alpha * (points[i] - points[j]).powi(2)).exp();
            if f >= weight_tol {
                trip.push((i, j, f));
            }
        }
    }
    WeightMatrix::from_triplets(n, trip)
}

/// Sweep result at one value of the coupling parameter.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    /// `μ1` for the reduced model, `p1` for the sampled SBM.
    pub param: f64,
    pub table: SweepTable,
}

/// `k_opt` sweep of the reduced chain model over `mu1_values`.
pub fn chain_sweep(
    r: usize,
    size: f64,
    mu1_values: &[f64],
    k_min: usize,
    k_max: usize,
    config: &OuterConfig,
) -> Result<Vec<SweepPoint>> {
    mu1_values
        .par_iter()
        .map(|&mu1| {
            let w = reduced_chain_model(r, mu1, size)?;
            Ok(SweepPoint { param: mu1, table: k_opt_sweep(&w, k_min, k_max, config)? })
        })
        .collect()
}

/// `k_opt` sweep of sampled chain SBMs over `p1_values`, one graph per value.
pub fn sbm_sweep(
    r: usize,
    size: usize,
    p1_values: &[f64],
    seed: u64,
    k_min: usize,
    k_max: usize,
    config: &OuterConfig,
) -> Result<Vec<SweepPoint>> {
    p1_values
        .par_iter()
        .map(|&p1| {
            let w = sample_sbm(&SbmSpec::chain(r, size, p1, seed)?)?;
            Ok(SweepPoint { param: p1, table: k_opt_sweep(&w, k_min, k_max, config)? })
        })
        .collect()
}

/// Outcome of one sample of the frequency experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleOutcome {
    pub sample: usize,
    pub k_opt_gap: Option<usize>,
    pub k_opt_delta: Option<usize>,
    /// Set when some `δ_k` in the range could not be computed; the sample is excluded.
    pub error: Option<String>,
}

/// Percentages of samples on which each indicator selects each `k`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrequencyTable {
    pub samples: usize,
    pub successes: usize,
    pub failures: usize,
    pub k_values: Vec<usize>,
    pub gap_percent: Vec<f64>,
    pub delta_percent: Vec<f64>,
    pub outcomes: Vec<SampleOutcome>,
}

impl FrequencyTable {
    pub fn percent_for(&self, k: usize) -> Option<(f64, f64)> {
        let i = self.k_values.iter().position(|&v| v == k)?;
        Some((self.gap_percent[i], self.delta_percent[i]))
    }
}

/// Samples `samples` graphs from `spec` and tallies `k_opt` of both indicators
/// over `k_min..=k_max`.
pub fn frequency_experiment(
    spec: &CentersSpec,
    samples: usize,
    k_min: usize,
    k_max: usize,
    config: &OuterConfig,
) -> Result<FrequencyTable> {
    spec.validate()?;
    if k_min < 2 || k_min > k_max || k_max >= spec.n {
        return Err(Error::InvalidInput(format!("k range {k_min}..={k_max} must lie in [2, n-1]")));
    }
    let outcomes: Vec<SampleOutcome> = (0..samples)
        .into_par_iter()
        .map(|s| frequency_sample(spec, s, k_min, k_max, config))
        .collect::<Result<_>>()?;
    let k_values: Vec<usize> = (k_min..=k_max).collect();
    let ok: Vec<&SampleOutcome> = outcomes.iter().filter(|o| o.error.is_none()).collect();
    let pct = |pick: &dyn Fn(&SampleOutcome) -> Option<usize>| -> Vec<f64> {
        k_values
            .iter()
            .map(|&k| {
                if ok.is_empty() {
                    0.0
                } else {
                    100.0 * ok.iter().filter(|o| pick(o) == Some(k)).count() as f64 / ok.len() as f64
                }
            })
            .collect()
    };
    Ok(FrequencyTable {
        samples,
        successes: ok.len(),
        failures: samples - ok.len(),
        gap_percent: pct(&|o| o.k_opt_gap),
        delta_percent: pct(&|o| o.k_opt_delta),
        k_values,
        outcomes,
    })
}

fn frequency_sample(spec: &CentersSpec, s: usize, k_min: usize, k_max: usize, config: &OuterConfig) -> Result<SampleOutcome> {
    let pts = sample_centers_stream(spec, s as u64)?;
    let w = gaussian_similarity(&pts, spec.alpha, spec.weight_tol)?;
    let table = k_opt_sweep(&w, k_min, k_max, config)?;
    let error = table
        .rows
        .iter()
        .find_map(|r| r.error.as_ref().map(|e| format!("k = {}: {e}", r.k)));
    Ok(SampleOutcome {
        sample: s,
        k_opt_gap: table.k_opt_gap,
        k_opt_delta: if error.is_none() { table.k_opt_delta } else { None },
        error,
    })
}
