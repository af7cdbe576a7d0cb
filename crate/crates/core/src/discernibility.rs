//! How distinguishable the received spectra of different conditions are.
//!
//! The main objective, [`indiscernibility_en`], sums the maximum-likelihood
//! error probability of confusing each condition with its nearest grid
//! neighbours. [`indiscernibility_ed`] is the all-pairs Euclidean
//! alternative, and [`mc_error_oracle`] simulates the likelihood-ratio test
//! directly so the closed form can be checked statistically.

use std::io::Write;
use std::str::FromStr;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::channel::{ChannelParams, FrequencyGrid};
use crate::circuit::{ConditionVector, Sensor};
use crate::error::{Error, Result};
use crate::par;

/// Ordered set of condition vectors.
#[derive(Debug, Clone, PartialEq)]
pub struct ConditionGrid {
    points: Vec<ConditionVector>,
    steps: Vec<f64>,
}

impl ConditionGrid {
    /// Tensor grid `start[n] + k * step[n]`, `k < count[n]`, with the last
    /// dimension varying fastest.
    pub fn regular(start: &[f64], step: &[f64], count: &[usize]) -> Result<Self> {
        if start.is_empty() || start.len() != step.len() || start.len() != count.len() {
            return Err(Error::Config("condition grid start/step/count lengths differ".into()));
        }
        if count.contains(&0) {
            return Err(Error::Config("condition grid counts must be at least 1".into()));
        }
        if step.iter().zip(count).any(|(&s, &n)| n > 1 && !(s > 0.0)) {
            return Err(Error::Config("condition grid steps must be positive".into()));
        }
        let mut points = vec![Vec::new()];
        for n in 0..start.len() {
            points = points
                .into_iter()
                .flat_map(|p| {
                    (0..count[n]).map(move |k| {
                        let mut q = p.clone();
                        q.push(start[n] + k as f64 * step[n]);
                        q
                    })
                })
                .collect();
        }
        Ok(ConditionGrid {
            points: points.into_iter().map(ConditionVector).collect(),
            steps: step.to_vec(),
        })
    }

    pub fn from_points(points: Vec<ConditionVector>) -> Result<Self> {
        let dim = points.first().ok_or(Error::Empty("condition grid"))?.len();
        if points.iter().any(|p| p.len() != dim) {
            return Err(Error::Config("condition vectors differ in length".into()));
        }
        for i in 0..points.len() {
            if points[..i].contains(&points[i]) {
                return Err(Error::Config(format!("duplicate condition {:?}", points[i].0)));
            }
        }
        let steps = (0..dim)
            .map(|n| {
                let mut v: Vec<f64> = points.iter().map(|p| p[n]).collect();
                v.sort_by(f64::total_cmp);
                v.dedup();
                v.windows(2).map(|w| w[1] - w[0]).fold(f64::INFINITY, f64::min)
            })
            .collect();
        Ok(ConditionGrid { points, steps })
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.points[0].len()
    }

    pub fn points(&self) -> &[ConditionVector] {
        &self.points
    }

    pub fn steps(&self) -> &[f64] {
        &self.steps
    }

    /// Per-dimension `(min, max)` over the grid.
    pub fn bounds(&self) -> Vec<(f64, f64)> {
        (0..self.dim())
            .map(|n| {
                self.points
                    .iter()
                    .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), p| {
                        (lo.min(p[n]), hi.max(p[n]))
                    })
            })
            .collect()
    }
}

/// Indices of the nearest neighbours of condition `j`: for each dimension,
/// the closest strictly-smaller and strictly-larger coordinate, choosing
/// among ties the point with least total deviation in the other dimensions
/// (lowest index on further ties). Returned sorted and deduplicated.
pub fn nearest_neighbor_set(j: usize, grid: &ConditionGrid) -> Vec<usize> {
    let pts = grid.points();
    let cj = &pts[j];
    let mut out = Vec::with_capacity(2 * cj.len());
    for n in 0..cj.len() {
        for above in [false, true] {
            let side = |rho: &usize| {
                let diff = pts[*rho][n] - cj[n];
                if above {
                    diff > 0.0
                } else {
                    diff < 0.0
                }
            };
            let gap = |rho: usize| (pts[rho][n] - cj[n]).abs();
            let Some(closest) = (0..pts.len()).filter(side).map(gap).min_by(f64::total_cmp) else {
                continue;
            };
            let off_axis = |rho: usize| -> f64 {
                (0..cj.len())
                    .filter(|&m| m != n)
                    .map(|m| (pts[rho][m] - cj[m]).abs())
                    .sum()
            };
            let mut best: Option<(usize, f64)> = None;
            for rho in (0..pts.len()).filter(side).filter(|&r| gap(r) == closest) {
                let dev = off_axis(rho);
                if best.is_none_or(|(_, b)| dev < b) {
                    best = Some((rho, dev));
                }
            }
            out.push(best.unwrap().0);
        }
    }
    out.sort_unstable();
    out.dedup();
    out
}

/// Nearest-neighbour index sets for every condition of a grid.
#[derive(Debug, Clone, PartialEq)]
pub struct NeighborSets(Vec<Vec<usize>>);

impl NeighborSets {
    pub fn build(grid: &ConditionGrid) -> Self {
        NeighborSets(par::map_indexed(grid.len(), |j| nearest_neighbor_set(j, grid)))
    }

    pub fn get(&self, j: usize) -> &[usize] {
        &self.0[j]
    }

    pub fn iter(&self) -> impl Iterator<Item = &[usize]> {
        self.0.iter().map(Vec::as_slice)
    }

    /// Total number of ordered neighbour pairs.
    pub fn pair_count(&self) -> usize {
        self.0.iter().map(Vec::len).sum()
    }
}

/// Which closed form of the pairwise error probability to use.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ErrorMode {
    /// `0.5 * (1 - erf(S / (2 sqrt 2)))`, without the noise level.
    #[default]
    Paper,
    /// `0.5 * (1 - erf(sqrt(S) / (2 sqrt 2 sigma)))`, the exact ML error.
    Ml,
}

impl FromStr for ErrorMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "paper" => Ok(ErrorMode::Paper),
            "ml" => Ok(ErrorMode::Ml),
            other => Err(Error::Config(format!("unknown error mode `{other}` (paper|ml)"))),
        }
    }
}

impl std::fmt::Display for ErrorMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            ErrorMode::Paper => "paper",
            ErrorMode::Ml => "ml",
        })
    }
}

pub fn erf(x: f64) -> f64 {
    libm::erf(x)
}

/// Squared spectral distance `sum_i (b_i - a_i)^2`.
pub fn spectral_distance_sq(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (y - x).powi(2)).sum()
}

/// Probability that the ML decision picks `tau_other` when `tau_true` holds.
pub fn error_prob_from_tau(tau_true: &[f64], tau_other: &[f64], sigma_m_db: f64, mode: ErrorMode) -> Result<f64> {
    if tau_true.len() != tau_other.len() {
        return Err(Error::Dimension {
            expected: tau_true.len(),
            got: tau_other.len(),
        });
    }
    let s = spectral_distance_sq(tau_true, tau_other);
    let arg = match mode {
        ErrorMode::Paper => s / (2.0 * std::f64::consts::SQRT_2),
        ErrorMode::Ml => {
            if !(sigma_m_db > 0.0) {
                return Err(Error::Config("ml error mode requires sigma_m_db > 0".into()));
            }
            s.sqrt() / (2.0 * std::f64::consts::SQRT_2 * sigma_m_db)
        }
    };
    // 0.5 * (1 - erf(x)) without cancellation for large x
    Ok(0.5 * libm::erfc(arg))
}

/// Pairwise ML error probability `Pr(decide c_other | c_true)`.
#[allow(clippy::too_many_arguments)]
pub fn pairwise_error_prob(
    c_true: &[f64],
    c_other: &[f64],
    d: &[f64],
    cp: &ChannelParams,
    fgrid: &FrequencyGrid,
    sensor: &Sensor,
    mode: ErrorMode,
) -> Result<f64> {
    let a = cp.expected_power_vector(c_true, d, fgrid, sensor)?;
    let b = cp.expected_power_vector(c_other, d, fgrid, sensor)?;
    error_prob_from_tau(&a, &b, cp.sigma_m_db, mode)
}

/// Empirical frequency with which Gaussian noise at `c_true` makes the
/// likelihood of `c_other` strictly exceed that of `c_true`.
#[allow(clippy::too_many_arguments)]
pub fn mc_error_oracle<R: Rng + ?Sized>(
    c_true: &[f64],
    c_other: &[f64],
    d: &[f64],
    cp: &ChannelParams,
    fgrid: &FrequencyGrid,
    sensor: &Sensor,
    trials: usize,
    rng: &mut R,
) -> Result<f64> {
    if !(cp.sigma_m_db > 0.0) {
        return Err(Error::Config("Monte Carlo oracle requires sigma_m_db > 0".into()));
    }
    if trials == 0 {
        return Err(Error::Empty("trial set"));
    }
    let a = cp.expected_power_vector(c_true, d, fgrid, sensor)?;
    let b = cp.expected_power_vector(c_other, d, fgrid, sensor)?;
    let delta: Vec<f64> = a.iter().zip(&b).map(|(x, y)| y - x).collect();
    let threshold: f64 = delta.iter().map(|v| v * v).sum();
    let mut hits = 0usize;
    for _ in 0..trials {
        let stat: f64 = delta
            .iter()
            .map(|dv| {
                let z: f64 = rng.sample(StandardNormal);
                2.0 * cp.sigma_m_db * z * dv
            })
            .sum();
        if stat > threshold {
            hits += 1;
        }
    }
    Ok(hits as f64 / trials as f64)
}

/// Noise-free received power vectors for every condition of a grid.
#[derive(Debug, Clone, PartialEq)]
pub struct TauTable {
    pub rows: Vec<Vec<f64>>,
}

impl TauTable {
    pub fn compute(
        d: &[f64],
        grid: &ConditionGrid,
        cp: &ChannelParams,
        fgrid: &FrequencyGrid,
        sensor: &Sensor,
    ) -> Result<Self> {
        let rows = par::try_map_indexed(grid.len(), |j| {
            cp.expected_power_vector(&grid.points()[j], d, fgrid, sensor)
        })?;
        Ok(TauTable { rows })
    }

    /// Writes `cond_1,...,cond_N,f_idx,tau_db` rows.
    pub fn write_csv<W: Write>(&self, grid: &ConditionGrid, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let mut header: Vec<String> = (1..=grid.dim()).map(|n| format!("cond_{n}")).collect();
        header.push("f_idx".into());
        header.push("tau_db".into());
        w.write_record(&header).map_err(csv_err)?;
        for (c, row) in grid.points().iter().zip(&self.rows) {
            for (i, tau) in row.iter().enumerate() {
                let mut rec: Vec<String> = c.iter().map(f64::to_string).collect();
                rec.push(i.to_string());
                rec.push(tau.to_string());
                w.write_record(&rec).map_err(csv_err)?;
            }
        }
        w.flush().map_err(|e| Error::io("<tau dump>", e))?;
        Ok(())
    }
}

fn csv_err(e: csv::Error) -> Error {
    Error::parse("<csv>", e)
}

/// Value of the neighbour-restricted indiscernibility and the number of
/// pairwise probabilities it took.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnEvaluation {
    pub value: f64,
    pub pair_evaluations: usize,
}

/// Sum of nearest-neighbour error probabilities over precomputed spectra.
pub fn indiscernibility_en_from_tau(
    tau: &TauTable,
    neighbors: &NeighborSets,
    sigma_m_db: f64,
    mode: ErrorMode,
) -> Result<EnEvaluation> {
    let per_condition = par::try_map_indexed(tau.rows.len(), |j| {
        neighbors
            .get(j)
            .iter()
            .map(|&k| error_prob_from_tau(&tau.rows[j], &tau.rows[k], sigma_m_db, mode))
            .sum::<Result<f64>>()
    })?;
    Ok(EnEvaluation {
        value: per_condition.iter().sum(),
        pair_evaluations: neighbors.pair_count(),
    })
}

pub fn indiscernibility_en(
    d: &[f64],
    grid: &ConditionGrid,
    cp: &ChannelParams,
    fgrid: &FrequencyGrid,
    sensor: &Sensor,
    mode: ErrorMode,
) -> Result<EnEvaluation> {
    let tau = TauTable::compute(d, grid, cp, fgrid, sensor)?;
    indiscernibility_en_from_tau(&tau, &NeighborSets::build(grid), cp.sigma_m_db, mode)
}

/// Negative mean squared spectral distance over all ordered pairs.
pub fn indiscernibility_ed(
    d: &[f64],
    grid: &ConditionGrid,
    cp: &ChannelParams,
    fgrid: &FrequencyGrid,
    sensor: &Sensor,
) -> Result<f64> {
    let tau = TauTable::compute(d, grid, cp, fgrid, sensor)?;
    let rows = &tau.rows;
    let per_row = par::map_indexed(rows.len(), |j| {
        rows.iter().map(|r| spectral_distance_sq(&rows[j], r)).sum::<f64>()
    });
    Ok(-per_row.iter().sum::<f64>() / rows.len() as f64)
}
