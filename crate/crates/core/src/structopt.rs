//! Global minimisation over gap widths.
//!
//! [`surrogate_optimize`] is a stochastic radial-basis-function method: a
//! cubic RBF with linear tail is fitted to all evaluated points, and each
//! iteration evaluates the candidate that best trades predicted value
//! against distance from what has already been sampled. [`grid_search`] and
//! [`grid_average`] evaluate a fixed list of structures as baselines.

use std::io::Write;

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::circuit::StructureVector;
use crate::error::{Error, Result};

/// Box bounds plus a minimum pairwise separation between gap widths.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DesignSpace {
    pub bounds_mm: Vec<(f64, f64)>,
    pub epsilon_mm: f64,
    /// Step of the integer-like baseline grid; `None` disables it.
    #[serde(default)]
    pub grid_step_mm: Option<f64>,
}

impl DesignSpace {
    pub fn uniform(dim: usize, lo: f64, hi: f64, epsilon_mm: f64) -> Self {
        DesignSpace {
            bounds_mm: vec![(lo, hi); dim],
            epsilon_mm,
            grid_step_mm: Some(1.0),
        }
    }

    pub fn dim(&self) -> usize {
        self.bounds_mm.len()
    }

    pub fn validate(&self) -> Result<()> {
        if self.bounds_mm.is_empty() {
            return Err(Error::Config("design space has no dimensions".into()));
        }
        if self.bounds_mm.iter().any(|(lo, hi)| !(lo < hi) || !(*lo > 0.0)) {
            return Err(Error::Config("design bounds need 0 < d_min < d_max".into()));
        }
        if !(self.epsilon_mm > 0.0) {
            return Err(Error::Config("distinctness margin epsilon_mm must be positive".into()));
        }
        if let Some(s) = self.grid_step_mm {
            if !(s > 0.0) {
                return Err(Error::Config("grid_step_mm must be positive".into()));
            }
        }
        // Earliest-deadline placement decides whether pairwise separation fits.
        let mut order: Vec<(f64, f64)> = self.bounds_mm.clone();
        order.sort_by(|a, b| a.1.total_cmp(&b.1));
        let mut last = f64::NEG_INFINITY;
        for (lo, hi) in order {
            let x = lo.max(last + self.epsilon_mm);
            if x > hi {
                return Err(Error::Config(format!(
                    "no structure fits the bounds with pairwise separation {} mm",
                    self.epsilon_mm
                )));
            }
            last = x;
        }
        Ok(())
    }

    pub fn is_feasible(&self, d: &[f64]) -> bool {
        if d.len() != self.dim() {
            return false;
        }
        let in_box = d.iter().zip(&self.bounds_mm).all(|(x, (lo, hi))| x >= lo && x <= hi);
        in_box && (0..d.len()).all(|m| ((m + 1)..d.len()).all(|n| (d[m] - d[n]).abs() >= self.epsilon_mm))
    }

    /// Feasible points of the baseline grid in lexicographic order.
    pub fn integer_grid(&self) -> Vec<StructureVector> {
        let Some(step) = self.grid_step_mm else {
            return Vec::new();
        };
        let axes: Vec<Vec<f64>> = self
            .bounds_mm
            .iter()
            .map(|&(lo, hi)| {
                let n = ((hi - lo) / step + 1e-9).floor() as usize;
                (0..=n).map(|k| lo + k as f64 * step).collect()
            })
            .collect();
        let mut pts = vec![Vec::new()];
        for axis in &axes {
            pts = pts
                .into_iter()
                .flat_map(|p| {
                    axis.iter().map(move |&v| {
                        let mut q = p.clone();
                        q.push(v);
                        q
                    })
                })
                .collect();
        }
        pts.into_iter()
            .filter(|p| self.is_feasible(p))
            .map(StructureVector)
            .collect()
    }

    fn sample_uniform<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        self.bounds_mm
            .iter()
            .map(|&(lo, hi)| lo + (hi - lo) * rng.random::<f64>())
            .collect()
    }

    fn sample_feasible<R: Rng + ?Sized>(&self, rng: &mut R) -> Option<Vec<f64>> {
        (0..10_000)
            .map(|_| self.sample_uniform(rng))
            .find(|p| self.is_feasible(p))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SurrogateConfig {
    /// Latin hypercube size; `None` uses `2 (dim + 1)`.
    pub initial_points: Option<usize>,
    /// Total number of objective evaluations.
    pub budget: usize,
    /// Candidates scored per iteration.
    pub candidates: usize,
    /// Initial and minimum perturbation radius as fractions of each range.
    pub radius_start: f64,
    pub radius_min: f64,
    /// Consecutive failures before halving / successes before doubling.
    pub fail_tolerance: usize,
    pub success_tolerance: usize,
    /// Cycle of surrogate-vs-distance weights.
    pub weights: Vec<f64>,
    /// Evaluate every baseline grid point as part of the initial design.
    pub seed_integer_grid: bool,
}

impl Default for SurrogateConfig {
    fn default() -> Self {
        SurrogateConfig {
            initial_points: None,
            budget: 80,
            candidates: 200,
            radius_start: 0.2,
            radius_min: 0.005,
            fail_tolerance: 5,
            success_tolerance: 3,
            weights: vec![0.3, 0.5, 0.8, 0.95],
            seed_integer_grid: true,
        }
    }
}

impl SurrogateConfig {
    pub fn initial_size(&self, dim: usize) -> usize {
        self.initial_points.unwrap_or(2 * (dim + 1))
    }

    pub fn validate(&self, dim: usize) -> Result<()> {
        if self.initial_size(dim) < dim + 1 {
            return Err(Error::Config(format!(
                "initial design needs at least {} points",
                dim + 1
            )));
        }
        if self.candidates == 0 || self.weights.is_empty() {
            return Err(Error::Config("surrogate needs candidates and weights".into()));
        }
        if self.weights.iter().any(|w| !(0.0..=1.0).contains(w)) {
            return Err(Error::Config("surrogate weights must lie in [0, 1]".into()));
        }
        if !(self.radius_start > 0.0 && self.radius_min > 0.0 && self.radius_min <= self.radius_start) {
            return Err(Error::Config("need 0 < radius_min <= radius_start".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceEntry {
    pub index: usize,
    pub d: StructureVector,
    pub value: f64,
    /// Best value seen up to and including this evaluation.
    pub incumbent: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct OptimizationTrace {
    pub entries: Vec<TraceEntry>,
}

impl OptimizationTrace {
    fn push(&mut self, d: Vec<f64>, value: f64) {
        let incumbent = self.entries.last().map_or(value, |e| e.incumbent.min(value));
        self.entries.push(TraceEntry {
            index: self.entries.len(),
            d: StructureVector(d),
            value,
            incumbent,
        });
    }

    /// First entry attaining the minimum value.
    pub fn best(&self) -> Option<&TraceEntry> {
        self.entries
            .iter()
            .fold(None, |best: Option<&TraceEntry>, e| match best {
                Some(b) if b.value <= e.value => Some(b),
                _ => Some(e),
            })
    }

    /// Writes `eval_idx,d_1_mm,...,d_N_mm,objective`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let dim = self.entries.first().map_or(0, |e| e.d.len());
        let mut header = vec!["eval_idx".to_string()];
        header.extend((1..=dim).map(|n| format!("d_{n}_mm")));
        header.push("objective".into());
        w.write_record(&header).map_err(|e| Error::parse("<trace>", e))?;
        for e in &self.entries {
            let mut rec = vec![e.index.to_string()];
            rec.extend(e.d.iter().map(f64::to_string));
            rec.push(e.value.to_string());
            w.write_record(&rec).map_err(|e| Error::parse("<trace>", e))?;
        }
        w.flush().map_err(|e| Error::io("<trace>", e))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptimizationResult {
    pub best: StructureVector,
    pub value: f64,
    pub trace: OptimizationTrace,
}

/// Latin hypercube sample with infeasible points redrawn uniformly.
fn latin_hypercube<R: Rng + ?Sized>(space: &DesignSpace, n: usize, rng: &mut R) -> Result<Vec<Vec<f64>>> {
    let mut pts = vec![vec![0.0; space.dim()]; n];
    for (k, &(lo, hi)) in space.bounds_mm.iter().enumerate() {
        let mut strata: Vec<usize> = (0..n).collect();
        strata.shuffle(rng);
        for (p, s) in pts.iter_mut().zip(strata) {
            p[k] = lo + (hi - lo) * (s as f64 + rng.random::<f64>()) / n as f64;
        }
    }
    for p in &mut pts {
        if !space.is_feasible(p) {
            *p = space
                .sample_feasible(rng)
                .ok_or_else(|| Error::Config("could not sample a feasible structure".into()))?;
        }
    }
    Ok(pts)
}

/// Cubic RBF interpolant with a linear polynomial tail.
struct RbfModel {
    centers: Vec<Vec<f64>>,
    lambda: Vec<f64>,
    tail: Vec<f64>,
}

const RIDGE: f64 = 1e-8;
const DUPLICATE_TOL: f64 = 1e-9;

fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt()
}

impl RbfModel {
    fn fit(points: &[Vec<f64>], values: &[f64]) -> Option<Self> {
        let mut centers: Vec<Vec<f64>> = Vec::new();
        let mut vals: Vec<f64> = Vec::new();
        for (p, &v) in points.iter().zip(values) {
            match centers.iter().position(|c| dist(c, p) < DUPLICATE_TOL) {
                Some(i) => vals[i] = vals[i].min(v),
                None => {
                    centers.push(p.clone());
                    vals.push(v);
                }
            }
        }
        let n = centers.len();
        let dim = centers.first()?.len();
        let m = n + dim + 1;
        if n < dim + 1 {
            return None;
        }
        let mut a = DMatrix::<f64>::zeros(m, m);
        for i in 0..n {
            for j in 0..n {
                a[(i, j)] = dist(&centers[i], &centers[j]).powi(3);
            }
            a[(i, i)] += RIDGE;
            a[(i, n)] = 1.0;
            a[(n, i)] = 1.0;
            for k in 0..dim {
                a[(i, n + 1 + k)] = centers[i][k];
                a[(n + 1 + k, i)] = centers[i][k];
            }
        }
        let mut rhs = DVector::<f64>::zeros(m);
        for (i, v) in vals.iter().enumerate() {
            rhs[i] = *v;
        }
        let sol = a.lu().solve(&rhs)?;
        if sol.iter().any(|x| !x.is_finite()) {
            return None;
        }
        Some(RbfModel {
            centers,
            lambda: sol.rows(0, n).iter().copied().collect(),
            tail: sol.rows(n, dim + 1).iter().copied().collect(),
        })
    }

    fn predict(&self, x: &[f64]) -> f64 {
        let rbf: f64 = self
            .centers
            .iter()
            .zip(&self.lambda)
            .map(|(c, l)| l * dist(c, x).powi(3))
            .sum();
        let tail = self.tail[0] + x.iter().zip(&self.tail[1..]).map(|(a, b)| a * b).sum::<f64>();
        rbf + tail
    }
}

fn normalize(v: &[f64]) -> Vec<f64> {
    let (lo, hi) = v
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &x| (a.min(x), b.max(x)));
    if hi - lo <= 0.0 {
        return vec![1.0; v.len()];
    }
    v.iter().map(|x| (x - lo) / (hi - lo)).collect()
}

/// Minimises `objective` over the design space with exactly `cfg.budget`
/// objective calls.
pub fn surrogate_optimize<F, R>(
    mut objective: F,
    space: &DesignSpace,
    cfg: &SurrogateConfig,
    rng: &mut R,
) -> Result<OptimizationResult>
where
    F: FnMut(&[f64]) -> Result<f64>,
    R: Rng + ?Sized,
{
    space.validate()?;
    let dim = space.dim();
    cfg.validate(dim)?;

    let mut initial: Vec<Vec<f64>> = Vec::new();
    if cfg.seed_integer_grid {
        initial.extend(space.integer_grid().into_iter().map(|d| d.0));
    }
    initial.extend(latin_hypercube(space, cfg.initial_size(dim), rng)?);
    if initial.len() > cfg.budget {
        return Err(Error::Config(format!(
            "budget {} is smaller than the initial design ({} points)",
            cfg.budget,
            initial.len()
        )));
    }

    let mut trace = OptimizationTrace::default();
    let mut points: Vec<Vec<f64>> = Vec::new();
    let mut values: Vec<f64> = Vec::new();
    let mut evaluate = |d: Vec<f64>,
                        trace: &mut OptimizationTrace,
                        points: &mut Vec<Vec<f64>>,
                        values: &mut Vec<f64>|
     -> Result<f64> {
        debug_assert!(space.is_feasible(&d));
        let v = objective(&d)?;
        if !v.is_finite() {
            return Err(Error::Domain(format!("objective is {v} at {d:?}")));
        }
        trace.push(d.clone(), v);
        points.push(d);
        values.push(v);
        Ok(v)
    };
    for p in initial {
        evaluate(p, &mut trace, &mut points, &mut values)?;
    }

    let ranges: Vec<f64> = space.bounds_mm.iter().map(|(lo, hi)| hi - lo).collect();
    let mut radius = cfg.radius_start;
    let (mut fails, mut successes) = (0usize, 0usize);
    let mut iteration = 0usize;
    while points.len() < cfg.budget {
        let best_idx = argmin(&values);
        let incumbent = points[best_idx].clone();
        let best_val = values[best_idx];

        let mut cands: Vec<Vec<f64>> = Vec::with_capacity(cfg.candidates);
        let n_local = cfg.candidates.div_ceil(2);
        for _ in 0..n_local {
            for _ in 0..100 {
                let c: Vec<f64> = incumbent
                    .iter()
                    .zip(&space.bounds_mm)
                    .zip(&ranges)
                    .map(|((x, &(lo, hi)), r)| {
                        let z: f64 = rng.sample(StandardNormal);
                        reflect(x + radius * r * z, lo, hi)
                    })
                    .collect();
                if space.is_feasible(&c) {
                    cands.push(c);
                    break;
                }
            }
        }
        while cands.len() < cfg.candidates {
            match space.sample_feasible(rng) {
                Some(c) => cands.push(c),
                None => break,
            }
        }
        cands.retain(|c| points.iter().all(|p| dist(p, c) >= DUPLICATE_TOL));

        let next = match (RbfModel::fit(&points, &values), cands.is_empty()) {
            (_, true) => space
                .sample_feasible(rng)
                .ok_or_else(|| Error::Config("could not sample a feasible structure".into()))?,
            (model, false) => {
                let w = cfg.weights[iteration % cfg.weights.len()];
                let dmin: Vec<f64> = cands
                    .iter()
                    .map(|c| points.iter().map(|p| dist(p, c)).fold(f64::INFINITY, f64::min))
                    .collect();
                let v_dist: Vec<f64> = normalize(&dmin.iter().map(|x| -x).collect::<Vec<_>>());
                let score: Vec<f64> = match model {
                    Some(m) => {
                        let s: Vec<f64> = cands.iter().map(|c| m.predict(c)).collect();
                        normalize(&s)
                            .iter()
                            .zip(&v_dist)
                            .map(|(vs, vd)| w * vs + (1.0 - w) * vd)
                            .collect()
                    }
                    None => v_dist,
                };
                cands.swap_remove(argmin(&score))
            }
        };
        let v = evaluate(next, &mut trace, &mut points, &mut values)?;

        if v < best_val - 1e-3 * best_val.abs().max(1e-12) {
            successes += 1;
            fails = 0;
        } else {
            fails += 1;
            successes = 0;
        }
        if fails >= cfg.fail_tolerance {
            radius = (radius / 2.0).max(cfg.radius_min);
            fails = 0;
        }
        if successes >= cfg.success_tolerance {
            radius = (radius * 2.0).min(cfg.radius_start);
            successes = 0;
        }
        iteration += 1;
    }

    let best = trace.best().expect("budget > 0").clone();
    Ok(OptimizationResult {
        best: best.d,
        value: best.value,
        trace,
    })
}

fn reflect(x: f64, lo: f64, hi: f64) -> f64 {
    let mut y = x;
    if y < lo {
        y = lo + (lo - y);
    }
    if y > hi {
        y = hi - (y - hi);
    }
    y.clamp(lo, hi)
}

fn argmin(v: &[f64]) -> usize {
    v.iter()
        .enumerate()
        .fold(
            (0, f64::INFINITY),
            |(bi, bv), (i, &x)| if x < bv { (i, x) } else { (bi, bv) },
        )
        .0
}

fn lexicographic(a: &[f64], b: &[f64]) -> std::cmp::Ordering {
    a.iter()
        .zip(b)
        .map(|(x, y)| x.total_cmp(y))
        .find(|o| o.is_ne())
        .unwrap_or(std::cmp::Ordering::Equal)
}

/// Exact minimum over a list of structures; ties go to the
/// lexicographically smallest structure.
pub fn grid_search<F>(mut objective: F, grid: &[StructureVector]) -> Result<(StructureVector, f64)>
where
    F: FnMut(&[f64]) -> Result<f64>,
{
    let mut best: Option<(&StructureVector, f64)> = None;
    for d in grid {
        let v = objective(d)?;
        best = match best {
            Some((bd, bv)) if bv < v || (bv == v && lexicographic(bd, d).is_le()) => Some((bd, bv)),
            _ => Some((d, v)),
        };
    }
    let (d, v) = best.ok_or(Error::Empty("structure grid"))?;
    Ok((d.clone(), v))
}

pub fn grid_average<F>(mut objective: F, grid: &[StructureVector]) -> Result<f64>
where
    F: FnMut(&[f64]) -> Result<f64>,
{
    if grid.is_empty() {
        return Err(Error::Empty("structure grid"));
    }
    let mut total = 0.0;
    for d in grid {
        total += objective(d)?;
    }
    Ok(total / grid.len() as f64)
}
