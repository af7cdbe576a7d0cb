//! End-to-end runs: structure search, dataset synthesis, training,
//! evaluation and the power / distance sweeps.

mod config;
mod manifest;

use std::io::Write;
use std::path::Path;
use std::str::FromStr;
use std::sync::atomic::{AtomicUsize, Ordering};

use serde::{Deserialize, Serialize};

pub use config::{ConditionSpec, Context, DatasetConfig, ObjectiveConfig, RunConfig, SweepConfig, DEFAULT_CONFIG};
pub use manifest::{Artifact, RunManifest};

use crate::channel::ChannelParams;
use crate::circuit::StructureVector;
use crate::discernibility::{indiscernibility_en_from_tau, ErrorMode, TauTable};
use crate::error::{Error, Result};
use crate::sensefn::{generate_dataset, rmse, train, Dataset, SensingModel, Trained};
use crate::structopt::{grid_average, grid_search, surrogate_optimize, OptimizationResult};
use crate::{par, rng};

/// Neighbour-restricted indiscernibility as a function of the structure,
/// with a running count of pairwise error probabilities evaluated.
pub struct EnObjective<'a> {
    ctx: &'a Context,
    channel: ChannelParams,
    mode: ErrorMode,
    pair_evaluations: AtomicUsize,
    calls: AtomicUsize,
}

impl<'a> EnObjective<'a> {
    pub fn new(ctx: &'a Context, channel: ChannelParams, mode: ErrorMode) -> Self {
        EnObjective {
            ctx,
            channel,
            mode,
            pair_evaluations: AtomicUsize::new(0),
            calls: AtomicUsize::new(0),
        }
    }

    pub fn eval(&self, d: &[f64]) -> Result<f64> {
        let ctx = self.ctx;
        let tau = TauTable::compute(d, &ctx.grid, &self.channel, &ctx.cfg.frequency, &ctx.sensor)?;
        let en = indiscernibility_en_from_tau(&tau, &ctx.neighbors, self.channel.sigma_m_db, self.mode)?;
        self.pair_evaluations.fetch_add(en.pair_evaluations, Ordering::Relaxed);
        self.calls.fetch_add(1, Ordering::Relaxed);
        Ok(en.value)
    }

    pub fn pair_evaluations(&self) -> usize {
        self.pair_evaluations.load(Ordering::Relaxed)
    }

    pub fn calls(&self) -> usize {
        self.calls.load(Ordering::Relaxed)
    }
}

/// The optimised structure and the two grid baselines.
#[derive(Debug, Clone, PartialEq)]
pub struct StructureSearch {
    pub optimized: OptimizationResult,
    pub grid: Vec<StructureVector>,
    pub grid_best: StructureVector,
    pub grid_best_value: f64,
    pub grid_average_value: f64,
}

impl StructureSearch {
    /// Writes `case,d_1_mm,...,d_N_mm,objective` for the optimised and
    /// grid-best structures and the grid average (with empty gaps).
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let dim = self.grid_best.len();
        let mut header = vec!["case".to_string()];
        header.extend((1..=dim).map(|n| format!("d_{n}_mm")));
        header.push("objective".into());
        let err = |e: csv::Error| Error::parse("<structures>", e);
        w.write_record(&header).map_err(err)?;
        for (case, d, v) in [
            (CASES[0], Some(&self.optimized.best), self.optimized.value),
            (CASES[1], Some(&self.grid_best), self.grid_best_value),
            (CASES[2], None, self.grid_average_value),
        ] {
            let mut rec = vec![case.to_string()];
            match d {
                Some(d) => rec.extend(d.iter().map(f64::to_string)),
                None => rec.extend(std::iter::repeat_n(String::new(), dim)),
            }
            rec.push(v.to_string());
            w.write_record(&rec).map_err(err)?;
        }
        w.flush().map_err(|e| Error::io("<structures>", e))
    }
}

/// Structure cases compared in sweeps.
pub const CASES: [&str; 3] = ["optimized", "grid_best", "grid_average"];

pub fn optimize_structure(ctx: &Context) -> Result<StructureSearch> {
    let objective = EnObjective::new(ctx, ctx.cfg.channel.clone(), ctx.mode());
    let optimized = surrogate_optimize(
        |d| objective.eval(d),
        &ctx.cfg.design,
        &ctx.cfg.surrogate,
        &mut rng::stream(ctx.cfg.seed, &[rng::tag::SURROGATE]),
    )?;
    let grid = ctx.cfg.design.integer_grid();
    let (grid_best, grid_best_value) = grid_search(|d| objective.eval(d), &grid)?;
    let grid_average_value = grid_average(|d| objective.eval(d), &grid)?;
    Ok(StructureSearch {
        optimized,
        grid,
        grid_best,
        grid_best_value,
        grid_average_value,
    })
}

/// Dataset stream labels. Index 0 is the nominal channel, sweep point `i`
/// uses `i + 1`; training and test sets never share a stream.
fn train_stream(point: usize) -> u64 {
    2 * point as u64
}

fn test_stream(point: usize) -> u64 {
    2 * point as u64 + 1
}

pub fn training_set(ctx: &Context, channel: &ChannelParams, d: &[f64], point: usize) -> Result<Dataset> {
    generate_dataset(
        d,
        &ctx.grid,
        channel,
        &ctx.cfg.frequency,
        &ctx.sensor,
        ctx.cfg.dataset.measurements_per_condition,
        ctx.cfg.seed,
        train_stream(point),
    )
}

pub fn test_set(ctx: &Context, channel: &ChannelParams, d: &[f64], point: usize) -> Result<Dataset> {
    generate_dataset(
        d,
        &ctx.grid,
        channel,
        &ctx.cfg.frequency,
        &ctx.sensor,
        ctx.cfg.dataset.test_measurements_per_condition,
        ctx.cfg.seed,
        test_stream(point),
    )
}

pub fn train_model(ctx: &Context, ds: &Dataset, point: usize) -> Result<Trained> {
    train(
        ds,
        &ctx.grid.bounds(),
        &ctx.cfg.train,
        ctx.cfg.seed,
        train_stream(point),
    )
}

/// Runs the full co-design flow and writes its artifacts into `out`.
///
/// Artifacts of completed stages stay on disk when a later stage fails.
pub fn run_codesign(ctx: &Context, out: &Path) -> Result<RunManifest> {
    std::fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    let mut manifest = RunManifest::new(&ctx.cfg);

    let search = optimize_structure(ctx).map_err(Error::stage("optimize"))?;
    manifest.write_artifact(out, "trace.csv", |w| search.optimized.trace.write_csv(w))?;
    manifest.write_artifact(out, "structures.csv", |w| search.write_csv(w))?;
    let d = search.optimized.best.clone();
    manifest.d_star = d.0.clone();
    manifest.i_en_d_star = search.optimized.value;
    manifest.grid_best = search.grid_best.0.clone();
    manifest.i_en_grid_best = search.grid_best_value;
    manifest.i_en_grid_average = search.grid_average_value;

    let nominal = &ctx.cfg.channel;
    let ds = training_set(ctx, nominal, &d, 0).map_err(Error::stage("dataset"))?;
    manifest.write_artifact(out, "dataset.csv", |w| ds.write_csv(w))?;

    let trained = train_model(ctx, &ds, 0).map_err(Error::stage("train"))?;
    manifest.write_artifact(out, "model.json", |w| {
        w.write_all(trained.model.to_json()?.as_bytes())
            .map_err(|e| Error::io("model.json", e))
    })?;
    manifest.write_artifact(out, "history.csv", |w| write_history(&trained, w))?;

    let test = test_set(ctx, nominal, &d, 0).map_err(Error::stage("evaluate"))?;
    manifest.write_artifact(out, "test_dataset.csv", |w| test.write_csv(w))?;
    manifest.train_rmse = rmse(&trained.model, &ds).map_err(Error::stage("evaluate"))?;
    manifest.test_rmse = rmse(&trained.model, &test).map_err(Error::stage("evaluate"))?;
    manifest.save(&out.join("manifest.json"))?;
    Ok(manifest)
}

/// Writes the per-epoch scaled RMSEs of a training run.
pub fn write_history<W: Write>(t: &Trained, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let err = |e: csv::Error| Error::parse("<history>", e);
    w.write_record(["epoch", "train_rmse_scaled", "validation_rmse_scaled"])
        .map_err(err)?;
    for (i, h) in t.history.iter().enumerate() {
        w.write_record([i.to_string(), h.train.to_string(), h.validation.to_string()])
            .map_err(err)?;
    }
    w.flush().map_err(|e| Error::io("<history>", e))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SweepAxis {
    Power,
    Distance,
}

impl FromStr for SweepAxis {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "power" => Ok(SweepAxis::Power),
            "distance" => Ok(SweepAxis::Distance),
            _ => Err(Error::Config(format!("unknown sweep axis {s:?}"))),
        }
    }
}

impl SweepAxis {
    pub fn column(self) -> &'static str {
        match self {
            SweepAxis::Power => "P_watt",
            SweepAxis::Distance => "D_m",
        }
    }

    pub fn values(self, cfg: &RunConfig) -> &[f64] {
        match self {
            SweepAxis::Power => &cfg.sweep.power_w,
            SweepAxis::Distance => &cfg.sweep.distance_m,
        }
    }

    fn apply(self, base: &ChannelParams, v: f64) -> Result<ChannelParams> {
        let mut cp = base.clone();
        match self {
            SweepAxis::Power => cp.p_w = v,
            SweepAxis::Distance => cp.d_m = v,
        }
        cp.validate()?;
        Ok(cp)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub value: f64,
    pub case: String,
    pub rmse: f64,
}

/// RMSE of the three structure cases at every sweep value.
///
/// Every structure sees the same noise draws and initial weights at a given
/// sweep point, so cases differ only through their structure.
pub fn sweep(ctx: &Context, axis: SweepAxis, values: &[f64], search: &StructureSearch) -> Result<Vec<SweepRow>> {
    if values.is_empty() {
        return Err(Error::Empty("sweep values"));
    }
    let limit = ctx.cfg.sweep.grid_average_limit;
    if search.grid.len() > limit {
        return Err(Error::Config(format!(
            "baseline grid has {} structures, above grid_average_limit = {limit}",
            search.grid.len()
        )));
    }
    let channels = values
        .iter()
        .map(|&v| axis.apply(&ctx.cfg.channel, v))
        .collect::<Result<Vec<_>>>()?;
    let mut structures = vec![search.optimized.best.clone(), search.grid_best.clone()];
    structures.extend(search.grid.iter().cloned());
    let n_s = structures.len();

    let rmse_table: Vec<f64> = if ctx.cfg.sweep.retrain_per_point {
        par::try_map_indexed(values.len() * n_s, |job| {
            let (i, s) = (job / n_s, job % n_s);
            let d = &structures[s];
            let ds = training_set(ctx, &channels[i], d, i + 1)?;
            let model = train_model(ctx, &ds, i + 1)?.model;
            rmse(&model, &test_set(ctx, &channels[i], d, i + 1)?)
        })?
    } else {
        let models: Vec<SensingModel> = par::try_map_indexed(n_s, |s| {
            let ds = training_set(ctx, &ctx.cfg.channel, &structures[s], 0)?;
            Ok(train_model(ctx, &ds, 0)?.model)
        })?;
        par::try_map_indexed(values.len() * n_s, |job| {
            let (i, s) = (job / n_s, job % n_s);
            rmse(&models[s], &test_set(ctx, &channels[i], &structures[s], i + 1)?)
        })?
    };

    let mut rows = Vec::with_capacity(3 * values.len());
    for (i, &v) in values.iter().enumerate() {
        let r = &rmse_table[i * n_s..(i + 1) * n_s];
        let avg = r[2..].iter().sum::<f64>() / (n_s - 2) as f64;
        for (case, value) in CASES.iter().zip([r[0], r[1], avg]) {
            rows.push(SweepRow {
                value: v,
                case: case.to_string(),
                rmse: value,
            });
        }
    }
    Ok(rows)
}

pub fn write_sweep_csv<W: Write>(axis: SweepAxis, rows: &[SweepRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let err = |e: csv::Error| Error::parse("<sweep>", e);
    w.write_record([axis.column(), "case", "rmse"]).map_err(err)?;
    for r in rows {
        w.write_record([r.value.to_string(), r.case.clone(), r.rmse.to_string()])
            .map_err(err)?;
    }
    w.flush().map_err(|e| Error::io("<sweep>", e))
}

/// Gnuplot script plotting one sweep CSV, one line per case.
pub fn gnuplot_script(axis: SweepAxis, csv_file: &str) -> String {
    let (xlabel, logx) = match axis {
        SweepAxis::Power => ("Transmit power P (W)", "set logscale x\n"),
        SweepAxis::Distance => ("Distance D (m)", ""),
    };
    let mut s =
        format!("set datafile separator ','\nset key top left\nset xlabel '{xlabel}'\nset ylabel 'RMSE'\n{logx}plot ");
    let lines: Vec<String> = CASES
        .iter()
        .map(|c| format!("'< grep ,{c}, {csv_file}' using 1:3 with linespoints title '{c}'"))
        .collect();
    s.push_str(&lines.join(", \\\n     "));
    s.push('\n');
    s
}

/// Spearman rank correlation with average ranks for ties.
pub fn spearman(x: &[f64], y: &[f64]) -> f64 {
    fn ranks(v: &[f64]) -> Vec<f64> {
        let mut idx: Vec<usize> = (0..v.len()).collect();
        idx.sort_by(|&a, &b| v[a].total_cmp(&v[b]));
        let mut r = vec![0.0; v.len()];
        let mut i = 0;
        while i < idx.len() {
            let mut j = i;
            while j + 1 < idx.len() && v[idx[j + 1]] == v[idx[i]] {
                j += 1;
            }
            let avg = (i + j) as f64 / 2.0 + 1.0;
            for &k in &idx[i..=j] {
                r[k] = avg;
            }
            i = j + 1;
        }
        r
    }
    let (rx, ry) = (ranks(x), ranks(y));
    let n = x.len() as f64;
    let (mx, my) = (rx.iter().sum::<f64>() / n, ry.iter().sum::<f64>() / n);
    let cov: f64 = rx.iter().zip(&ry).map(|(a, b)| (a - mx) * (b - my)).sum();
    let vx: f64 = rx.iter().map(|a| (a - mx).powi(2)).sum();
    let vy: f64 = ry.iter().map(|b| (b - my).powi(2)).sum();
    cov / (vx * vy).sqrt()
}

/// RMSE of a saved model on a saved dataset.
pub fn evaluate(model: &Path, dataset: &Path) -> Result<f64> {
    rmse(&SensingModel::load(model)?, &Dataset::load(dataset)?)
}

/// Condition estimate for one received power vector.
pub fn infer(model: &SensingModel, p: &[f64]) -> Result<Vec<f64>> {
    model.forward(p)
}
