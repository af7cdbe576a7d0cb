use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use metaiot::discernibility::ErrorMode;
use metaiot::pipeline::{self, Context, RunConfig, SweepAxis};
use metaiot::sensefn::{rmse, Dataset, SensingModel};
use metaiot::{Error, Result};

/// Joint structure and sensing-function design for passive meta-material
/// sensors.
#[derive(Parser)]
#[command(name = "metaiot", version)]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Args)]
struct Common {
    /// TOML run configuration; the built-in default when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the master seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Error probability used by the structure objective: paper or ml.
    #[arg(long, global = true)]
    mode: Option<String>,
}

#[derive(Subcommand)]
enum Cmd {
    /// Optimise the structure, then generate data, train and evaluate.
    Codesign,
    /// Surrogate search plus the integer-grid baselines.
    OptimizeStructure,
    /// Simulate a labelled dataset for one structure.
    GenDataset {
        /// Gap widths in mm, comma separated.
        #[arg(long, value_delimiter = ',', required = true)]
        d: Vec<f64>,
        /// Draw from the held-out test stream instead of the training stream.
        #[arg(long)]
        test: bool,
        /// Output CSV; defaults to dataset.csv or test_dataset.csv in --out.
        #[arg(long)]
        file: Option<PathBuf>,
    },
    /// Fit the sensing function to a dataset.
    Train {
        #[arg(long)]
        dataset: PathBuf,
        /// Defaults to model.json in --out.
        #[arg(long)]
        model: Option<PathBuf>,
    },
    /// RMSE of a model on a dataset.
    Evaluate {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        dataset: PathBuf,
    },
    /// RMSE of the three structure cases across transmit power or distance.
    Sweep {
        #[arg(long)]
        axis: String,
        #[arg(long)]
        retrain_per_point: bool,
        /// Also write a gnuplot script next to the CSV.
        #[arg(long)]
        plot: bool,
    },
    /// Estimate conditions from one received power vector (dBm).
    Infer {
        #[arg(long)]
        model: PathBuf,
        /// Received powers, comma separated, one per probe frequency.
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true, required = true)]
        p: Vec<f64>,
    },
}

fn load_config(common: &Common) -> Result<RunConfig> {
    let mut cfg = match &common.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default_config(),
    };
    if let Some(s) = common.seed {
        cfg.seed = s;
    }
    if let Some(m) = &common.mode {
        cfg.objective.mode = m.parse::<ErrorMode>()?;
    }
    if let Some(o) = &common.out {
        cfg.output_dir = Some(o.clone());
    }
    Ok(cfg)
}

fn out_dir(cfg: &RunConfig) -> Result<PathBuf> {
    let dir = cfg.output_dir.clone().unwrap_or_else(|| "out".into());
    std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    Ok(dir)
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path).map_err(|e| Error::io(path, e))?))
}

fn fmt_vec(v: &[f64]) -> String {
    v.iter().map(|x| format!("{x:.4}")).collect::<Vec<_>>().join(", ")
}

fn run(cli: Cli) -> Result<()> {
    let cfg = load_config(&cli.common)?;
    match cli.cmd {
        Cmd::Codesign => {
            let ctx = Context::new(cfg)?;
            let dir = out_dir(&ctx.cfg)?;
            let m = pipeline::run_codesign(&ctx, &dir)?;
            println!("d* = [{}] mm, I_EN = {:.6}", fmt_vec(&m.d_star), m.i_en_d_star);
            println!(
                "grid best = [{}] mm, I_EN = {:.6}",
                fmt_vec(&m.grid_best),
                m.i_en_grid_best
            );
            println!("grid average I_EN = {:.6}", m.i_en_grid_average);
            println!("train RMSE = {:.6}, test RMSE = {:.6}", m.train_rmse, m.test_rmse);
            println!("manifest: {}", dir.join("manifest.json").display());
        }
        Cmd::OptimizeStructure => {
            let ctx = Context::new(cfg)?;
            let dir = out_dir(&ctx.cfg)?;
            let s = pipeline::optimize_structure(&ctx)?;
            s.optimized.trace.write_csv(create(&dir.join("trace.csv"))?)?;
            s.write_csv(create(&dir.join("structures.csv"))?)?;
            println!(
                "d* = [{}] mm, I_EN = {:.6}",
                fmt_vec(&s.optimized.best),
                s.optimized.value
            );
            println!(
                "grid best = [{}] mm, I_EN = {:.6}",
                fmt_vec(&s.grid_best),
                s.grid_best_value
            );
            println!("grid average I_EN = {:.6}", s.grid_average_value);
        }
        Cmd::GenDataset { d, test, file } => {
            let ctx = Context::new(cfg)?;
            if d.len() != ctx.cfg.n_targets() {
                return Err(Error::Config(format!(
                    "--d has {} gap widths, the sensor has {} units",
                    d.len(),
                    ctx.cfg.n_targets()
                )));
            }
            if !ctx.cfg.design.is_feasible(&d) {
                return Err(Error::Config(format!(
                    "structure [{}] is outside the design space",
                    fmt_vec(&d)
                )));
            }
            let ds = if test {
                pipeline::test_set(&ctx, &ctx.cfg.channel, &d, 0)?
            } else {
                pipeline::training_set(&ctx, &ctx.cfg.channel, &d, 0)?
            };
            let path = match file {
                Some(f) => f,
                None => out_dir(&ctx.cfg)?.join(if test { "test_dataset.csv" } else { "dataset.csv" }),
            };
            ds.write_csv(create(&path)?)?;
            println!("{} records -> {}", ds.len(), path.display());
        }
        Cmd::Train { dataset, model } => {
            let ctx = Context::new(cfg)?;
            let ds = Dataset::load(&dataset)?;
            let trained = pipeline::train_model(&ctx, &ds, 0)?;
            let dir = out_dir(&ctx.cfg)?;
            let path = model.unwrap_or_else(|| dir.join("model.json"));
            trained.model.save(&path)?;
            pipeline::write_history(&trained, create(&dir.join("history.csv"))?)?;
            println!(
                "best epoch {}, training RMSE = {:.6} -> {}",
                trained.best_epoch,
                rmse(&trained.model, &ds)?,
                path.display()
            );
        }
        Cmd::Evaluate { model, dataset } => {
            println!("{:.12}", pipeline::evaluate(&model, &dataset)?);
        }
        Cmd::Sweep {
            axis,
            retrain_per_point,
            plot,
        } => {
            let axis: SweepAxis = axis.parse()?;
            let mut cfg = cfg;
            cfg.sweep.retrain_per_point |= retrain_per_point;
            let ctx = Context::new(cfg)?;
            let dir = out_dir(&ctx.cfg)?;
            let search = pipeline::optimize_structure(&ctx)?;
            let values = axis.values(&ctx.cfg).to_vec();
            let rows = pipeline::sweep(&ctx, axis, &values, &search)?;
            let name = format!("sweep_{}.csv", axis.column());
            pipeline::write_sweep_csv(axis, &rows, create(&dir.join(&name))?)?;
            for r in &rows {
                println!("{} = {}  {:<12} {:.6}", axis.column(), r.value, r.case, r.rmse);
            }
            if plot {
                let gp = dir.join(format!("sweep_{}.gp", axis.column()));
                std::fs::write(&gp, pipeline::gnuplot_script(axis, &name)).map_err(|e| Error::io(&gp, e))?;
            }
        }
        Cmd::Infer { model, p } => {
            let m = SensingModel::load(&model)?;
            let est = pipeline::infer(&m, &p)?;
            for (n, v) in est.iter().enumerate() {
                let (name, unit) = cfg.condition_label(n);
                println!("{name} = {v:.4} {unit}");
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_config() { 2 } else { 3 })
        }
    }
}
