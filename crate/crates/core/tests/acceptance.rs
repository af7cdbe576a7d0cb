//! Acceptance criteria AC1-AC10. Each criterion is its own test and prints a
//! single `ACn PASS|FAIL` line; run with `--nocapture` to see them.

use std::time::Instant;

use metaiot::channel::{area_fractions, ChannelParams, FrequencyGrid};
use metaiot::circuit::{reflection_coefficient, MaterialModel, Sensor, SensorCircuitParams, UnitCircuitParams};
use metaiot::discernibility::{error_prob_from_tau, mc_error_oracle, pairwise_error_prob, ConditionGrid, ErrorMode};
use metaiot::pipeline::{
    optimize_structure, run_codesign, spearman, sweep, Context, EnObjective, RunConfig, SweepAxis,
};
use metaiot::sensefn::{generate_dataset, rmse, train, Activation, Dataset, Record, SensingModel, TrainConfig};
use metaiot::structopt::{grid_average, grid_search};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn report(id: &str, ok: bool, detail: String) {
    println!("{id} {}: {detail}", if ok { "PASS" } else { "FAIL" });
    assert!(ok, "{id} failed: {detail}");
}

fn log_uniform(rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> f64 {
    (rng.random_range(lo.ln()..hi.ln())).exp()
}

fn random_circuit(rng: &mut ChaCha8Rng) -> SensorCircuitParams {
    let n_t = rng.random_range(1..=3);
    let units = (0..n_t)
        .map(|n| {
            let material = if rng.random_bool(0.5) {
                MaterialModel::ntc(
                    log_uniform(rng, 1e-3, 1e3),
                    rng.random_range(0.0..50.0),
                    rng.random_range(1000.0..5000.0),
                    n,
                )
            } else {
                MaterialModel::humidity(
                    log_uniform(rng, 1e-3, 1e3),
                    rng.random_range(10.0..90.0),
                    rng.random_range(0.0..0.1),
                    n,
                )
            };
            UnitCircuitParams {
                l_para_h: log_uniform(rng, 1e-10, 1e-6),
                c_para_f: log_uniform(rng, 1e-15, 1e-11),
                c_gap_unit_f_mm: log_uniform(rng, 1e-15, 1e-11),
                w_srr_mm: log_uniform(rng, 0.1, 10.0),
                h_srr_mm: log_uniform(rng, 0.1, 10.0),
                material,
            }
        })
        .collect();
    SensorCircuitParams {
        units,
        c_cp_f: log_uniform(rng, 1e-14, 1e-6),
        z0_ohm: rng.random_range(10.0..500.0),
    }
}

#[test]
fn ac1_reflection_bounds() {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut violations = 0usize;
    let mut evaluated = 0usize;
    for _ in 0..10_000 {
        let circuit = random_circuit(&mut rng);
        circuit.validate().unwrap();
        let n_t = circuit.n_targets();
        let sensor = Sensor::new(circuit);
        let c: Vec<f64> = (0..n_t).map(|_| rng.random_range(0.0..100.0)).collect();
        let d: Vec<f64> = (0..n_t).map(|_| rng.random_range(0.1..10.0)).collect();
        let f_lb = log_uniform(&mut rng, 1e8, 1e10);
        let fgrid = FrequencyGrid::new(f_lb, f_lb * rng.random_range(1.1..4.0), 32).unwrap();
        for f in fgrid.frequencies() {
            let g = sensor.gamma_hat(f, &c, &d).unwrap();
            evaluated += 1;
            if !(0.0..=1.0).contains(&g) {
                violations += 1;
            }
        }
    }
    let mut exact = true;
    for z0 in [1.0, 50.0, 377.0, 1e4] {
        exact &= reflection_coefficient(Complex64::new(z0, 0.0), z0).unwrap() == 0.0;
        exact &= reflection_coefficient(Complex64::new(0.0, 0.0), z0).unwrap() == 1.0;
    }
    let secs = start.elapsed().as_secs_f64();
    report(
        "AC1",
        violations == 0 && exact && secs < 5.0,
        format!("{evaluated} evaluations, {violations} outside [0,1], matched/short exact = {exact}, {secs:.2} s"),
    );
}

fn random_channel(rng: &mut ChaCha8Rng) -> ChannelParams {
    let mut cp = RunConfig::default_config().channel;
    cp.p_w = log_uniform(rng, 1e-3, 10.0);
    cp.p_b_w = cp.p_w * log_uniform(rng, 1e-9, 1e-3);
    cp.l_s_m = log_uniform(rng, 1e-3, 0.05);
    cp.n_x = rng.random_range(1..50);
    cp.n_y = rng.random_range(1..50);
    cp.units_per_sensor = rng.random_range(1..4);
    cp.s0_m2 = log_uniform(rng, 0.01, 10.0);
    cp.d0_m = log_uniform(rng, 0.1, 10.0);
    // smallest distance that keeps the array inside the beam footprint
    let d_min = cp.d0_m * (cp.array_area() / cp.s0_m2).sqrt();
    cp.d_m = d_min * rng.random_range(1.0..20.0);
    cp
}

#[test]
fn ac2_energy_split() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut worst = 0.0f64;
    let mut n = 0;
    while n < 1000 {
        let cp = random_channel(&mut rng);
        if cp.validate().is_err() {
            continue;
        }
        let (ms, env) = area_fractions(&cp).unwrap();
        worst = worst.max((ms + env - 1.0).abs());
        n += 1;
    }
    report(
        "AC2",
        worst <= 1e-15,
        format!("max |eta_ms + eta_env - 1| = {worst:e} over {n} channels"),
    );
}

#[test]
fn ac3_error_probability_oracle() {
    let start = Instant::now();
    let cfg = RunConfig::default_config();
    let sensor = cfg.sensor().unwrap();
    let grid = cfg.condition_grid().unwrap();
    let bounds = grid.bounds();
    let steps = grid.steps().to_vec();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let trials = 100_000;
    let mut worst_z = 0.0f64;
    let mut failures = 0;
    for _ in 0..20 {
        let c: Vec<f64> = bounds.iter().map(|&(lo, hi)| rng.random_range(lo..=hi)).collect();
        let c2: Vec<f64> = c
            .iter()
            .zip(&steps)
            .map(|(v, s)| v + s * rng.random_range(-1.0..1.0))
            .collect();
        let d: Vec<f64> = cfg
            .design
            .bounds_mm
            .iter()
            .map(|&(lo, hi)| rng.random_range(lo..hi))
            .collect();
        let mut cp = cfg.channel.clone();
        cp.sigma_m_db = rng.random_range(0.5..=3.0);
        let p = pairwise_error_prob(&c, &c2, &d, &cp, &cfg.frequency, &sensor, ErrorMode::Ml).unwrap();
        let mc = mc_error_oracle(&c, &c2, &d, &cp, &cfg.frequency, &sensor, trials, &mut rng).unwrap();
        let sd = (p * (1.0 - p) / trials as f64).sqrt();
        let diff = (mc - p).abs();
        let ok = if sd > 0.0 { diff <= 3.0 * sd } else { diff == 0.0 };
        if !ok {
            failures += 1;
        }
        if sd > 0.0 {
            worst_z = worst_z.max(diff / sd);
        }
    }
    let secs = start.elapsed().as_secs_f64();
    report(
        "AC3",
        failures == 0 && secs < 60.0,
        format!("{failures}/20 instances outside 3 sd (worst {worst_z:.2} sd), {secs:.1} s"),
    );
}

#[test]
fn ac4_monotone_in_power_and_distance() {
    let cfg = RunConfig::default_config();
    let ctx = Context::new(cfg).unwrap();
    let powers: Vec<f64> = (0..8).map(|i| 1e-3 * 10f64.powf(i as f64 * 3.0 / 7.0)).collect();
    let distances: Vec<f64> = (0..8).map(|i| 0.5 + 0.75 * i as f64).collect();
    let structures = [[1.0, 1.0], [2.05, 1.22], [3.0, 4.0], [5.0, 1.0]];
    let mut violations = 0usize;
    let mut checked = 0usize;
    for mode in [ErrorMode::Paper, ErrorMode::Ml] {
        for d in &structures {
            for (axis, values, increasing) in [(0, &powers, false), (1, &distances, true)] {
                let taus: Vec<Vec<Vec<f64>>> = values
                    .iter()
                    .map(|&v| {
                        let mut cp = ctx.cfg.channel.clone();
                        if axis == 0 {
                            cp.p_w = v;
                        } else {
                            cp.d_m = v;
                        }
                        cp.validate().unwrap();
                        ctx.grid
                            .points()
                            .iter()
                            .map(|c| cp.expected_power_vector(c, d, &ctx.cfg.frequency, &ctx.sensor).unwrap())
                            .collect()
                    })
                    .collect();
                for j in 0..ctx.grid.len() {
                    for &k in ctx.neighbors.get(j) {
                        let probs: Vec<f64> = taus
                            .iter()
                            .map(|t| error_prob_from_tau(&t[j], &t[k], ctx.cfg.channel.sigma_m_db, mode).unwrap())
                            .collect();
                        for w in probs.windows(2) {
                            checked += 1;
                            let bad = if increasing { w[1] < w[0] } else { w[1] > w[0] };
                            if bad {
                                violations += 1;
                            }
                        }
                    }
                }
            }
        }
    }
    report(
        "AC4",
        violations == 0,
        format!("{violations} violations in {checked} consecutive comparisons"),
    );
}

#[test]
fn ac5_neighbor_bound_and_cost() {
    let ctx = Context::new(RunConfig::default_config()).unwrap();
    let grid = &ctx.grid;
    assert_eq!(grid.len(), 81);
    let bounds = grid.bounds();
    let mut ok = true;
    for (j, c) in grid.points().iter().enumerate() {
        let on_edge = (0..grid.dim())
            .filter(|&n| c[n] == bounds[n].0 || c[n] == bounds[n].1)
            .count();
        let n = ctx.neighbors.get(j).len();
        ok &= n <= 4;
        ok &= match on_edge {
            0 => n == 4,
            2 => n == 2,
            _ => n == 3,
        };
    }
    let objective = EnObjective::new(&ctx, ctx.cfg.channel.clone(), ErrorMode::Paper);
    objective.eval(&[2.0, 2.0]).unwrap();
    let pairs = objective.pair_evaluations();
    report(
        "AC5",
        ok && pairs <= 324 && objective.calls() == 1,
        format!("neighbour counts ok = {ok}, {pairs} pair evaluations for one objective call"),
    );
}

fn random_model(rng: &mut ChaCha8Rng) -> (SensingModel, Vec<Record>) {
    let n_in = rng.random_range(1..=6);
    let n_hidden = rng.random_range(1..=8);
    let n_out = rng.random_range(1..=3);
    let activation = [
        Activation::Sigmoid,
        Activation::Tanh,
        Activation::Relu,
        Activation::Softmax,
    ][rng.random_range(0..4)];
    let mut m = SensingModel::zeros(n_in, n_hidden, n_out, activation);
    for x in &mut m.w {
        *x = rng.random_range(-1.5..1.5);
    }
    for i in 0..n_in {
        m.in_mean[i] = rng.random_range(-60.0..-20.0);
        m.in_std[i] = rng.random_range(0.5..5.0);
    }
    for k in 0..n_out {
        m.out_min[k] = rng.random_range(-10.0..10.0);
        m.out_scale[k] = rng.random_range(1.0..50.0);
    }
    let batch = (0..rng.random_range(1..=8))
        .map(|_| Record {
            c: (0..n_out)
                .map(|k| m.out_min[k] + m.out_scale[k] * rng.random_range(0.0..1.0))
                .collect(),
            meas_idx: 0,
            p: (0..n_in)
                .map(|i| m.in_mean[i] + m.in_std[i] * rng.random_range(-2.0..2.0))
                .collect(),
        })
        .collect();
    (m, batch)
}

#[test]
fn ac6_gradient_check() {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut worst = 0.0f64;
    let mut params = 0usize;
    for _ in 0..100 {
        let (mut m, batch) = random_model(&mut rng);
        let refs: Vec<&Record> = batch.iter().collect();
        let g = m.gradient(&refs).unwrap();
        let h = 1e-5;
        for i in 0..m.w.len() {
            let w0 = m.w[i];
            m.w[i] = w0 + h;
            let up = m.loss(&refs).unwrap();
            m.w[i] = w0 - h;
            let down = m.loss(&refs).unwrap();
            m.w[i] = w0;
            let fd = (up - down) / (2.0 * h);
            let scale = g[i].abs().max(fd.abs()).max(1e-6);
            worst = worst.max((g[i] - fd).abs() / scale);
            params += 1;
        }
    }
    let secs = start.elapsed().as_secs_f64();
    report(
        "AC6",
        worst < 1e-5 && secs < 30.0,
        format!("max relative deviation {worst:.2e} over {params} parameters in 100 cases, {secs:.2} s"),
    );
}

#[test]
fn ac7_learnability() {
    let start = Instant::now();
    let mut cfg = RunConfig::default_config();
    cfg.channel.sigma_m_db = 0.0;
    let sensor = cfg.sensor().unwrap();
    let grid = ConditionGrid::regular(&[23.0, 38.0], &[1.0, 1.0], &[5, 5]).unwrap();
    let d = [3.0, 3.0];
    let ds: Dataset = generate_dataset(&d, &grid, &cfg.channel, &cfg.frequency, &sensor, 1, cfg.seed, 0).unwrap();
    let mut injective = true;
    for a in 0..ds.len() {
        for b in a + 1..ds.len() {
            injective &= ds.records[a].p != ds.records[b].p;
        }
    }
    assert!(injective, "spectra on the learnability grid are not distinct");
    let tc = TrainConfig {
        hidden_nodes: 64,
        epochs: 2000,
        ..TrainConfig::default()
    };
    let trained = train(&ds, &grid.bounds(), &tc, cfg.seed, 0).unwrap();
    let r = rmse(&trained.model, &ds).unwrap();
    let secs = start.elapsed().as_secs_f64();
    report(
        "AC7",
        r < 0.5 && secs < 120.0,
        format!(
            "training RMSE {r:.3} on a 5x5 grid with unit steps (best epoch {}), {secs:.1} s",
            trained.best_epoch
        ),
    );
}

#[test]
fn ac8_optimizer_dominance() {
    let start = Instant::now();
    let ctx = Context::new(RunConfig::default_config()).unwrap();
    assert_eq!(ctx.cfg.surrogate.budget, 80);
    assert!(ctx.cfg.surrogate.seed_integer_grid);
    let search = optimize_structure(&ctx).unwrap();
    // recompute the baselines independently of the search
    let objective = EnObjective::new(&ctx, ctx.cfg.channel.clone(), ctx.mode());
    let grid = ctx.cfg.design.integer_grid();
    let (_, g_best) = grid_search(|d| objective.eval(d), &grid).unwrap();
    let g_avg = grid_average(|d| objective.eval(d), &grid).unwrap();
    let opt = search.optimized.value;
    let secs = start.elapsed().as_secs_f64();
    report(
        "AC8",
        opt <= g_best && g_best <= g_avg && secs < 300.0,
        format!(
            "I_EN(d* = {:?}) = {opt:.4} <= I_EN(d*_G = {:?}) = {g_best:.4} <= average {g_avg:.4}, {secs:.1} s",
            search.optimized.best.0, search.grid_best.0
        ),
    );
}

#[test]
fn ac9_end_to_end_trends() {
    let start = Instant::now();
    let mut cfg = RunConfig::default_config();
    cfg.sweep.retrain_per_point = true;
    let ctx = Context::new(cfg).unwrap();
    let search = optimize_structure(&ctx).unwrap();
    let mut ok = true;
    let mut detail = Vec::new();
    for (axis, want_negative) in [(SweepAxis::Power, true), (SweepAxis::Distance, false)] {
        let values = axis.values(&ctx.cfg).to_vec();
        assert_eq!(values.len(), 6);
        let rows = sweep(&ctx, axis, &values, &search).unwrap();
        let of = |case: &str| -> Vec<f64> { rows.iter().filter(|r| r.case == case).map(|r| r.rmse).collect() };
        let (opt, best, avg) = (of("optimized"), of("grid_best"), of("grid_average"));
        let rho = spearman(&values, &opt);
        let trend = if want_negative { rho <= -0.7 } else { rho >= 0.7 };
        let ordered = (0..values.len())
            .filter(|&i| opt[i] <= best[i] && best[i] <= avg[i])
            .count();
        ok &= trend && ordered == values.len();
        detail.push(format!(
            "{} rho = {rho:+.3}, ordering at {ordered}/{} points",
            axis.column(),
            values.len()
        ));
        for i in 0..values.len() {
            println!(
                "  {} = {}: optimized {:.4}, grid_best {:.4}, grid_average {:.4}",
                axis.column(),
                values[i],
                opt[i],
                best[i],
                avg[i]
            );
        }
    }
    let secs = start.elapsed().as_secs_f64();
    report("AC9", ok && secs < 900.0, format!("{}; {secs:.0} s", detail.join("; ")));
}

fn codesign_csvs(threads: usize) -> Vec<(String, Vec<u8>)> {
    let dir = tempfile::tempdir().unwrap();
    let ctx = Context::new(RunConfig::default_config()).unwrap();
    let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
    pool.install(|| run_codesign(&ctx, dir.path())).unwrap();
    let mut files: Vec<(String, Vec<u8>)> = std::fs::read_dir(dir.path())
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|x| x == "csv"))
        .map(|p| {
            (
                p.file_name().unwrap().to_string_lossy().into_owned(),
                std::fs::read(&p).unwrap(),
            )
        })
        .collect();
    files.sort();
    files
}

#[test]
fn ac10_determinism() {
    let a = codesign_csvs(1);
    let b = codesign_csvs(1);
    let c = codesign_csvs(4);
    let names: Vec<&str> = a.iter().map(|(n, _)| n.as_str()).collect();
    report(
        "AC10",
        !a.is_empty() && a == b && a == c,
        format!(
            "{} CSV artifacts {names:?}, identical across reruns = {}, across 1/4 threads = {}",
            a.len(),
            a == b,
            a == c
        ),
    );
}
