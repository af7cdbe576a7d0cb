use metaiot::discernibility::{error_prob_from_tau, ErrorMode};
use metaiot::pipeline::{Context, EnObjective, RunConfig};
use metaiot::Result;

/// The default two-unit sensor and channel, shared by all demo views.
pub struct Model {
    ctx: Context,
}

/// Received power spectrum of one sensor state.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrum {
    pub freq_ghz: Vec<f64>,
    pub gamma: Vec<f64>,
    pub power_dbm: Vec<f64>,
}

/// Objective values on a square lattice over the design box, row-major with
/// `d_1` varying slowest.
#[derive(Debug, Clone, PartialEq)]
pub struct Landscape {
    pub axis_mm: Vec<f64>,
    pub values: Vec<f64>,
}

impl Model {
    pub fn new() -> Result<Self> {
        Ok(Model {
            ctx: Context::new(RunConfig::default_config())?,
        })
    }

    pub fn spectrum(&self, d: &[f64], c: &[f64]) -> Result<Spectrum> {
        let cfg = &self.ctx.cfg;
        let mut out = Spectrum {
            freq_ghz: Vec::new(),
            gamma: Vec::new(),
            power_dbm: Vec::new(),
        };
        for f in cfg.frequency.frequencies() {
            let g = self.ctx.sensor.gamma(f, c, d)?;
            out.freq_ghz.push(f / 1e9);
            out.gamma.push(g);
            out.power_dbm
                .push(cfg.channel.expected_rx_power_db(f, c, d, &self.ctx.sensor)?);
        }
        Ok(out)
    }

    /// Indiscernibility over the design box at `n` points per axis.
    /// Infeasible structures get `NaN`.
    pub fn landscape(&self, n: usize, mode: ErrorMode) -> Result<Landscape> {
        let (lo, hi) = self.ctx.cfg.design.bounds_mm[0];
        let axis_mm: Vec<f64> = (0..n)
            .map(|i| {
                if n == 1 {
                    lo
                } else {
                    lo + (hi - lo) * i as f64 / (n - 1) as f64
                }
            })
            .collect();
        let objective = EnObjective::new(&self.ctx, self.ctx.cfg.channel.clone(), mode);
        let mut values = Vec::with_capacity(n * n);
        for &a in &axis_mm {
            for &b in &axis_mm {
                let d = [a, b];
                values.push(if self.ctx.cfg.design.is_feasible(&d) {
                    objective.eval(&d)?
                } else {
                    f64::NAN
                });
            }
        }
        Ok(Landscape { axis_mm, values })
    }

    /// Probability of confusing `c` with `c_other` as transmit power
    /// (`distance == false`) or distance varies over `values`.
    pub fn error_curve(
        &self,
        d: &[f64],
        c: &[f64],
        c_other: &[f64],
        distance: bool,
        values: &[f64],
        mode: ErrorMode,
    ) -> Result<Vec<f64>> {
        let cfg = &self.ctx.cfg;
        values
            .iter()
            .map(|&v| {
                let mut cp = cfg.channel.clone();
                if distance {
                    cp.d_m = v;
                } else {
                    cp.p_w = v;
                }
                cp.validate()?;
                let a = cp.expected_power_vector(c, d, &cfg.frequency, &self.ctx.sensor)?;
                let b = cp.expected_power_vector(c_other, d, &cfg.frequency, &self.ctx.sensor)?;
                error_prob_from_tau(&a, &b, cp.sigma_m_db, mode)
            })
            .collect()
    }
}
