//! Backscatter transmission model.
//!
//! Received power is pathloss times the power reflected by the wall and the
//! sensor array, plus a constant receiver bias, reported in dBm with additive
//! Gaussian measurement noise in the dB domain.

use std::f64::consts::PI;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::circuit::Sensor;
use crate::error::{Error, Result};

/// Reference power of the dBm scale in watts.
pub const DBM_REFERENCE_W: f64 = 1e-3;

pub fn watts_to_dbm(p: f64) -> f64 {
    10.0 * (p / DBM_REFERENCE_W).log10()
}

pub fn dbm_to_watts(db: f64) -> f64 {
    DBM_REFERENCE_W * 10f64.powf(db / 10.0)
}

/// Two-way pathloss factor `(v / (4 pi f))^2 * (1 / (2 D))^alpha`.
pub fn pathloss(f_hz: f64, d_m: f64, alpha: f64, v: f64) -> Result<f64> {
    if !(f_hz > 0.0) || !(d_m > 0.0) || !(v > 0.0) {
        return Err(Error::Domain(format!(
            "pathloss needs positive f, D and v (got f={f_hz}, D={d_m}, v={v})"
        )));
    }
    Ok((v / (4.0 * PI * f_hz)).powi(2) * (1.0 / (2.0 * d_m)).powf(alpha))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelParams {
    pub p_w: f64,
    pub d_m: f64,
    pub alpha: f64,
    /// Wall reflection coefficient.
    pub r_w: f64,
    /// Optional `(freq_hz, r_w)` samples overriding `r_w`, linear in frequency.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub r_w_table: Option<Vec<(f64, f64)>>,
    pub p_b_w: f64,
    pub sigma_m_db: f64,
    #[serde(default = "default_speed")]
    pub v_m_per_s: f64,
    pub s0_m2: f64,
    pub d0_m: f64,
    pub n_x: u32,
    pub n_y: u32,
    pub l_s_m: f64,
    pub units_per_sensor: u32,
}

fn default_speed() -> f64 {
    3e8
}

impl ChannelParams {
    /// Total area of the sensor array, `N_T * l_s^2 * N_x * N_y`.
    pub fn array_area(&self) -> f64 {
        self.units_per_sensor as f64 * self.l_s_m.powi(2) * self.n_x as f64 * self.n_y as f64
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if !(self.p_w > 0.0) {
            return bad(format!("p_w must be positive, got {}", self.p_w));
        }
        if !(self.d_m > 0.0) {
            return bad(format!("d_m must be positive, got {}", self.d_m));
        }
        if !(0.0..=1.0).contains(&self.r_w) {
            return bad(format!("r_w must lie in [0, 1], got {}", self.r_w));
        }
        if let Some(t) = &self.r_w_table {
            if t.is_empty() || t.windows(2).any(|w| !(w[0].0 < w[1].0)) {
                return bad("r_w_table must be non-empty and sorted by frequency".into());
            }
            if t.iter().any(|p| !(0.0..=1.0).contains(&p.1)) {
                return bad("r_w_table entries must lie in [0, 1]".into());
            }
        }
        if !(self.p_b_w > 0.0) || !(self.p_b_w < 0.01 * self.p_w) {
            return bad(format!(
                "bias p_b_w = {} must be positive and below 1% of p_w = {}",
                self.p_b_w, self.p_w
            ));
        }
        if !(self.sigma_m_db >= 0.0) {
            return bad(format!("sigma_m_db must be non-negative, got {}", self.sigma_m_db));
        }
        if !(self.v_m_per_s > 0.0 && self.s0_m2 > 0.0 && self.d0_m > 0.0 && self.l_s_m > 0.0) {
            return bad("v_m_per_s, s0_m2, d0_m and l_s_m must be positive".into());
        }
        if self.n_x == 0 || self.n_y == 0 || self.units_per_sensor == 0 {
            return bad("array dimensions must be at least 1".into());
        }
        area_fractions(self)?;
        Ok(())
    }

    pub fn wall_reflection(&self, f_hz: f64) -> f64 {
        match &self.r_w_table {
            None => self.r_w,
            Some(t) => {
                let (first, last) = (t[0], t[t.len() - 1]);
                if f_hz <= first.0 {
                    first.1
                } else if f_hz >= last.0 {
                    last.1
                } else {
                    let i = t.partition_point(|p| p.0 <= f_hz);
                    let ((x0, y0), (x1, y1)) = (t[i - 1], t[i]);
                    y0 + (y1 - y0) * (f_hz - x0) / (x1 - x0)
                }
            }
        }
    }

    /// Received power in watts before the dB conversion, given the sensor
    /// reflection coefficient `gamma`.
    pub fn received_power_w(&self, f_hz: f64, gamma: f64) -> Result<f64> {
        let pl = pathloss(f_hz, self.d_m, self.alpha, self.v_m_per_s)?;
        let (eta_ms, eta_env) = area_fractions(self)?;
        let reflected = eta_env * self.p_w * self.wall_reflection(f_hz) + eta_ms * self.p_w * gamma;
        Ok(pl * reflected + self.p_b_w)
    }

    /// Noise-free received power in dBm.
    pub fn expected_rx_power_db(&self, f_hz: f64, c: &[f64], d: &[f64], sensor: &Sensor) -> Result<f64> {
        let gamma = sensor.gamma(f_hz, c, d)?;
        Ok(watts_to_dbm(self.received_power_w(f_hz, gamma)?))
    }

    /// One noisy measurement in dBm.
    pub fn sample_rx_power_db<R: Rng + ?Sized>(
        &self,
        f_hz: f64,
        c: &[f64],
        d: &[f64],
        sensor: &Sensor,
        rng: &mut R,
    ) -> Result<f64> {
        let tau = self.expected_rx_power_db(f_hz, c, d, sensor)?;
        Ok(tau + self.noise(rng))
    }

    pub(crate) fn noise<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let z: f64 = rng.sample(StandardNormal);
        self.sigma_m_db * z
    }

    /// Noise-free received power vector `tau(c)` over the grid.
    pub fn expected_power_vector(
        &self,
        c: &[f64],
        d: &[f64],
        grid: &FrequencyGrid,
        sensor: &Sensor,
    ) -> Result<Vec<f64>> {
        grid.frequencies()
            .map(|f| self.expected_rx_power_db(f, c, d, sensor))
            .collect()
    }

    /// A measured received power vector with independent noise per frequency.
    pub fn rx_power_vector<R: Rng + ?Sized>(
        &self,
        c: &[f64],
        d: &[f64],
        grid: &FrequencyGrid,
        sensor: &Sensor,
        rng: &mut R,
    ) -> Result<ReceivedPowerVector> {
        let mut p = self.expected_power_vector(c, d, grid, sensor)?;
        for v in &mut p {
            *v += self.noise(rng);
        }
        Ok(ReceivedPowerVector(p))
    }
}

/// Fractions of the beam footprint covered by the sensor array and by the wall.
pub fn area_fractions(cp: &ChannelParams) -> Result<(f64, f64)> {
    let footprint = cp.s0_m2 * (cp.d_m / cp.d0_m).powi(2);
    if !(footprint > 0.0) {
        return Err(Error::Domain(format!("beam footprint {footprint} must be positive")));
    }
    let eta_ms = cp.array_area() / footprint;
    if eta_ms > 1.0 {
        return Err(Error::Geometry(eta_ms));
    }
    Ok((eta_ms, 1.0 - eta_ms))
}

/// `n_f` equally spaced frequencies from `f_lb_hz` to `f_ub_hz` inclusive.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrequencyGrid {
    pub f_lb_hz: f64,
    pub f_ub_hz: f64,
    pub n_f: usize,
}

impl FrequencyGrid {
    pub fn new(f_lb_hz: f64, f_ub_hz: f64, n_f: usize) -> Result<Self> {
        let g = FrequencyGrid { f_lb_hz, f_ub_hz, n_f };
        g.validate()?;
        Ok(g)
    }

    /// A one-point grid is allowed and sits at `f_lb_hz`.
    pub fn validate(&self) -> Result<()> {
        if self.n_f == 0 || !(self.f_lb_hz > 0.0) {
            return Err(Error::Config("frequency grid needs n_f >= 1 and f_lb_hz > 0".into()));
        }
        if self.n_f >= 2 && !(self.f_lb_hz < self.f_ub_hz) {
            return Err(Error::Config("frequency grid needs f_lb_hz < f_ub_hz".into()));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.n_f
    }

    pub fn is_empty(&self) -> bool {
        self.n_f == 0
    }

    pub fn frequency(&self, i: usize) -> f64 {
        if self.n_f == 1 {
            return self.f_lb_hz;
        }
        let t = i as f64 / (self.n_f - 1) as f64;
        if i + 1 == self.n_f {
            self.f_ub_hz
        } else {
            self.f_lb_hz + t * (self.f_ub_hz - self.f_lb_hz)
        }
    }

    pub fn frequencies(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.n_f).map(|i| self.frequency(i))
    }
}

/// Received power samples in dBm, one per grid frequency.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ReceivedPowerVector(pub Vec<f64>);

impl std::ops::Deref for ReceivedPowerVector {
    type Target = [f64];
    fn deref(&self) -> &[f64] {
        &self.0
    }
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use crate::circuit::{MaterialModel, SensorCircuitParams, UnitCircuitParams};
    use crate::rng;

    pub(crate) fn params() -> ChannelParams {
        ChannelParams {
            p_w: 0.1,
            d_m: 1.0,
            alpha: 2.0,
            r_w: 0.3,
            r_w_table: None,
            p_b_w: 1e-9,
            sigma_m_db: 1.0,
            v_m_per_s: 3e8,
            s0_m2: 0.32,
            d0_m: 1.0,
            n_x: 20,
            n_y: 20,
            l_s_m: 0.01,
            units_per_sensor: 2,
        }
    }

    pub(crate) fn sensor() -> Sensor {
        let unit = |l: f64, m: MaterialModel| UnitCircuitParams {
            l_para_h: l,
            c_para_f: 0.1e-12,
            c_gap_unit_f_mm: 0.2e-12,
            w_srr_mm: 1.0,
            h_srr_mm: 0.5,
            material: m,
        };
        Sensor::new(SensorCircuitParams {
            units: vec![
                unit(10e-9, MaterialModel::ntc(2.0, 25.0, 3450.0, 0)),
                unit(6e-9, MaterialModel::humidity(2.0, 40.0, 0.05, 1)),
            ],
            c_cp_f: 20e-9,
            z0_ohm: 377.0,
        })
    }

    #[test]
    fn pathloss_scaling() {
        let base = pathloss(5e9, 1.0, 2.3, 3e8).unwrap();
        let far = pathloss(5e9, 2.0, 2.3, 3e8).unwrap();
        let high = pathloss(10e9, 1.0, 2.3, 3e8).unwrap();
        assert!((far / base - 2f64.powf(-2.3)).abs() < 1e-14);
        assert!((high / base - 0.25).abs() < 1e-14);
        // (3e8 / (4 pi 5e9))^2 * (1/2)^2, evaluated independently
        let v = pathloss(5e9, 1.0, 2.0, 3e8).unwrap();
        assert!((v - 5.699_316_579_881_5e-6).abs() < 1e-20);
        assert!(pathloss(0.0, 1.0, 2.0, 3e8).is_err());
        assert!(pathloss(1e9, -1.0, 2.0, 3e8).is_err());
    }

    #[test]
    fn area_fraction_edges() {
        let mut cp = params();
        let (ms, env) = area_fractions(&cp).unwrap();
        assert_eq!(ms + env, 1.0);
        assert!((ms - 0.25).abs() < 1e-15);
        cp.d_m = 2.0;
        assert!((area_fractions(&cp).unwrap().0 - ms / 4.0).abs() < 1e-15);
        cp.d_m = 1.0;
        cp.s0_m2 = cp.array_area();
        assert_eq!(area_fractions(&cp).unwrap(), (1.0, 0.0));
        cp.d_m = 0.9;
        assert!(matches!(area_fractions(&cp), Err(Error::Geometry(_))));
    }

    #[test]
    fn sensor_matching_wall_makes_split_irrelevant() {
        let cp = params();
        let f = 4e9;
        let pl = pathloss(f, 1.0, 2.0, 3e8).unwrap();
        let expected = watts_to_dbm(pl * cp.p_w * cp.r_w + cp.p_b_w);
        let got = watts_to_dbm(cp.received_power_w(f, cp.r_w).unwrap());
        assert!((got - expected).abs() < 1e-12);
    }

    #[test]
    fn hand_computed_chain() {
        let cp = params();
        // PL(5 GHz) = 5.6993e-6; eta = (0.25, 0.75); reflected = 0.1*(0.75*0.3 + 0.25*0.6)
        // = 0.0375 W; received = 2.137237e-7 + 1e-9 W -> dBm
        let got = watts_to_dbm(cp.received_power_w(5e9, 0.6).unwrap());
        assert!((got - (-36.681_186_592_717_05)).abs() < 1e-9, "{got}");
    }

    #[test]
    fn power_monotonicity() {
        let s = sensor();
        let mut cp = params();
        let c = [25.0, 40.0];
        let d = [2.0, 3.0];
        let mut last = f64::NEG_INFINITY;
        for p in [1e-3, 1e-2, 0.1, 1.0] {
            cp.p_w = p;
            let t = cp.expected_rx_power_db(5e9, &c, &d, &s).unwrap();
            assert!(t > last);
            last = t;
        }
        cp.p_w = 0.1;
        let mut last = f64::INFINITY;
        for dist in [0.6, 1.0, 2.0, 4.0, 8.0] {
            cp.d_m = dist;
            let t = cp.expected_rx_power_db(5e9, &c, &d, &s).unwrap();
            assert!(t < last);
            last = t;
        }
    }

    #[test]
    fn db_round_trip() {
        for p in [1e-15, 3.7e-9, 1e-3, 0.5, 42.0] {
            assert!((dbm_to_watts(watts_to_dbm(p)) / p - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn noiseless_samples_equal_expectation() {
        let s = sensor();
        let mut cp = params();
        cp.sigma_m_db = 0.0;
        let grid = FrequencyGrid::new(2e9, 8e9, 7).unwrap();
        let mut r = rng::stream(1, &[]);
        let c = [25.0, 40.0];
        let d = [2.0, 3.0];
        let v = cp.rx_power_vector(&c, &d, &grid, &s, &mut r).unwrap();
        assert_eq!(v.0, cp.expected_power_vector(&c, &d, &grid, &s).unwrap());
        let one = FrequencyGrid::new(4e9, 4e9, 1).unwrap();
        cp.sigma_m_db = 2.0;
        let a = cp.rx_power_vector(&c, &d, &one, &s, &mut rng::stream(3, &[])).unwrap();
        let b = cp
            .sample_rx_power_db(4e9, &c, &d, &s, &mut rng::stream(3, &[]))
            .unwrap();
        assert_eq!(a.0, vec![b]);
    }

    #[test]
    fn seeded_vectors_repeat() {
        let s = sensor();
        let cp = params();
        let grid = FrequencyGrid::new(2e9, 8e9, 16).unwrap();
        let c = [25.0, 40.0];
        let a = cp
            .rx_power_vector(&c, &[2.0, 3.0], &grid, &s, &mut rng::stream(9, &[1]))
            .unwrap();
        let b = cp
            .rx_power_vector(&c, &[2.0, 3.0], &grid, &s, &mut rng::stream(9, &[1]))
            .unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn noise_moments() {
        let s = sensor();
        let cp = params();
        let c = [25.0, 40.0];
        let d = [2.0, 3.0];
        let tau = cp.expected_rx_power_db(5e9, &c, &d, &s).unwrap();
        let n = 100_000;
        let mut r = rng::stream(11, &[]);
        let xs: Vec<f64> = (0..n)
            .map(|_| cp.sample_rx_power_db(5e9, &c, &d, &s, &mut r).unwrap())
            .collect();
        let mean = xs.iter().sum::<f64>() / n as f64;
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        assert!((mean - tau).abs() < 4.0 * cp.sigma_m_db / (n as f64).sqrt());
        assert!((var / cp.sigma_m_db.powi(2) - 1.0).abs() < 0.05);
    }

    #[test]
    fn noise_independent_across_frequencies() {
        let s = sensor();
        let cp = params();
        let grid = FrequencyGrid::new(2e9, 8e9, 4).unwrap();
        let c = [25.0, 40.0];
        let d = [2.0, 3.0];
        let tau = cp.expected_power_vector(&c, &d, &grid, &s).unwrap();
        let mut r = rng::stream(5, &[]);
        let n = 10_000;
        let samples: Vec<Vec<f64>> = (0..n)
            .map(|_| {
                let v = cp.rx_power_vector(&c, &d, &grid, &s, &mut r).unwrap();
                v.iter().zip(&tau).map(|(a, b)| a - b).collect()
            })
            .collect();
        for i in 0..4 {
            for j in (i + 1)..4 {
                let cov: f64 = samples.iter().map(|e| e[i] * e[j]).sum::<f64>() / n as f64;
                let vi: f64 = samples.iter().map(|e| e[i] * e[i]).sum::<f64>() / n as f64;
                let vj: f64 = samples.iter().map(|e| e[j] * e[j]).sum::<f64>() / n as f64;
                assert!((cov / (vi * vj).sqrt()).abs() < 0.05);
            }
        }
    }

    #[test]
    fn validation_rejects_bad_bias_and_wall() {
        let mut cp = params();
        cp.p_b_w = 0.01 * cp.p_w;
        assert!(cp.validate().is_err());
        let mut cp = params();
        cp.r_w = 1.2;
        assert!(cp.validate().is_err());
        assert!(params().validate().is_ok());
    }

    #[test]
    fn wall_table_interpolates() {
        let mut cp = params();
        cp.r_w_table = Some(vec![(2e9, 0.2), (4e9, 0.4)]);
        assert!((cp.wall_reflection(3e9) - 0.3).abs() < 1e-15);
        assert_eq!(cp.wall_reflection(1e9), 0.2);
        assert_eq!(cp.wall_reflection(9e9), 0.4);
    }

    #[test]
    fn grid_endpoints_inclusive() {
        let g = FrequencyGrid::new(2e9, 8e9, 4).unwrap();
        let f: Vec<f64> = g.frequencies().collect();
        assert_eq!(f, vec![2e9, 4e9, 6e9, 8e9]);
        assert!(FrequencyGrid::new(8e9, 2e9, 4).is_err());
    }
}
