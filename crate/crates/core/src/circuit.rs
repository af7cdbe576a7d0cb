//! Equivalent-circuit model of a meta-material sensor.
//!
//! Each sensing unit is a split-ring resonator approximated by a parallel
//! RLC network whose gap resistance depends on a condition-sensitive
//! material. Units combine in parallel with a coupling term, and the total
//! impedance against free space gives the power reflection coefficient.

use std::f64::consts::PI;
use std::ops::Deref;
use std::path::Path;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const MM: f64 = 1e-3;
const KELVIN_OFFSET: f64 = 273.15;

/// Impedance of free space in ohms.
pub const FREE_SPACE_IMPEDANCE: f64 = 377.0;

/// Environmental conditions, one value per sensing target (e.g. degC, %RH).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ConditionVector(pub Vec<f64>);

/// Gap widths of the sensing units in millimetres.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct StructureVector(pub Vec<f64>);

impl Deref for ConditionVector {
    type Target = [f64];
    fn deref(&self) -> &[f64] {
        &self.0
    }
}

impl Deref for StructureVector {
    type Target = [f64];
    fn deref(&self) -> &[f64] {
        &self.0
    }
}

impl From<Vec<f64>> for ConditionVector {
    fn from(v: Vec<f64>) -> Self {
        ConditionVector(v)
    }
}

impl From<Vec<f64>> for StructureVector {
    fn from(v: Vec<f64>) -> Self {
        StructureVector(v)
    }
}

/// Conductivity law of a sensitive material in its primary condition.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "kebab-case")]
pub enum MaterialLaw {
    /// NTC Beta equation: `sigma_ref * exp(beta * (1/T_ref - 1/T))`, T in kelvin.
    Ntc {
        sigma_ref_s_per_m: f64,
        reference_c: f64,
        beta_k: f64,
    },
    /// `sigma_ref * exp(k * (RH - RH_ref))`.
    HumidityExponential {
        sigma_ref_s_per_m: f64,
        reference_rh: f64,
        coeff_per_rh: f64,
    },
    /// Piecewise-linear `(condition, conductivity)` samples, sorted by condition.
    Table { points: Vec<(f64, f64)> },
}

/// Log-linear influence of a secondary condition on the conductivity.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrossSensitivity {
    pub dimension: usize,
    pub coeff: f64,
    pub reference: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MaterialModel {
    #[serde(flatten)]
    pub law: MaterialLaw,
    /// Index of the condition this material primarily responds to.
    pub dimension: usize,
    /// Valid range of the primary condition.
    pub range: (f64, f64),
    #[serde(default)]
    pub cross: Vec<CrossSensitivity>,
}

impl MaterialModel {
    pub fn ntc(sigma_ref: f64, reference_c: f64, beta_k: f64, dimension: usize) -> Self {
        MaterialModel {
            law: MaterialLaw::Ntc {
                sigma_ref_s_per_m: sigma_ref,
                reference_c,
                beta_k,
            },
            dimension,
            range: (-50.0, 150.0),
            cross: Vec::new(),
        }
    }

    pub fn humidity(sigma_ref: f64, reference_rh: f64, coeff: f64, dimension: usize) -> Self {
        MaterialModel {
            law: MaterialLaw::HumidityExponential {
                sigma_ref_s_per_m: sigma_ref,
                reference_rh,
                coeff_per_rh: coeff,
            },
            dimension,
            range: (0.0, 100.0),
            cross: Vec::new(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let (lo, hi) = self.range;
        if !(lo < hi) {
            return Err(Error::Config(format!("material range [{lo}, {hi}] is empty")));
        }
        match &self.law {
            MaterialLaw::Ntc {
                sigma_ref_s_per_m,
                reference_c,
                ..
            } => {
                if !(*sigma_ref_s_per_m > 0.0) {
                    return Err(Error::Config("NTC reference conductivity must be positive".into()));
                }
                if lo + KELVIN_OFFSET <= 0.0 || reference_c + KELVIN_OFFSET <= 0.0 {
                    return Err(Error::Config("NTC temperatures must be above absolute zero".into()));
                }
            }
            MaterialLaw::HumidityExponential { sigma_ref_s_per_m, .. } => {
                if !(*sigma_ref_s_per_m > 0.0) {
                    return Err(Error::Config("humidity reference conductivity must be positive".into()));
                }
            }
            MaterialLaw::Table { points } => {
                if points.is_empty() {
                    return Err(Error::Config("material table has no points".into()));
                }
                if points.windows(2).any(|w| !(w[0].0 < w[1].0)) {
                    return Err(Error::Config("material table must be strictly increasing".into()));
                }
                if points.iter().any(|p| !(p.1 > 0.0 && p.1.is_finite())) {
                    return Err(Error::Config("material table conductivities must be positive".into()));
                }
            }
        }
        Ok(())
    }

    /// Conductivity in S/m under the conditions `c`.
    pub fn conductivity(&self, c: &[f64]) -> Result<f64> {
        let x = *c.get(self.dimension).ok_or(Error::Dimension {
            expected: self.dimension + 1,
            got: c.len(),
        })?;
        let (min, max) = self.range;
        if !(x >= min && x <= max) {
            return Err(Error::Range { value: x, min, max });
        }
        let primary = match &self.law {
            MaterialLaw::Ntc {
                sigma_ref_s_per_m,
                reference_c,
                beta_k,
            } => {
                let t = x + KELVIN_OFFSET;
                let t_ref = reference_c + KELVIN_OFFSET;
                sigma_ref_s_per_m * (beta_k * (1.0 / t_ref - 1.0 / t)).exp()
            }
            MaterialLaw::HumidityExponential {
                sigma_ref_s_per_m,
                reference_rh,
                coeff_per_rh,
            } => sigma_ref_s_per_m * (coeff_per_rh * (x - reference_rh)).exp(),
            MaterialLaw::Table { points } => interp_clamped(points, x),
        };
        let mut exponent = 0.0;
        for cs in &self.cross {
            let v = *c.get(cs.dimension).ok_or(Error::Dimension {
                expected: cs.dimension + 1,
                got: c.len(),
            })?;
            exponent += cs.coeff * (v - cs.reference);
        }
        let sigma = primary * exponent.exp();
        if !(sigma > 0.0 && sigma.is_finite()) {
            return Err(Error::Domain(format!("conductivity {sigma} at {c:?}")));
        }
        Ok(sigma)
    }
}

fn interp_clamped(points: &[(f64, f64)], x: f64) -> f64 {
    let first = points[0];
    let last = points[points.len() - 1];
    if x <= first.0 {
        return first.1;
    }
    if x >= last.0 {
        return last.1;
    }
    let i = points.partition_point(|p| p.0 <= x);
    let (x0, y0) = points[i - 1];
    let (x1, y1) = points[i];
    y0 + (y1 - y0) * (x - x0) / (x1 - x0)
}

/// Lumped-element parameters of a single sensing unit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UnitCircuitParams {
    pub l_para_h: f64,
    pub c_para_f: f64,
    /// Gap capacitance at 1 mm gap width (F*mm).
    pub c_gap_unit_f_mm: f64,
    pub w_srr_mm: f64,
    pub h_srr_mm: f64,
    pub material: MaterialModel,
}

impl UnitCircuitParams {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("l_para_h", self.l_para_h),
            ("c_para_f", self.c_para_f),
            ("c_gap_unit_f_mm", self.c_gap_unit_f_mm),
            ("w_srr_mm", self.w_srr_mm),
            ("h_srr_mm", self.h_srr_mm),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::Config(format!("{name} must be positive and finite, got {v}")));
            }
        }
        self.material.validate()
    }

    pub fn gap_capacitance(&self, d_mm: f64) -> f64 {
        self.c_gap_unit_f_mm / d_mm
    }

    pub fn gap_resistance(&self, c: &[f64], d_mm: f64) -> Result<f64> {
        let sigma = self.material.conductivity(c)?;
        Ok(d_mm * MM / (sigma * self.w_srr_mm * MM * self.h_srr_mm * MM))
    }

    fn admittance(&self, f: f64, c: &[f64], d_mm: f64) -> Result<Complex64> {
        if !(f > 0.0) {
            return Err(Error::Domain(format!("frequency must be positive, got {f}")));
        }
        if !(d_mm > 0.0) {
            return Err(Error::Domain(format!("gap width must be positive, got {d_mm}")));
        }
        let omega = 2.0 * PI * f;
        let r_gap = self.gap_resistance(c, d_mm)?;
        let c_total = self.c_para_f + self.gap_capacitance(d_mm);
        Ok(Complex64::new(
            1.0 / r_gap,
            omega * c_total - 1.0 / (omega * self.l_para_h),
        ))
    }

    /// Impedance of the unit's RLC network.
    pub fn impedance(&self, f: f64, c: &[f64], d_mm: f64) -> Result<Complex64> {
        Ok(self.admittance(f, c, d_mm)?.inv())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SensorCircuitParams {
    pub units: Vec<UnitCircuitParams>,
    /// Coupling capacitance between adjacent units; `inf` disables coupling.
    pub c_cp_f: f64,
    #[serde(default = "default_z0")]
    pub z0_ohm: f64,
}

fn default_z0() -> f64 {
    FREE_SPACE_IMPEDANCE
}

impl SensorCircuitParams {
    pub fn n_targets(&self) -> usize {
        self.units.len()
    }

    pub fn validate(&self) -> Result<()> {
        if self.units.is_empty() {
            return Err(Error::Config("sensor needs at least one unit".into()));
        }
        if !(self.c_cp_f > 0.0) {
            return Err(Error::Config("coupling capacitance must be positive".into()));
        }
        if !(self.z0_ohm > 0.0 && self.z0_ohm.is_finite()) {
            return Err(Error::Config("z0_ohm must be positive".into()));
        }
        for (i, u) in self.units.iter().enumerate() {
            u.validate().map_err(|e| Error::Config(format!("unit {i}: {e}")))?;
            if u.material.dimension >= self.units.len()
                || u.material.cross.iter().any(|x| x.dimension >= self.units.len())
            {
                return Err(Error::Config(format!(
                    "unit {i}: material refers to a condition outside 0..{}",
                    self.units.len()
                )));
            }
        }
        Ok(())
    }

    /// Total sensor impedance: units in parallel plus the coupling term.
    pub fn impedance(&self, f: f64, c: &[f64], d: &[f64]) -> Result<Complex64> {
        if d.len() != self.units.len() {
            return Err(Error::Dimension {
                expected: self.units.len(),
                got: d.len(),
            });
        }
        let mut y = Complex64::new(0.0, 0.0);
        for (unit, &dn) in self.units.iter().zip(d) {
            y += unit.admittance(f, c, dn)?;
        }
        let n = self.units.len();
        if n > 1 {
            // (N_T - 1) / (2 pi i f C_cp)
            let omega = 2.0 * PI * f;
            y += Complex64::new(0.0, -((n - 1) as f64) / (omega * self.c_cp_f));
        }
        Ok(y.inv())
    }
}

/// Power reflection coefficient `|(Z - Z0)/(Z + Z0)|^2`.
pub fn reflection_coefficient(z: Complex64, z0: f64) -> Result<f64> {
    let den = (z + z0).norm_sqr();
    if den == 0.0 {
        return Err(Error::Singularity);
    }
    Ok((z - z0).norm_sqr() / den)
}

/// Multiplicative correction of the analytical reflection coefficient,
/// sampled on a tensor grid of frequencies and gap widths.
#[derive(Debug, Clone, PartialEq)]
pub struct CorrectionTable {
    freqs: Vec<f64>,
    gaps: Vec<Vec<f64>>,
    /// Row-major over (freq, d_1, ..., d_N).
    factors: Vec<f64>,
}

impl CorrectionTable {
    /// Builds a table from `(freq_hz, d_mm, factor)` samples. Every
    /// combination of the distinct axis values must appear exactly once.
    pub fn from_samples(samples: &[(f64, Vec<f64>, f64)]) -> Result<Self> {
        let first = samples.first().ok_or(Error::Empty("correction table"))?;
        let n = first.1.len();
        if n == 0 {
            return Err(Error::Config("correction table has no gap columns".into()));
        }
        let axis = |vals: &mut Vec<f64>| {
            vals.sort_by(f64::total_cmp);
            vals.dedup();
        };
        let mut freqs: Vec<f64> = samples.iter().map(|s| s.0).collect();
        axis(&mut freqs);
        let mut gaps = Vec::with_capacity(n);
        for k in 0..n {
            let mut v: Vec<f64> = samples
                .iter()
                .map(|s| s.1.get(k).copied().unwrap_or(f64::NAN))
                .collect();
            axis(&mut v);
            gaps.push(v);
        }
        let size = freqs.len() * gaps.iter().map(Vec::len).product::<usize>();
        if size != samples.len() {
            return Err(Error::Config(format!(
                "correction table must be a full grid: {} samples for {} grid points",
                samples.len(),
                size
            )));
        }
        let mut factors = vec![f64::NAN; size];
        for (f, d, factor) in samples {
            if d.len() != n {
                return Err(Error::Dimension {
                    expected: n,
                    got: d.len(),
                });
            }
            if !(*factor > 0.0 && factor.is_finite()) {
                return Err(Error::Config(format!("correction factor {factor} must be positive")));
            }
            let mut idx = freqs.binary_search_by(|x| x.total_cmp(f)).unwrap();
            for (k, dk) in d.iter().enumerate() {
                idx = idx * gaps[k].len() + gaps[k].binary_search_by(|x| x.total_cmp(dk)).unwrap();
            }
            if !factors[idx].is_nan() {
                return Err(Error::Config(format!("duplicate correction sample at f={f}, d={d:?}")));
            }
            factors[idx] = *factor;
        }
        Ok(CorrectionTable { freqs, gaps, factors })
    }

    /// A table that applies `factor` everywhere on the given gap grid.
    pub fn constant(freqs: &[f64], gaps: &[Vec<f64>], factor: f64) -> Result<Self> {
        let mut samples = Vec::new();
        let mut combos: Vec<Vec<f64>> = vec![Vec::new()];
        for axis in gaps {
            combos = combos
                .into_iter()
                .flat_map(|prefix| {
                    axis.iter().map(move |&v| {
                        let mut p = prefix.clone();
                        p.push(v);
                        p
                    })
                })
                .collect();
        }
        for &f in freqs {
            for d in &combos {
                samples.push((f, d.clone(), factor));
            }
        }
        Self::from_samples(&samples)
    }

    pub fn n_gaps(&self) -> usize {
        self.gaps.len()
    }

    /// Reads a CSV with header `freq_hz,d_1_mm,...,d_N_mm,factor`.
    pub fn from_csv(path: &Path) -> Result<Self> {
        let mut rdr = csv::Reader::from_path(path).map_err(|e| Error::parse(path, e))?;
        let headers = rdr.headers().map_err(|e| Error::parse(path, e))?.clone();
        let cols = headers.len();
        if cols < 3
            || &headers[0] != "freq_hz"
            || &headers[cols - 1] != "factor"
            || (1..cols - 1).any(|k| headers[k] != format!("d_{k}_mm"))
        {
            return Err(Error::parse(path, "expected header freq_hz,d_1_mm,...,d_N_mm,factor"));
        }
        let mut samples = Vec::new();
        for rec in rdr.records() {
            let rec = rec.map_err(|e| Error::parse(path, e))?;
            let vals = rec
                .iter()
                .map(|s| s.trim().parse::<f64>())
                .collect::<std::result::Result<Vec<_>, _>>()
                .map_err(|e| Error::parse(path, e))?;
            samples.push((vals[0], vals[1..cols - 1].to_vec(), vals[cols - 1]));
        }
        Self::from_samples(&samples)
    }

    /// Multilinear interpolation of the correction factor. Frequencies
    /// outside the table clamp to the nearest end; gap widths outside the
    /// sampled box are an error.
    pub fn factor(&self, f: f64, d: &[f64]) -> Result<f64> {
        if d.len() != self.gaps.len() {
            return Err(Error::Dimension {
                expected: self.gaps.len(),
                got: d.len(),
            });
        }
        let mut brackets = Vec::with_capacity(1 + d.len());
        brackets.push(bracket(
            &self.freqs,
            f.clamp(self.freqs[0], *self.freqs.last().unwrap()),
        ));
        for (axis, &x) in self.gaps.iter().zip(d) {
            let (lo, hi) = (axis[0], *axis.last().unwrap());
            if x < lo - 1e-12 || x > hi + 1e-12 {
                return Err(Error::Extrapolation(d.to_vec()));
            }
            brackets.push(bracket(axis, x.clamp(lo, hi)));
        }
        let dims: Vec<usize> = std::iter::once(self.freqs.len())
            .chain(self.gaps.iter().map(Vec::len))
            .collect();
        let mut acc = 0.0;
        for corner in 0..(1usize << brackets.len()) {
            let mut weight = 1.0;
            let mut idx = 0;
            for (k, &(i, t)) in brackets.iter().enumerate() {
                let upper = corner >> k & 1 == 1;
                let (ik, wk) = if upper {
                    ((i + 1).min(dims[k] - 1), t)
                } else {
                    (i, 1.0 - t)
                };
                weight *= wk;
                idx = idx * dims[k] + ik;
            }
            if weight != 0.0 {
                acc += weight * self.factors[idx];
            }
        }
        Ok(acc)
    }
}

/// Lower index and fractional position of `x` within a sorted axis.
fn bracket(axis: &[f64], x: f64) -> (usize, f64) {
    if axis.len() == 1 {
        return (0, 0.0);
    }
    let i = axis.partition_point(|&v| v <= x).clamp(1, axis.len() - 1) - 1;
    let t = (x - axis[i]) / (axis[i + 1] - axis[i]);
    (i, t.clamp(0.0, 1.0))
}

/// The sensor's reflection model: analytical circuit plus optional correction.
#[derive(Debug, Clone, PartialEq)]
pub struct Sensor {
    pub circuit: SensorCircuitParams,
    pub correction: Option<CorrectionTable>,
}

impl Sensor {
    pub fn new(circuit: SensorCircuitParams) -> Self {
        Sensor {
            circuit,
            correction: None,
        }
    }

    pub fn with_correction(mut self, table: CorrectionTable) -> Self {
        self.correction = Some(table);
        self
    }

    pub fn n_targets(&self) -> usize {
        self.circuit.n_targets()
    }

    /// Analytical reflection coefficient without correction.
    pub fn gamma_hat(&self, f: f64, c: &[f64], d: &[f64]) -> Result<f64> {
        reflection_coefficient(self.circuit.impedance(f, c, d)?, self.circuit.z0_ohm)
    }

    /// Corrected reflection coefficient, clamped to `[0, 1]`.
    pub fn gamma(&self, f: f64, c: &[f64], d: &[f64]) -> Result<f64> {
        let g = self.gamma_hat(f, c, d)?;
        match &self.correction {
            None => Ok(g),
            Some(tbl) => Ok((g * tbl.factor(f, d)?).clamp(0.0, 1.0)),
        }
    }
}
