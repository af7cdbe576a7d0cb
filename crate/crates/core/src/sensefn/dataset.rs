use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::channel::{ChannelParams, FrequencyGrid};
use crate::circuit::Sensor;
use crate::discernibility::{ConditionGrid, TauTable};
use crate::error::{Error, Result};
use crate::{par, rng};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Record {
    pub c: Vec<f64>,
    pub meas_idx: usize,
    pub p: Vec<f64>,
}

/// Simulated measurements, ordered by condition then measurement index.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Dataset {
    pub records: Vec<Record>,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn n_features(&self) -> usize {
        self.records.first().map_or(0, |r| r.p.len())
    }

    pub fn n_targets(&self) -> usize {
        self.records.first().map_or(0, |r| r.c.len())
    }

    pub fn subset(&self, idx: &[usize]) -> Dataset {
        Dataset {
            records: idx.iter().map(|&i| self.records[i].clone()).collect(),
        }
    }

    fn header(n_t: usize, n_f: usize) -> Vec<String> {
        let mut h: Vec<String> = (1..=n_t).map(|n| format!("cond_{n}")).collect();
        h.push("meas_idx".into());
        h.extend((1..=n_f).map(|i| format!("p_{i}_db")));
        h
    }

    /// Writes `cond_1,...,cond_NT,meas_idx,p_1_db,...,p_NF_db`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(Self::header(self.n_targets(), self.n_features()))
            .map_err(|e| Error::parse("<dataset>", e))?;
        for r in &self.records {
            let mut rec: Vec<String> = r.c.iter().map(f64::to_string).collect();
            rec.push(r.meas_idx.to_string());
            rec.extend(r.p.iter().map(f64::to_string));
            w.write_record(&rec).map_err(|e| Error::parse("<dataset>", e))?;
        }
        w.flush().map_err(|e| Error::io("<dataset>", e))
    }

    pub fn read_csv<R: Read>(input: R, origin: &Path) -> Result<Self> {
        let mut rd = csv::Reader::from_reader(input);
        let header = rd.headers().map_err(|e| Error::parse(origin, e))?.clone();
        let n_t = header.iter().take_while(|h| h.starts_with("cond_")).count();
        let n_f = header.len().saturating_sub(n_t + 1);
        if n_t == 0 || n_f == 0 || header.iter().map(str::to_string).collect::<Vec<_>>() != Self::header(n_t, n_f) {
            return Err(Error::parse(origin, "unexpected dataset header"));
        }
        let mut records = Vec::new();
        for row in rd.records() {
            let row = row.map_err(|e| Error::parse(origin, e))?;
            let num = |s: &str| s.parse::<f64>().map_err(|e| Error::parse(origin, e));
            let c = row.iter().take(n_t).map(num).collect::<Result<Vec<_>>>()?;
            let meas_idx = row[n_t].parse::<usize>().map_err(|e| Error::parse(origin, e))?;
            let p = row.iter().skip(n_t + 1).map(num).collect::<Result<Vec<_>>>()?;
            records.push(Record { c, meas_idx, p });
        }
        Ok(Dataset { records })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let f = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        Self::read_csv(std::io::BufReader::new(f), path)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        self.write_csv(std::io::BufWriter::new(f))
    }
}

/// Monte Carlo dataset at structure `d`: `n_m` noisy spectra per condition.
///
/// The noise for record `(j, m)` depends only on `(seed, stream, j)`, so
/// datasets built for different structures share their noise draws.
#[allow(clippy::too_many_arguments)]
pub fn generate_dataset(
    d: &[f64],
    grid: &ConditionGrid,
    cp: &ChannelParams,
    fgrid: &FrequencyGrid,
    sensor: &Sensor,
    n_m: usize,
    seed: u64,
    stream: u64,
) -> Result<Dataset> {
    if n_m == 0 {
        return Err(Error::Config("need at least one measurement per condition".into()));
    }
    let tau = TauTable::compute(d, grid, cp, fgrid, sensor)?;
    let per_condition = par::map_indexed(grid.len(), |j| {
        let mut r = rng::stream(seed, &[rng::tag::DATASET, stream, j as u64]);
        (0..n_m)
            .map(|m| Record {
                c: grid.points()[j].0.clone(),
                meas_idx: m,
                p: tau.rows[j].iter().map(|t| t + cp.noise(&mut r)).collect(),
            })
            .collect::<Vec<_>>()
    });
    Ok(Dataset {
        records: per_condition.into_iter().flatten().collect(),
    })
}
