use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::FlowScenario;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IngestReport {
    /// (day, approach, t_s) of every interpolated sample.
    pub gaps: Vec<(u32, String, f64)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct IngestedDay {
    pub day: u32,
    pub scenario: FlowScenario,
}

#[derive(Deserialize)]
struct Row {
    day: u32,
    t_s: f64,
    approach_id: String,
    flow_vps: f64,
}

/// Reads `day,t_s,approach_id,flow_vps` rows. Missing samples are filled by
/// linear interpolation between their neighbours and reported.
pub fn read_flow_csv<R: Read>(r: R, sample_s: f64, day_s: f64) -> Result<(Vec<IngestedDay>, IngestReport)> {
    if !(sample_s > 0.0 && day_s >= sample_s) {
        return Err(Error::Config("ingest needs a positive sample period within the day".into()));
    }
    let n = (day_s / sample_s).ceil() as usize;
    let mut rd = csv::Reader::from_reader(r);
    let mut days: BTreeMap<u32, BTreeMap<String, Vec<Option<f64>>>> = BTreeMap::new();
    let mut rows = 0;
    for (i, rec) in rd.deserialize::<Row>().enumerate() {
        let row = i + 2;
        let rec = rec.map_err(|e| Error::Parse { row, msg: e.to_string() })?;
        rows += 1;
        if !(rec.flow_vps >= 0.0) || !rec.flow_vps.is_finite() {
            return Err(Error::Parse { row, msg: format!("flow {} must be a nonnegative number", rec.flow_vps) });
        }
        let idx = rec.t_s / sample_s;
        if !(rec.t_s >= 0.0 && idx.fract() == 0.0 && (idx as usize) < n) {
            return Err(Error::Parse { row, msg: format!("t_s {} is not a sample time of the day", rec.t_s) });
        }
        let series = days.entry(rec.day).or_default().entry(rec.approach_id.clone()).or_insert_with(|| vec![None; n]);
        let slot = &mut series[idx as usize];
        if slot.is_some() {
            return Err(Error::Parse { row, msg: format!("duplicate sample for {} at {}", rec.approach_id, rec.t_s) });
        }
        *slot = Some(rec.flow_vps);
    }
    if rows == 0 {
        return Err(Error::Parse { row: 1, msg: "flow file has no data rows".into() });
    }
    let mut gaps = Vec::new();
    let mut out = Vec::new();
    for (day, approaches) in days {
        let mut demand = BTreeMap::new();
        for (id, series) in approaches {
            let known: Vec<usize> = (0..n).filter(|&i| series[i].is_some()).collect();
            let filled = (0..n)
                .map(|i| {
                    if let Some(v) = series[i] {
                        return v;
                    }
                    gaps.push((day, id.clone(), i as f64 * sample_s));
                    let after = known.partition_point(|&k| k < i);
                    match (after.checked_sub(1).map(|b| known[b]), known.get(after)) {
                        (Some(a), Some(&b)) => {
                            let w = (i - a) as f64 / (b - a) as f64;
                            series[a].unwrap() * (1.0 - w) + series[b].unwrap() * w
                        }
                        (Some(a), None) => series[a].unwrap(),
                        (None, Some(&b)) => series[b].unwrap(),
                        (None, None) => 0.0,
                    }
                })
                .collect();
            demand.insert(id, filled);
        }
        out.push(IngestedDay { day, scenario: FlowScenario::new(sample_s, day_s, day as u64, demand)? });
    }
    Ok((out, IngestReport { gaps }))
}

pub fn ingest_flow_csv(path: &Path, sample_s: f64, day_s: f64) -> Result<(Vec<IngestedDay>, IngestReport)> {
    let f = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_flow_csv(std::io::BufReader::new(f), sample_s, day_s)
}

/// Writes every sample of every day in the ingest schema.
pub fn export_flow_csv<W: Write>(days: &[IngestedDay], w: W) -> Result<()> {
    let mut wr = csv::Writer::from_writer(w);
    wr.write_record(["day", "t_s", "approach_id", "flow_vps"]).map_err(crate::osc::csv_err)?;
    for d in days {
        for (id, series) in &d.scenario.demand {
            for (i, v) in series.iter().enumerate() {
                let t = i as f64 * d.scenario.sample_s;
                wr.write_record([d.day.to_string(), format!("{t}"), id.clone(), format!("{v}")])
                    .map_err(crate::osc::csv_err)?;
            }
        }
    }
    wr.flush().map_err(|e| Error::io("<flows>", e))
}
