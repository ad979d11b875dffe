use std::io::Write;

use super::SlidingState;
use crate::error::{Error, Result};

/// One row of the controller diagnostic trace.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceRow {
    pub t: f64,
    pub osc_id: usize,
    pub sigma: f64,
    pub sigma_dot: f64,
    pub u: f64,
    pub s: f64,
    pub s_hat: f64,
    pub b: f64,
}

impl TraceRow {
    pub fn from_state(t: f64, state: &SlidingState) -> impl Iterator<Item = TraceRow> + '_ {
        (0..state.n()).map(move |i| TraceRow {
            t,
            osc_id: i,
            sigma: state.sigma[i],
            sigma_dot: state.sigma_dot[i],
            u: state.u[i],
            s: state.s[i],
            s_hat: state.s_hat[i],
            b: state.b[i],
        })
    }
}

/// CSV `t,osc_id,sigma,sigma_dot,u,s,s_hat,b`.
pub fn write_trace_csv<W: Write>(rows: &[TraceRow], w: W) -> Result<()> {
    let mut wr = csv::Writer::from_writer(w);
    wr.write_record(["t", "osc_id", "sigma", "sigma_dot", "u", "s", "s_hat", "b"])
        .map_err(crate::osc::csv_err)?;
    for r in rows {
        wr.write_record([
            format!("{}", r.t),
            r.osc_id.to_string(),
            format!("{}", r.sigma),
            format!("{}", r.sigma_dot),
            format!("{}", r.u),
            format!("{}", r.s),
            format!("{}", r.s_hat),
            format!("{}", r.b),
        ])
        .map_err(crate::osc::csv_err)?;
    }
    wr.flush().map_err(|e| Error::io("<trace>", e))
}
