//! CSV and JSON output files.
//!
//! Every file is written to a sibling temp path and renamed into place, so a
//! crashed run never leaves a truncated artifact. Numbers use the shortest
//! round-trip float formatting, making repeated runs byte-identical.

use std::fs;
use std::io::{self, BufWriter, Write};
use std::path::Path;

use crate::bounds::BoundsReport;
use crate::harness::{SimulationResult, SweepRow};

/// Write `contents` atomically.
fn write_atomic(path: &Path, write_body: impl FnOnce(&mut dyn Write) -> io::Result<()>) -> io::Result<()> {
    let dir = path.parent().unwrap_or_else(|| Path::new("."));
    fs::create_dir_all(dir)?;
    let file_name = path
        .file_name()
        .ok_or_else(|| io::Error::new(io::ErrorKind::InvalidInput, "output path has no file name"))?;
    let tmp = dir.join(format!(".{}.tmp", file_name.to_string_lossy()));
    {
        let file = fs::File::create(&tmp)?;
        let mut writer = BufWriter::new(file);
        write_body(&mut writer)?;
        writer.flush()?;
    }
    fs::rename(&tmp, path)
}

/// `estimates.csv`: per-node state estimates and covariance trace at the
/// recorded times. Header `t,node,xhat0,...,xhat{n-1},traceP`.
pub fn write_estimates_csv(path: &Path, res: &SimulationResult) -> io::Result<()> {
    write_atomic(path, |w| {
        write!(w, "t,node")?;
        for c in 0..res.state_dim {
            write!(w, ",xhat{c}")?;
        }
        writeln!(w, ",traceP")?;
        for k in 0..res.times.len() {
            for node in 0..res.network_size {
                write!(w, "{},{}", res.times[k], node + 1)?;
                for c in 0..res.state_dim {
                    write!(w, ",{}", res.estimates[node][k][c])?;
                }
                writeln!(w, ",{}", res.trace_p[node][k])?;
            }
        }
        Ok(())
    })
}

/// `events.csv`: the event log as `t,node,k`. Index 0 marks the t = 0 seed
/// broadcasts; triggered events count from 1.
pub fn write_events_csv(path: &Path, res: &SimulationResult) -> io::Result<()> {
    write_atomic(path, |w| {
        writeln!(w, "t,node,k")?;
        for e in &res.events {
            writeln!(w, "{},{},{}", e.t, e.node + 1, e.index)?;
        }
        Ok(())
    })
}

/// `consensus.csv`: per-node distance to the true average information
/// vector at the recorded times, as `t,node,zbar_err`.
pub fn write_consensus_csv(path: &Path, res: &SimulationResult) -> io::Result<()> {
    write_atomic(path, |w| {
        writeln!(w, "t,node,zbar_err")?;
        for k in 0..res.times.len() {
            for node in 0..res.network_size {
                writeln!(w, "{},{},{}", res.times[k], node + 1, res.zbar_err[node][k])?;
            }
        }
        Ok(())
    })
}

/// `sweep.csv`: the threshold trade-off table as `delta,E,F,F_norm`.
pub fn write_sweep_csv(path: &Path, rows: &[SweepRow]) -> io::Result<()> {
    write_atomic(path, |w| {
        writeln!(w, "delta,E,F,F_norm")?;
        for r in rows {
            writeln!(w, "{},{},{},{}", r.delta, r.e_avg, r.f_avg, r.f_norm_avg)?;
        }
        Ok(())
    })
}

/// `bounds.json`: the bound report.
pub fn write_bounds_json(path: &Path, report: &BoundsReport) -> io::Result<()> {
    write_atomic(path, |w| {
        let text = serde_json::to_string_pretty(report)
            .map_err(io::Error::other)?;
        writeln!(w, "{text}")
    })
}

/// `broadcasts.csv`: full event payloads (flattened vector and row-major
/// matrix), available when the run recorded them.
pub fn write_broadcasts_csv(path: &Path, res: &SimulationResult) -> io::Result<()> {
    let n = res.state_dim;
    write_atomic(path, |w| {
        write!(w, "t,node,k")?;
        for c in 0..n {
            write!(w, ",z{c}")?;
        }
        for r in 0..n {
            for c in 0..n {
                write!(w, ",Z{r}{c}")?;
            }
        }
        writeln!(w)?;
        for e in &res.events {
            let Some(payload) = &e.payload else { continue };
            write!(w, "{},{},{}", e.t, e.node + 1, e.index)?;
            for c in 0..n {
                write!(w, ",{}", payload.z[c])?;
            }
            for r in 0..n {
                for c in 0..n {
                    write!(w, ",{}", payload.z_mat[(r, c)])?;
                }
            }
            writeln!(w)?;
        }
        Ok(())
    })
}
