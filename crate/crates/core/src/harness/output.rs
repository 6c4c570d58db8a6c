//! File export. All CSVs have a header row, comma separators and LF endings;
//! writing the same bundle twice produces identical bytes.

use std::fs;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde_json::json;
use thiserror::Error;

use super::run::{MethodOutput, OutputBundle};
use crate::network::write_spike_csv;

#[derive(Debug, Error)]
pub enum OutputError {
    #[error("bundle has no recorded state")]
    EmptyBundle,
    #[error("cannot write {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
}

fn write_file(path: &Path, f: impl FnOnce(&mut BufWriter<fs::File>) -> io::Result<()>) -> Result<PathBuf, OutputError> {
    let io_err = |source| OutputError::Io { path: path.to_path_buf(), source };
    let file = fs::File::create(path).map_err(io_err)?;
    let mut w = BufWriter::new(file);
    f(&mut w).and_then(|_| w.flush()).map_err(io_err)?;
    Ok(path.to_path_buf())
}

pub fn summary_json(bundle: &OutputBundle) -> serde_json::Value {
    let c = &bundle.config;
    let ticks: u64 = bundle.steps.iter().map(|s| s.ticks).sum();
    let spikes: u64 = bundle.steps.iter().map(|s| s.spikes).sum();
    let failed: u64 = bundle.steps.iter().map(|s| s.failed_draws).sum();
    let mut summary = json!({
        "name": c.name,
        "method": c.method,
        "seed": c.seed,
        "steps": c.steps,
        "neurons": bundle.neurons,
        "synapses": bundle.synapses,
        "ticks": ticks,
        "spikes": spikes,
        "failed_draws": failed,
    });
    let extra = match &bundle.output {
        MethodOutput::Particle(p) => json!({
            "walkers": p.traces.len(),
            "capacities": p.capacities,
            "wraparound_events": p.wraparounds.len(),
            "first_wraparound": p.wraparounds.first(),
        }),
        MethodOutput::Density(d) => {
            let totals: Vec<u64> = d.snapshots.iter().map(|s| s.total()).collect();
            json!({
                "nodes": d.snapshots.first().map_or(0, |s| s.counts.len()),
                "walkers": totals.first(),
                "conserved": totals.windows(2).all(|w| w[0] == w[1]),
                "routing_audit_failures": d.audit_failures,
                "max_ticks_per_step": bundle.steps.iter().map(|s| s.ticks).max(),
            })
        }
    };
    if let (Some(s), serde_json::Value::Object(e)) = (summary.as_object_mut(), extra) {
        s.extend(e);
    }
    summary
}

/// Writes the bundle's files into `dir` (created if needed) and returns their paths.
pub fn emit_outputs(bundle: &OutputBundle, dir: &Path) -> Result<Vec<PathBuf>, OutputError> {
    if bundle.is_empty() {
        return Err(OutputError::EmptyBundle);
    }
    fs::create_dir_all(dir).map_err(|source| OutputError::Io { path: dir.to_path_buf(), source })?;
    let mut written = Vec::new();

    match &bundle.output {
        MethodOutput::Particle(p) => {
            let dims = p.capacities.len();
            written.push(write_file(&dir.join("trajectories.csv"), |w| {
                write!(w, "walker_id,step")?;
                for d in 0..dims {
                    write!(w, ",dim{d}")?;
                }
                writeln!(w)?;
                for t in &p.traces {
                    for (step, pos) in t.positions.iter().enumerate() {
                        write!(w, "{},{step}", t.walker_id)?;
                        for x in pos {
                            write!(w, ",{x}")?;
                        }
                        writeln!(w)?;
                    }
                }
                Ok(())
            })?);
        }
        MethodOutput::Density(d) => {
            written.push(write_file(&dir.join("density.csv"), |w| {
                match &d.grid {
                    Some(_) => writeln!(w, "step,node,x,y,count")?,
                    None => writeln!(w, "step,node,count")?,
                }
                for s in &d.snapshots {
                    for (node, count) in s.counts.iter().enumerate() {
                        match &d.grid {
                            Some(g) => {
                                let (x, y) = g.coords(node);
                                writeln!(w, "{},{node},{x},{y},{count}", s.step)?;
                            }
                            None => writeln!(w, "{},{node},{count}", s.step)?,
                        }
                    }
                }
                Ok(())
            })?);
            if !d.probes.is_empty() {
                written.push(write_file(&dir.join("probes.csv"), |w| {
                    writeln!(w, "step,node,count")?;
                    for s in &d.snapshots {
                        for &node in &d.probes {
                            writeln!(w, "{},{node},{}", s.step, s.counts[node])?;
                        }
                    }
                    Ok(())
                })?);
            }
        }
    }

    written.push(write_file(&dir.join("spikes.csv"), |w| write_spike_csv(w, &bundle.spikes))?);
    written.push(write_file(&dir.join("steps.csv"), |w| {
        writeln!(w, "step,ticks,spikes,failed_draws")?;
        for s in &bundle.steps {
            writeln!(w, "{},{},{},{}", s.step, s.ticks, s.spikes, s.failed_draws)?;
        }
        Ok(())
    })?);
    written.push(write_file(&dir.join("summary.json"), |w| {
        serde_json::to_writer_pretty(&mut *w, &summary_json(bundle))?;
        writeln!(w)
    })?);
    if let Some(report) = &bundle.report {
        written.push(write_report(report, dir)?);
    }
    Ok(written)
}

pub fn write_report(report: &super::verify::VerifyReport, dir: &Path) -> Result<PathBuf, OutputError> {
    fs::create_dir_all(dir).map_err(|source| OutputError::Io { path: dir.to_path_buf(), source })?;
    write_file(&dir.join("report.json"), |w| {
        serde_json::to_writer_pretty(&mut *w, report)?;
        writeln!(w)
    })
}
