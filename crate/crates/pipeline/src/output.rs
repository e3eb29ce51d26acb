//! CSV writers for selection, stability and benchmark results.

use std::io::Write;

use fedgl_core::GroupPartition;

use crate::bench::BenchRow;
use crate::error::Result;
use crate::select::SelectionFrequency;
use crate::stability::StabilityReport;

fn members(partition: &GroupPartition, g: usize, ids: Option<&[String]>) -> String {
    partition
        .range(g)
        .map(|c| match ids {
            Some(ids) => ids[c].clone(),
            None => format!("f{c}"),
        })
        .collect::<Vec<_>>()
        .join(";")
}

/// `rank,group,count,features` for the groups owning `columns`.
pub fn write_selection<W: Write>(
    out: W,
    freq: &SelectionFrequency,
    partition: &GroupPartition,
    columns: &[usize],
    ids: Option<&[String]>,
) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["rank", "group", "count", "features"])?;
    for (rank, g) in crate::select::groups_of(columns, partition).into_iter().enumerate() {
        let chosen: Vec<String> = partition
            .range(g)
            .filter(|c| columns.contains(c))
            .map(|c| ids.map(|ids| ids[c].clone()).unwrap_or_else(|| format!("f{c}")))
            .collect();
        w.write_record([(rank + 1).to_string(), g.to_string(), freq.counts[g].to_string(), chosen.join(";")])?;
    }
    w.flush()?;
    Ok(())
}

/// `rank,group,probability,features` over every group.
pub fn write_stability<W: Write>(out: W, report: &StabilityReport, partition: &GroupPartition, ids: Option<&[String]>) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["rank", "group", "probability", "features"])?;
    for (rank, &g) in report.ranking.iter().enumerate() {
        w.write_record([
            (rank + 1).to_string(),
            g.to_string(),
            report.selection_probability[g].to_string(),
            members(partition, g, ids),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_bench<W: Write>(out: W, rows: &[BenchRow]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["features", "mode", "seconds", "lambdas", "converged", "mean_rejection", "final_objective"])?;
    for r in rows {
        w.write_record([
            r.features.to_string(),
            r.mode.name().to_string(),
            format!("{:.6}", r.seconds),
            r.lambdas.to_string(),
            r.converged.to_string(),
            format!("{:.6}", r.mean_rejection()),
            r.final_objective.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}
