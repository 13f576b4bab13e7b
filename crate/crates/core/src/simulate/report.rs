//! CSV outputs. Numbers use the shortest round-trip notation so that
//! identical runs give identical bytes.

use std::io::Write;

use super::stats::{CostReport, ReservoirStats};
use super::{MonteCarloResult, SimulateError};
use crate::units::UnitSet;

/// One row per method: `method,Mean,St. Dev.,VaR 1%,VaR 5%`.
pub fn write_summary<W: Write>(out: W, reports: &[CostReport]) -> Result<(), SimulateError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["method", "Mean", "St. Dev.", "VaR 1%", "VaR 5%"])?;
    for r in reports {
        w.write_record([
            r.label.clone(),
            r.mean.to_string(),
            r.std_dev.to_string(),
            r.var1.to_string(),
            r.var5.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// One row per scenario: cost, unserved energy, EJP days and final stocks.
pub fn write_scenario_report<W: Write>(
    out: W,
    mc: &MonteCarloResult,
    units: &UnitSet,
) -> Result<(), SimulateError> {
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["scenario".to_string(), "cost".into(), "unserved_mwh".into()];
    header.extend(units.ejp.iter().map(|c| format!("ejp_days_{}", c.name)));
    header.extend(
        units
            .hydro
            .iter()
            .map(|u| format!("final_stock_{}", u.name)),
    );
    w.write_record(&header)?;
    for s in 0..mc.costs.len() {
        let mut row = vec![
            s.to_string(),
            mc.costs[s].to_string(),
            mc.unserved[s].to_string(),
        ];
        row.extend(mc.ejp_days[s].iter().map(|d| d.to_string()));
        row.extend(mc.final_stocks[s].iter().map(|x| x.to_string()));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

/// `day,<label>...` with the mean end-of-day stock per method.
pub fn write_trajectories<W: Write>(
    out: W,
    stats: &[(String, ReservoirStats)],
) -> Result<(), SimulateError> {
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["day".to_string()];
    header.extend(stats.iter().map(|(l, _)| l.clone()));
    w.write_record(&header)?;
    let days = stats
        .iter()
        .map(|(_, s)| s.mean_trajectory.len())
        .max()
        .unwrap_or(0);
    for d in 0..days {
        let mut row = vec![d.to_string()];
        row.extend(stats.iter().map(|(_, s)| {
            s.mean_trajectory
                .get(d)
                .map_or(String::new(), |x| x.to_string())
        }));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

/// `weeks,high_<label>...,low_<label>...`.
pub fn write_weeks<W: Write>(
    out: W,
    stats: &[(String, ReservoirStats)],
) -> Result<(), SimulateError> {
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["weeks".to_string()];
    header.extend(stats.iter().map(|(l, _)| format!("high_{l}")));
    header.extend(stats.iter().map(|(l, _)| format!("low_{l}")));
    w.write_record(&header)?;
    let xs = stats
        .first()
        .map(|(_, s)| s.weeks.clone())
        .unwrap_or_default();
    for (k, x) in xs.iter().enumerate() {
        let mut row = vec![x.to_string()];
        row.extend(stats.iter().map(|(_, s)| s.high_counts[k].to_string()));
        row.extend(stats.iter().map(|(_, s)| s.low_counts[k].to_string()));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}
