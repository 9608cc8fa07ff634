//! CSV artifacts of a simulation run.

use super::campaign::KpiSummary;
use super::engine::TickRow;
use super::kpi::{HoEvent, KpiRecord};
use crate::Result;
use std::io::Write;

pub fn write_tick_rows<W: Write>(w: W, rows: &[TickRow]) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["tick", "ue_id", "serving", "rsrp_serving", "throughput", "ho_flag", "pp_flag"])?;
    for r in rows {
        out.write_record([
            r.tick.to_string(),
            r.ue_id.to_string(),
            r.serving.to_string(),
            r.rsrp_serving.to_string(),
            r.throughput_mbps.to_string(),
            u8::from(r.ho_flag).to_string(),
            u8::from(r.pp_flag).to_string(),
        ])?;
    }
    out.flush()?;
    Ok(())
}

pub fn write_events<W: Write>(w: W, events: &[HoEvent]) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    for e in events {
        out.serialize(e)?;
    }
    if events.is_empty() {
        out.write_record(["tick", "ue_id", "from_cell", "to_cell", "outcome", "pingpong"])?;
    }
    out.flush()?;
    Ok(())
}

/// One row per run: the data behind per-KPI plots.
pub fn write_run_records<W: Write>(w: W, records: &[KpiRecord]) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record([
        "controller",
        "seed",
        "mean_throughput_mbps",
        "ho_rate",
        "pingpong_pct",
        "ho_failure_fraction",
        "utility",
    ])?;
    for r in records {
        out.write_record([
            r.controller.to_string(),
            r.seed.to_string(),
            r.mean_throughput_mbps.to_string(),
            r.ho_rate.to_string(),
            r.pingpong_pct.to_string(),
            r.ho_failure_fraction.to_string(),
            r.utility.to_string(),
        ])?;
    }
    out.flush()?;
    Ok(())
}

/// Summary rows for the listed KPIs (all when `kpis` is empty), with the
/// campaign base seed so every run can be regenerated on its own.
pub fn write_summary<W: Write>(w: W, summary: &KpiSummary, base_seed: u64, kpis: &[&str]) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["controller", "kpi", "mean", "ci_half_width", "n_runs", "seed"])?;
    for r in summary.rows.iter().filter(|r| kpis.is_empty() || kpis.contains(&r.kpi)) {
        out.write_record([
            r.controller.to_string(),
            r.kpi.to_string(),
            r.ci.mean.to_string(),
            r.ci.ci_half_width.to_string(),
            r.ci.n.to_string(),
            base_seed.to_string(),
        ])?;
    }
    out.flush()?;
    Ok(())
}

/// Bar-chart data for one KPI: one row per controller.
pub fn write_plot_data<W: Write>(w: W, summary: &KpiSummary, kpi: &str) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["controller", "mean", "ci_half_width", "lower", "upper"])?;
    for r in summary.rows.iter().filter(|r| r.kpi == kpi) {
        out.write_record([
            r.controller.to_string(),
            r.ci.mean.to_string(),
            r.ci.ci_half_width.to_string(),
            r.ci.lower().to_string(),
            r.ci.upper().to_string(),
        ])?;
    }
    out.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::HoOutcome;

    #[test]
    fn tick_rows_have_header_and_flags() {
        let rows = [TickRow {
            tick: 3,
            ue_id: 1,
            serving: 4,
            rsrp_serving: -80.5,
            throughput_mbps: 12.0,
            ho_flag: true,
            pp_flag: false,
        }];
        let mut buf = Vec::new();
        write_tick_rows(&mut buf, &rows).unwrap();
        let s = String::from_utf8(buf).unwrap();
        assert_eq!(
            s,
            "tick,ue_id,serving,rsrp_serving,throughput,ho_flag,pp_flag\n3,1,4,-80.5,12,1,0\n"
        );
    }

    #[test]
    fn events_round_trip() {
        let events = vec![HoEvent {
            tick: 5,
            ue_id: 2,
            from_cell: 0,
            to_cell: 1,
            outcome: HoOutcome::Failure,
            pingpong: false,
        }];
        let mut buf = Vec::new();
        write_events(&mut buf, &events).unwrap();
        let back: Vec<HoEvent> = csv::Reader::from_reader(buf.as_slice())
            .deserialize()
            .collect::<std::result::Result<_, _>>()
            .unwrap();
        assert_eq!(back, events);
    }
}
