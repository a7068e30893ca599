use std::fs::File;
use std::io::BufWriter;
use std::str::FromStr;

use lightpath::eval::sweep::{run_sweep, write_plot_data, write_sweep_csv, Experiment, SweepConfig, SweepRow};
use lightpath::Error;
use serde::Serialize;

use crate::args::SweepArgs;
use crate::config::{out_dir, RunConfig};

/// One metric of one grid cell, for the per-metric tables.
#[derive(Debug, Serialize)]
struct MetricRow {
    sigma: f64,
    value: f64,
    rms_median: f64,
    rms_mean: f64,
    mean: f64,
    median: f64,
}

fn write_metric(rows: &[SweepRow], path: &std::path::Path, pick: impl Fn(&SweepRow) -> [f64; 4]) -> anyhow::Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for r in rows {
        let [rms_median, rms_mean, mean, median] = pick(r);
        w.serialize(MetricRow { sigma: r.sigma, value: r.value(), rms_median, rms_mean, mean, median })?;
    }
    w.flush()?;
    Ok(())
}

pub fn run(a: SweepArgs, cfg: &RunConfig) -> anyhow::Result<()> {
    let name = a
        .experiment
        .clone()
        .or_else(|| cfg.experiment.clone())
        .ok_or_else(|| Error::Config("no experiment given (--experiment)".into()))?;
    let experiment = Experiment::from_str(&name)?;
    let mut config = SweepConfig::new(experiment);
    if let Some(t) = a.trials.or(cfg.trials) {
        config.trials = t;
    }
    if let Some(s) = a.sigmas.clone().or_else(|| cfg.sigmas.clone()) {
        config.sigmas = s;
    }
    if let Some(v) = a.values.clone().or_else(|| cfg.values.clone()) {
        config.values = v;
    }
    if let Some(r) = a.res.or(cfg.res) {
        config.resolution = r;
    }
    config.seed = a.seed.or(cfg.seed).unwrap_or(0);
    config.max_gap = a.max_gap.or(cfg.max_gap);
    let out = out_dir(&a.out, cfg)?;

    let rows = run_sweep(&config)?;
    let stem = experiment.name();
    write_sweep_csv(&rows, BufWriter::new(File::create(out.join(format!("{stem}.csv")))?))?;
    write_metric(&rows, &out.join(format!("{stem}_position.csv")), |r| {
        [r.pos_rms_median, r.pos_rms_mean, r.pos_mean, r.pos_median]
    })?;
    write_metric(&rows, &out.join(format!("{stem}_normal.csv")), |r| {
        [r.nrm_rms_median, r.nrm_rms_mean, r.nrm_mean, r.nrm_median]
    })?;
    write_plot_data(&rows, BufWriter::new(File::create(out.join(format!("{stem}.dat")))?))?;
    log::info!("event=sweep experiment={stem} cells={}", rows.len());
    Ok(())
}
