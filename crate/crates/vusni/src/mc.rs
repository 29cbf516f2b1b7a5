//! Parallel Monte Carlo runs and their CSV outputs.
//!
//! Every replication draws from its own stream derived from the master seed
//! and its index, so the report does not depend on the number of threads.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use vusni_core::simulation::{run_replication, McConfig, McReport, ScenarioSpec};

use crate::{Error, Result};

pub const SUMMARY_FILE: &str = "summary.csv";
pub const PARAMS_FILE: &str = "params.csv";
pub const REPLICATIONS_FILE: &str = "replications.csv";

/// Runs all replications on `jobs` threads (0 picks the number of cores).
///
/// Failed replications are kept in the report; call
/// [`McReport::check_failures`] to decide whether the run is usable.
pub fn run_parallel(spec: &ScenarioSpec, cfg: &McConfig, jobs: usize) -> Result<McReport> {
    if cfg.reps == 0 {
        return Err(vusni_core::Error::InsufficientData("at least one replication is required".into()).into());
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| Error::Format { source_name: "thread pool".into(), message: e.to_string() })?;
    let records = pool.install(|| (0..cfg.reps).into_par_iter().map(|i| run_replication(spec, cfg, i)).collect());
    Ok(McReport::from_records(spec, cfg, records))
}

fn csv_err(e: csv::Error) -> Error {
    Error::Format { source_name: "csv output".into(), message: e.to_string() }
}

fn opt(x: Option<f64>) -> String {
    x.map(|v| v.to_string()).unwrap_or_default()
}

/// One row per method: `method, n, MCmean, Bias%, MCsd, Esd, CP`.
pub fn write_summary<W: Write>(report: &McReport, w: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(w);
    w.write_record(["method", "n", "MCmean", "Bias%", "MCsd", "Esd", "CP"]).map_err(csv_err)?;
    for s in &report.summaries {
        w.write_record([
            s.method.name().to_string(),
            report.n.to_string(),
            s.mc_mean.to_string(),
            s.bias_pct.to_string(),
            s.mc_sd.to_string(),
            s.esd.to_string(),
            s.coverage_pct.to_string(),
        ])
        .map_err(csv_err)?;
    }
    w.flush().map_err(|e| Error::io("csv output", e))
}

/// One row per model coordinate: `parameter, n, true, MCmean, MCsd`.
pub fn write_params<W: Write>(report: &McReport, w: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(w);
    w.write_record(["parameter", "n", "true", "MCmean", "MCsd"]).map_err(csv_err)?;
    for p in &report.params {
        w.write_record([p.name.clone(), report.n.to_string(), p.true_value.to_string(), p.mean.to_string(), p.sd.to_string()])
            .map_err(csv_err)?;
    }
    w.flush().map_err(|e| Error::io("csv output", e))
}

/// One row per replication: status, `ξ̂`, each method's estimate, standard
/// error and coverage, and the ignorability test when it was run.
pub fn write_replications<W: Write>(report: &McReport, coordinate_names: &[String], w: W) -> Result<()> {
    let methods: Vec<_> = report.summaries.iter().map(|s| s.method).collect();
    let mut w = csv::Writer::from_writer(w);
    let mut header: Vec<String> = vec!["rep".into(), "error".into()];
    header.extend(coordinate_names.iter().cloned());
    for m in &methods {
        header.extend([format!("{m}_mu"), format!("{m}_se"), format!("{m}_covered")]);
    }
    header.extend(["lrt_stat".into(), "lrt_p_value".into()]);
    w.write_record(&header).map_err(csv_err)?;
    for r in &report.records {
        let mut row = vec![r.index.to_string(), r.error.clone().unwrap_or_default()];
        match &r.xi_hat {
            Some(xi) => row.extend(xi.iter().map(f64::to_string)),
            None => row.extend(coordinate_names.iter().map(|_| String::new())),
        }
        for m in &methods {
            let e = r.estimates.iter().find(|e| e.method == *m);
            row.push(opt(e.map(|e| e.mu_hat)));
            row.push(opt(e.map(|e| e.se)));
            row.push(e.map(|e| (e.covered as u8).to_string()).unwrap_or_default());
        }
        row.push(opt(r.lrt.map(|l| l.stat)));
        row.push(opt(r.lrt.map(|l| l.p_value)));
        w.write_record(&row).map_err(csv_err)?;
    }
    w.flush().map_err(|e| Error::io("csv output", e))
}

/// Writes the three CSV files into `dir`, creating it if needed, and returns
/// their paths.
pub fn write_outputs(report: &McReport, spec: &ScenarioSpec, dir: &Path) -> Result<[PathBuf; 3]> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let create = |name: &str| {
        let path = dir.join(name);
        File::create(&path).map(BufWriter::new).map(|f| (path.clone(), f)).map_err(|e| Error::io(path, e))
    };
    let (summary, f) = create(SUMMARY_FILE)?;
    write_summary(report, f)?;
    let (params, f) = create(PARAMS_FILE)?;
    write_params(report, f)?;
    let (reps, f) = create(REPLICATIONS_FILE)?;
    write_replications(report, &spec.xi_true.coordinate_names(), f)?;
    Ok([summary, params, reps])
}

/// Plain-text rendering of the summary table.
pub fn format_summary(report: &McReport) -> String {
    let mut out = format!(
        "{} n={} reps={} seed={} true VUS={} failures={}\n{:<14}{:>9}{:>9}{:>9}{:>9}{:>8}\n",
        report.scenario, report.n, report.reps, report.seed, report.mu_true, report.failures, "method", "MCmean", "Bias%", "MCsd", "Esd", "CP"
    );
    for s in &report.summaries {
        out.push_str(&format!(
            "{:<14}{:>9.4}{:>9.2}{:>9.4}{:>9.4}{:>8.1}\n",
            s.method.name(),
            s.mc_mean,
            s.bias_pct,
            s.mc_sd,
            s.esd,
            s.coverage_pct
        ));
    }
    if let Some(l) = &report.lrt {
        out.push_str(&format!("LRT: mean statistic {:.3}, rejection rate {:.3} ({} fits)\n", l.mean_stat, l.rejection_rate, l.count));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use vusni_core::simulation::{builtin_scenario, run_mc, Scenario};

    #[test]
    fn thread_count_does_not_change_the_report() {
        let spec = builtin_scenario(Scenario::II);
        let cfg = McConfig::new(250, 6, 31);
        let one = run_parallel(&spec, &cfg, 1).unwrap();
        let four = run_parallel(&spec, &cfg, 4).unwrap();
        assert_eq!(one, four);
        assert_eq!(one, run_mc(&spec, &cfg).unwrap());
    }

    #[test]
    fn csv_outputs_have_one_row_per_item() {
        let spec = builtin_scenario(Scenario::II);
        let report = run_parallel(&spec, &McConfig::new(250, 3, 2), 2).unwrap();
        let mut buf = Vec::new();
        write_summary(&report, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("method,n,MCmean,Bias%,MCsd,Esd,CP\n"));
        assert_eq!(text.lines().count(), 1 + report.summaries.len());
        let mut buf = Vec::new();
        write_params(&report, &mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap().lines().count(), 1 + spec.xi_true.dim());
        let mut buf = Vec::new();
        write_replications(&report, &spec.xi_true.coordinate_names(), &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), 4);
        let width = text.lines().next().unwrap().split(',').count();
        assert!(text.lines().all(|l| l.split(',').count() == width));
    }
}
