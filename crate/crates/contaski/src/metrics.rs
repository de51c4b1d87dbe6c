//! The five run metrics (NC, NAT, CPT, CIT, LAT) and their aggregation
//! across replications with Student-t confidence intervals.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::engine::RunResult;
use crate::model::TaskId;
use crate::trace::{TraceBody, TraceEvent};

/// Per-dispatch view: clusters apt (accepted) and inapt (registered but
/// silent), and the dispatch-to-last-accept latency.
#[derive(Clone, PartialEq, Debug, Serialize, Deserialize)]
pub struct DispatchMetrics {
    pub task_id: TaskId,
    pub cpt: usize,
    pub cit: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lat_ms: Option<f64>,
}

#[derive(Clone, PartialEq, Debug, Serialize, Deserialize)]
pub struct MetricsRecord {
    /// Number of clusters: distinct leaders registered at the AP.
    pub nc: usize,
    /// Number of allocated tasks: dispatches with at least one accept.
    pub nat: usize,
    pub total_dispatched: usize,
    pub per_dispatch: Vec<DispatchMetrics>,
    /// Mean LAT over allocated tasks only.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mean_lat_ms: Option<f64>,
}

fn mean_lat(per_dispatch: &[DispatchMetrics]) -> Option<f64> {
    let lats: Vec<f64> = per_dispatch.iter().filter_map(|d| d.lat_ms).collect();
    if lats.is_empty() {
        None
    } else {
        Some(lats.iter().sum::<f64>() / lats.len() as f64)
    }
}

/// Metrics extracted from the AP ledger of a finished run.
pub fn compute_run_metrics(result: &RunResult) -> MetricsRecord {
    let mut per_dispatch = Vec::new();
    // Ledger entries in schedule order.
    for entry in &result.ap.task_list {
        let Some(record) = result.ap.dispatch_log.get(&entry.task.id) else {
            continue;
        };
        let cpt = record.accepts.len();
        per_dispatch.push(DispatchMetrics {
            task_id: record.task_id,
            cpt,
            cit: record.leaders_at_dispatch.len() - cpt,
            lat_ms: record.lat.map(|d| d.as_millis_f64()),
        });
    }
    let nat = per_dispatch.iter().filter(|d| d.cpt >= 1).count();
    MetricsRecord {
        nc: result.ap.leaders.len(),
        nat,
        total_dispatched: per_dispatch.len(),
        mean_lat_ms: mean_lat(&per_dispatch),
        per_dispatch,
    }
}

/// Metrics extracted from the trace alone; an independent path used to
/// cross-check `compute_run_metrics`.
pub fn metrics_from_trace(trace: &[TraceEvent]) -> MetricsRecord {
    use std::collections::{BTreeMap, BTreeSet};
    let mut leaders = BTreeSet::new();
    let mut order: Vec<TaskId> = Vec::new();
    let mut leaders_at_dispatch: BTreeMap<TaskId, usize> = BTreeMap::new();
    let mut accepts: BTreeMap<TaskId, usize> = BTreeMap::new();
    let mut lat: BTreeMap<TaskId, f64> = BTreeMap::new();

    for ev in trace {
        match &ev.body {
            TraceBody::LeaderRegister { leader } => {
                leaders.insert(*leader);
            }
            TraceBody::TaskDispatch { task, leaders } => {
                order.push(task.id);
                leaders_at_dispatch.insert(task.id, leaders.len());
            }
            TraceBody::TaskAccept {
                task_id,
                counted: true,
                ..
            } => {
                *accepts.entry(*task_id).or_insert(0) += 1;
            }
            TraceBody::WindowClose {
                task_id,
                lat_ms: Some(ms),
                ..
            } => {
                lat.insert(*task_id, *ms);
            }
            _ => {}
        }
    }

    let per_dispatch: Vec<DispatchMetrics> = order
        .iter()
        .map(|task_id| {
            let cpt = accepts.get(task_id).copied().unwrap_or(0);
            DispatchMetrics {
                task_id: *task_id,
                cpt,
                cit: leaders_at_dispatch[task_id] - cpt,
                lat_ms: lat.get(task_id).copied(),
            }
        })
        .collect();
    let nat = per_dispatch.iter().filter(|d| d.cpt >= 1).count();
    MetricsRecord {
        nc: leaders.len(),
        nat,
        total_dispatched: per_dispatch.len(),
        mean_lat_ms: mean_lat(&per_dispatch),
        per_dispatch,
    }
}

/// Sample mean, sample standard deviation and a confidence-interval
/// half-width from the Student-t quantile at n-1 degrees of freedom.
#[derive(Clone, PartialEq, Debug, Serialize, Deserialize)]
pub struct MetricSummary {
    pub metric: String,
    pub n: usize,
    pub mean: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stddev: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ci_half_width: Option<f64>,
}

pub fn summarize_samples(metric: &str, samples: &[f64], confidence: f64) -> Option<MetricSummary> {
    if samples.is_empty() {
        return None;
    }
    let n = samples.len();
    let mean = samples.iter().sum::<f64>() / n as f64;
    if n < 2 {
        return Some(MetricSummary {
            metric: metric.to_string(),
            n,
            mean,
            stddev: None,
            ci_half_width: None,
        });
    }
    let var = samples.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n as f64 - 1.0);
    let sd = var.sqrt();
    let t = StudentsT::new(0.0, 1.0, n as f64 - 1.0)
        .expect("valid t distribution")
        .inverse_cdf(0.5 + confidence / 2.0);
    Some(MetricSummary {
        metric: metric.to_string(),
        n,
        mean,
        stddev: Some(sd),
        ci_half_width: Some(t * sd / (n as f64).sqrt()),
    })
}

#[derive(Clone, PartialEq, Debug, Serialize, Deserialize)]
pub struct ReplicationSummary {
    pub replications: usize,
    pub confidence: f64,
    pub metrics: Vec<MetricSummary>,
}

/// Aggregates per-run records: NC, NAT, mean CPT/CIT per dispatch, and LAT
/// averaged over allocated tasks. LAT-less runs contribute no LAT sample.
pub fn aggregate_replications(records: &[MetricsRecord], confidence: f64) -> ReplicationSummary {
    let nc: Vec<f64> = records.iter().map(|r| r.nc as f64).collect();
    let nat: Vec<f64> = records.iter().map(|r| r.nat as f64).collect();
    let cpt: Vec<f64> = records
        .iter()
        .filter(|r| !r.per_dispatch.is_empty())
        .map(|r| {
            r.per_dispatch.iter().map(|d| d.cpt as f64).sum::<f64>()
                / r.per_dispatch.len() as f64
        })
        .collect();
    let cit: Vec<f64> = records
        .iter()
        .filter(|r| !r.per_dispatch.is_empty())
        .map(|r| {
            r.per_dispatch.iter().map(|d| d.cit as f64).sum::<f64>()
                / r.per_dispatch.len() as f64
        })
        .collect();
    let lat: Vec<f64> = records.iter().filter_map(|r| r.mean_lat_ms).collect();

    let mut metrics = Vec::new();
    for (name, samples) in [
        ("nc", &nc),
        ("nat", &nat),
        ("cpt_mean", &cpt),
        ("cit_mean", &cit),
        ("lat_ms_mean", &lat),
    ] {
        if let Some(summary) = summarize_samples(name, samples, confidence) {
            metrics.push(summary);
        }
    }
    ReplicationSummary {
        replications: records.len(),
        confidence,
        metrics,
    }
}

/// Writes the per-dispatch CSV rows for one or more replications with the
/// fixed header `rep, nc, nat, task_id, cpt, cit, lat_ms`.
pub fn write_metrics_csv<W: std::io::Write>(
    writer: W,
    records: &[MetricsRecord],
) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["rep", "nc", "nat", "task_id", "cpt", "cit", "lat_ms"])?;
    for (rep, record) in records.iter().enumerate() {
        for d in &record.per_dispatch {
            w.write_record(&[
                rep.to_string(),
                record.nc.to_string(),
                record.nat.to_string(),
                d.task_id.to_string(),
                d.cpt.to_string(),
                d.cit.to_string(),
                d.lat_ms.map(|v| v.to_string()).unwrap_or_default(),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}
