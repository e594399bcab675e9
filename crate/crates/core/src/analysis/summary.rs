//! Condition-level summaries of the trial metrics.

use std::fmt::{self, Write as _};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::metrics::{trial_metrics, TrialMetrics};
use super::stats::{describe, mean, permutation_test, Describe};
use super::AnalysisError;
use crate::feedback::Condition;
use crate::session::{Outcome, TrialRecord};
use crate::stream_rng;

pub const DEFAULT_SHUFFLES: usize = 10_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Factor {
    Layout,
    Approach,
    Metaphor,
    Intensity,
}

impl Factor {
    pub const ALL: [Factor; 4] = [Factor::Layout, Factor::Approach, Factor::Metaphor, Factor::Intensity];

    pub fn as_str(self) -> &'static str {
        match self {
            Factor::Layout => "layout",
            Factor::Approach => "approach",
            Factor::Metaphor => "metaphor",
            Factor::Intensity => "intensity",
        }
    }

    pub fn levels(self) -> [&'static str; 2] {
        match self {
            Factor::Layout => ["horizontal", "vertical"],
            Factor::Approach => ["two_tactor", "worst_axis"],
            Factor::Metaphor => ["pull", "push"],
            Factor::Intensity => ["linear", "zone"],
        }
    }

    pub fn level_of(self, c: &Condition) -> &'static str {
        match self {
            Factor::Layout => c.layout.as_str(),
            Factor::Approach => c.approach.as_str(),
            Factor::Metaphor => c.metaphor.as_str(),
            Factor::Intensity => c.intensity_mode.as_str(),
        }
    }
}

impl FromStr for Factor {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "layout" => Ok(Factor::Layout),
            "approach" => Ok(Factor::Approach),
            "metaphor" => Ok(Factor::Metaphor),
            "intensity" | "intensity_mode" => Ok(Factor::Intensity),
            other => Err(format!("unknown factor `{other}`")),
        }
    }
}

impl fmt::Display for Factor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    CompletionTime,
    PathLength,
    PctInCritical,
}

impl Metric {
    pub const ALL: [Metric; 3] = [Metric::CompletionTime, Metric::PathLength, Metric::PctInCritical];

    pub fn as_str(self) -> &'static str {
        match self {
            Metric::CompletionTime => "completion_time",
            Metric::PathLength => "path_length",
            Metric::PctInCritical => "pct_in_critical",
        }
    }

    fn value(self, row: &TrialRow) -> Option<f64> {
        // Aborted trials contribute nothing; timeouts have no completion time.
        if row.outcome == Outcome::Aborted {
            return None;
        }
        match self {
            Metric::CompletionTime => row.metrics.completion_time,
            Metric::PathLength => row.metrics.path_length,
            Metric::PctInCritical => row.metrics.pct_in_critical,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRow {
    pub participant: u32,
    pub index: u32,
    pub condition: Condition,
    pub outcome: Outcome,
    pub metrics: TrialMetrics,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupSummary {
    pub levels: Vec<(Factor, String)>,
    pub count: usize,
    pub completion_time: Option<Describe>,
    pub path_length: Option<Describe>,
    pub pct_in_critical: Option<Describe>,
}

impl GroupSummary {
    pub fn get(&self, metric: Metric) -> Option<&Describe> {
        match metric {
            Metric::CompletionTime => self.completion_time.as_ref(),
            Metric::PathLength => self.path_length.as_ref(),
            Metric::PctInCritical => self.pct_in_critical.as_ref(),
        }
    }

    pub fn label(&self) -> String {
        if self.levels.is_empty() {
            return "all".to_string();
        }
        self.levels.iter().map(|(_, l)| l.as_str()).collect::<Vec<_>>().join("/")
    }
}

/// Marginal difference between the two levels of one factor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FactorDifference {
    pub factor: Factor,
    pub metric: Metric,
    pub level_a: String,
    pub level_b: String,
    pub n_a: usize,
    pub n_b: usize,
    pub mean_a: f64,
    pub mean_b: f64,
    /// `mean_b - mean_a`.
    pub difference: f64,
    /// Permutation p-value (label shuffles); not a mixed-model test.
    pub p_value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub group_by: Vec<Factor>,
    pub trials: Vec<TrialRow>,
    pub groups: Vec<GroupSummary>,
    pub differences: Vec<FactorDifference>,
    /// Groups in the design with no records.
    pub empty_groups: Vec<String>,
    pub excluded_samples: usize,
    pub timeouts: usize,
    pub aborted: usize,
}

pub fn trial_rows(records: &[TrialRecord], critical_radius: f64) -> Vec<TrialRow> {
    records
        .iter()
        .map(|r| TrialRow {
            participant: r.plan.participant,
            index: r.plan.index,
            condition: r.plan.condition,
            outcome: r.outcome,
            metrics: trial_metrics(r, critical_radius),
        })
        .collect()
}

/// Groups trials by the chosen factors and compares factor levels.
pub fn summarize(
    records: &[TrialRecord],
    group_by: &[Factor],
    critical_radius: f64,
    shuffles: usize,
    seed: u64,
) -> Result<MetricsReport, AnalysisError> {
    let rows = trial_rows(records, critical_radius);
    summarize_rows(rows, group_by, shuffles, seed)
}

pub fn summarize_rows(
    rows: Vec<TrialRow>,
    group_by: &[Factor],
    shuffles: usize,
    seed: u64,
) -> Result<MetricsReport, AnalysisError> {
    let mut group_by: Vec<Factor> = group_by.to_vec();
    group_by.sort();
    group_by.dedup();
    if !rows.iter().any(|r| Metric::ALL.iter().any(|m| m.value(r).is_some())) {
        return Err(AnalysisError::NoUsableRecords);
    }

    let collect = |members: &[&TrialRow], metric: Metric| -> Vec<f64> {
        members.iter().filter_map(|r| metric.value(r)).collect()
    };

    let mut groups = Vec::new();
    let mut empty_groups = Vec::new();
    for combo in 0..(1usize << group_by.len()) {
        let levels: Vec<(Factor, String)> = group_by
            .iter()
            .enumerate()
            .map(|(i, f)| (*f, f.levels()[(combo >> (group_by.len() - 1 - i)) & 1].to_string()))
            .collect();
        let members: Vec<&TrialRow> =
            rows.iter().filter(|r| levels.iter().all(|(f, l)| f.level_of(&r.condition) == l)).collect();
        let group = GroupSummary {
            count: members.len(),
            completion_time: describe(&collect(&members, Metric::CompletionTime)),
            path_length: describe(&collect(&members, Metric::PathLength)),
            pct_in_critical: describe(&collect(&members, Metric::PctInCritical)),
            levels,
        };
        if group.count == 0 {
            empty_groups.push(group.label());
        }
        groups.push(group);
    }

    let mut differences = Vec::new();
    for (fi, factor) in group_by.iter().enumerate() {
        let [la, lb] = factor.levels();
        let side = |level: &str| -> Vec<&TrialRow> {
            rows.iter().filter(|r| factor.level_of(&r.condition) == level).collect()
        };
        let (a_rows, b_rows) = (side(la), side(lb));
        for (mi, metric) in Metric::ALL.into_iter().enumerate() {
            let (a, b) = (collect(&a_rows, metric), collect(&b_rows, metric));
            let (Some(mean_a), Some(mean_b)) = (mean(&a), mean(&b)) else {
                continue;
            };
            let mut rng = stream_rng(seed, (fi * Metric::ALL.len() + mi) as u64);
            let p_value = permutation_test(&a, &b, shuffles, &mut rng).expect("both sides non-empty");
            differences.push(FactorDifference {
                factor: *factor,
                metric,
                level_a: la.to_string(),
                level_b: lb.to_string(),
                n_a: a.len(),
                n_b: b.len(),
                mean_a,
                mean_b,
                difference: mean_b - mean_a,
                p_value,
            });
        }
    }

    Ok(MetricsReport {
        group_by,
        excluded_samples: rows.iter().map(|r| r.metrics.excluded_samples).sum(),
        timeouts: rows.iter().filter(|r| r.outcome == Outcome::Timeout).count(),
        aborted: rows.iter().filter(|r| r.outcome == Outcome::Aborted).count(),
        trials: rows,
        groups,
        differences,
        empty_groups,
    })
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.6}")).unwrap_or_default()
}

impl MetricsReport {
    pub fn group(&self, levels: &[(Factor, &str)]) -> Option<&GroupSummary> {
        self.groups.iter().find(|g| {
            g.levels.len() == levels.len()
                && levels.iter().all(|(f, l)| g.levels.iter().any(|(gf, gl)| gf == f && gl == l))
        })
    }

    pub fn difference(&self, factor: Factor, metric: Metric) -> Option<&FactorDifference> {
        self.differences.iter().find(|d| d.factor == factor && d.metric == metric)
    }

    /// One row per group and metric.
    pub fn groups_csv(&self) -> String {
        let mut out = String::from("group,count,metric,n,mean,sd,median\n");
        for g in &self.groups {
            for metric in Metric::ALL {
                let d = g.get(metric);
                let _ = writeln!(
                    out,
                    "{},{},{},{},{},{},{}",
                    g.label(),
                    g.count,
                    metric.as_str(),
                    d.map_or(0, |d| d.n),
                    opt(d.map(|d| d.mean)),
                    opt(d.map(|d| d.sd)),
                    opt(d.map(|d| d.median)),
                );
            }
        }
        out
    }

    pub fn differences_csv(&self) -> String {
        let mut out = String::from("factor,metric,level_a,level_b,n_a,n_b,mean_a,mean_b,difference,p_value\n");
        for d in &self.differences {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{:.6},{:.6},{:.6},{:.6}",
                d.factor,
                d.metric.as_str(),
                d.level_a,
                d.level_b,
                d.n_a,
                d.n_b,
                d.mean_a,
                d.mean_b,
                d.difference,
                d.p_value
            );
        }
        out
    }

    pub fn trials_csv(&self) -> String {
        let mut out = String::from(
            "participant,index,layout,approach,metaphor,intensity,outcome,completion_time,path_length,pct_in_critical,excluded_samples\n",
        );
        for r in &self.trials {
            let c = r.condition;
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{},{},{},{},{}",
                r.participant,
                r.index,
                c.layout,
                c.approach,
                c.metaphor,
                c.intensity_mode,
                r.outcome.as_str(),
                opt(r.metrics.completion_time),
                opt(r.metrics.path_length),
                opt(r.metrics.pct_in_critical),
                r.metrics.excluded_samples,
            );
        }
        out
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report always serializes")
    }
}
