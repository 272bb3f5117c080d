//! Goodness-of-fit audits for location and binary samplers.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF};

use super::EvalError;
use crate::backend::{query, ModelBackend, SAMPLING_TEMPERATURE};
use crate::grid::Cell;
use crate::prompt::{parse_location, Binding, TemplateId, TemplateSet};

pub const DEFAULT_ALPHA: f64 = 0.01;
pub const DEFAULT_SAMPLES: usize = 1000;

/// Cells a uniform location sampler is expected to cover.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Support {
    AllCells,
    /// Every cell except the start `[0, 0]`, as drawn by the grid itself.
    ExcludeStart,
}

impl Support {
    pub fn contains(&self, cell: Cell, n: i32) -> bool {
        cell.in_bounds(n) && !(*self == Support::ExcludeStart && cell == Cell::new(0, 0))
    }

    pub fn size(&self, n: i32) -> usize {
        let all = (n * n) as usize;
        match self {
            Support::AllCells => all,
            Support::ExcludeStart => all - 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Audit {
    Location { n: i32, support: Support },
    Binary { p1: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistributionReport {
    pub audit: Audit,
    /// Location audits: row-major n×n counts. Binary audits: `[count of 1, count of 0]`.
    pub counts: Vec<u64>,
    /// Draws that fell outside the grid.
    pub rejected: u64,
    pub sample_size: u64,
    pub chi_square: f64,
    pub dof: u32,
    pub critical: f64,
    pub p_value: f64,
    pub alpha: f64,
    pub pass: bool,
}

impl DistributionReport {
    /// Location audits: counts as `n` rows, top row (`y = n−1`) first, for heatmaps.
    pub fn density_rows(&self) -> Option<Vec<Vec<f64>>> {
        let Audit::Location { n, .. } = self.audit else { return None };
        let total = self.sample_size.max(1) as f64;
        Some(
            (0..n)
                .rev()
                .map(|y| (0..n).map(|x| self.counts[Cell::new(x, y).index(n)] as f64 / total).collect())
                .collect(),
        )
    }

    /// Binary audits: observed frequency of outcome 1.
    pub fn frequency_one(&self) -> Option<f64> {
        match self.audit {
            Audit::Binary { .. } => Some(self.counts[0] as f64 / self.sample_size.max(1) as f64),
            Audit::Location { .. } => None,
        }
    }
}

/// Location sampler backed by a model at τ = 1.8. Unparsable answers are retried up to
/// `max_retries` times; parsed but off-grid answers are returned as drawn so the audit
/// can count them.
pub fn model_location_sampler<'a>(
    backend: &'a dyn ModelBackend,
    templates: &TemplateSet,
    n: i32,
    max_retries: u32,
) -> Result<impl FnMut() -> Result<Cell, EvalError> + 'a, EvalError> {
    let prompt = templates
        .render(TemplateId::RewardSample, &Binding::new().n(n))
        .map_err(|e| EvalError::Config(e.to_string()))?;
    Ok(move || {
        let mut last = String::new();
        for _ in 0..=max_retries {
            let text = query(backend, prompt.clone(), SAMPLING_TEMPERATURE).map_err(crate::WorldError::from)?.text;
            if let Ok(cell) = parse_location(&text) {
                return Ok(cell);
            }
            last = text;
        }
        Err(crate::backend::SamplingError::Exhausted { attempts: max_retries + 1, last }.into())
    })
}

/// Pearson statistic Σ (O − E)² / E. Bins with zero expectation must be empty.
pub fn chi_square(observed: &[u64], expected: &[f64]) -> f64 {
    observed
        .iter()
        .zip(expected)
        .map(|(&o, &e)| {
            let d = o as f64 - e;
            if e > 0.0 {
                d * d / e
            } else if o == 0 {
                0.0
            } else {
                f64::INFINITY
            }
        })
        .sum()
}

fn verdict(stat: f64, dof: u32, alpha: f64) -> Result<(f64, f64), EvalError> {
    let dist = ChiSquared::new(f64::from(dof)).map_err(|e| EvalError::Config(e.to_string()))?;
    let critical = dist.inverse_cdf(1.0 - alpha);
    let p_value = if stat.is_finite() { 1.0 - dist.cdf(stat) } else { 0.0 };
    Ok((critical, p_value))
}

fn check_alpha(alpha: f64) -> Result<(), EvalError> {
    if alpha > 0.0 && alpha < 1.0 {
        Ok(())
    } else {
        Err(EvalError::Config(format!("alpha must lie in (0, 1), got {alpha}")))
    }
}

/// Draws `samples` cells and tests them against the uniform distribution on `support`.
/// Off-grid draws go to the reject bin, and in-grid draws outside the support count as
/// observations in a zero-expectation bin; either makes the test fail.
pub fn test_location_distribution<F>(
    mut sampler: F,
    n: i32,
    support: Support,
    samples: usize,
    alpha: f64,
) -> Result<DistributionReport, EvalError>
where
    F: FnMut() -> Result<Cell, EvalError>,
{
    check_alpha(alpha)?;
    if samples == 0 {
        return Err(EvalError::Config("sample size must be positive".into()));
    }
    let mut counts = vec![0u64; (n * n) as usize];
    let mut rejected = 0;
    for _ in 0..samples {
        let c = sampler()?;
        if c.in_bounds(n) {
            counts[c.index(n)] += 1;
        } else {
            rejected += 1;
        }
    }
    let k = support.size(n);
    let expect = samples as f64 / k as f64;
    let expected: Vec<f64> = Cell::all(n)
        .map(|c| if support.contains(c, n) { expect } else { 0.0 })
        .collect();
    let mut stat = chi_square(&counts, &expected);
    if rejected > 0 {
        stat = f64::INFINITY;
    }
    let dof = (k - 1) as u32;
    let (critical, p_value) = verdict(stat, dof, alpha)?;
    Ok(DistributionReport {
        audit: Audit::Location { n, support },
        counts,
        rejected,
        sample_size: samples as u64,
        chi_square: stat,
        dof,
        critical,
        p_value,
        alpha,
        pass: stat <= critical,
    })
}

/// Draws `samples` elements of `{1, 0}` and tests them against `(p1, 1 − p1)`.
pub fn test_binary_distribution<F>(mut sampler: F, p1: f64, samples: usize, alpha: f64) -> Result<DistributionReport, EvalError>
where
    F: FnMut() -> Result<u8, EvalError>,
{
    check_alpha(alpha)?;
    if !(p1 > 0.0 && p1 < 1.0) || samples == 0 {
        return Err(EvalError::Config(format!("need p1 in (0, 1) and samples > 0, got {p1}, {samples}")));
    }
    let mut counts = [0u64; 2];
    for _ in 0..samples {
        match sampler()? {
            1 => counts[0] += 1,
            _ => counts[1] += 1,
        }
    }
    let total = samples as f64;
    let stat = chi_square(&counts, &[p1 * total, (1.0 - p1) * total]);
    let (critical, p_value) = verdict(stat, 1, alpha)?;
    Ok(DistributionReport {
        audit: Audit::Binary { p1 },
        counts: counts.to_vec(),
        rejected: 0,
        sample_size: samples as u64,
        chi_square: stat,
        dof: 1,
        critical,
        p_value,
        alpha,
        pass: stat <= critical,
    })
}

/// Requested probabilities of the binary sweep.
pub const BINARY_SWEEP: [f64; 4] = [0.6, 0.7, 0.8, 0.9];

/// One row of the binary sweep table: requested vs. observed percentages.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BinaryRow {
    pub source: String,
    pub p1: f64,
    pub observed_one_pct: f64,
    pub observed_zero_pct: f64,
}

impl BinaryRow {
    pub fn from_report(source: impl Into<String>, report: &DistributionReport) -> Option<Self> {
        let Audit::Binary { p1 } = report.audit else { return None };
        let f = report.frequency_one()?;
        Some(BinaryRow {
            source: source.into(),
            p1,
            observed_one_pct: 100.0 * f,
            observed_zero_pct: 100.0 * (1.0 - f),
        })
    }

    /// Signed gap between observed and requested probability of 1, in percentage points.
    pub fn discrepancy(&self) -> f64 {
        self.observed_one_pct - 100.0 * self.p1
    }
}

/// Published observations for two hosted models, kept for side-by-side report tables.
pub fn reference_rows() -> Vec<BinaryRow> {
    let published: [(&str, [(f64, f64); 4]); 2] = [
        ("gpt-3.5-turbo (published)", [(85.0, 15.0), (91.0, 9.0), (97.0, 3.0), (98.0, 2.0)]),
        ("gpt-4 (published)", [(75.0, 25.0), (86.0, 14.0), (92.0, 8.0), (97.0, 3.0)]),
    ];
    published
        .iter()
        .flat_map(|(source, rows)| {
            BINARY_SWEEP.iter().zip(rows).map(move |(&p1, &(one, zero))| BinaryRow {
                source: source.to_string(),
                p1,
                observed_one_pct: one,
                observed_zero_pct: zero,
            })
        })
        .collect()
}

pub fn write_binary_csv<W: std::io::Write>(rows: &[BinaryRow], mut out: W) -> std::io::Result<()> {
    writeln!(out, "source,p1,p2,observed_1_pct,observed_0_pct,discrepancy_pct")?;
    for r in rows {
        writeln!(
            out,
            "{},{:.1},{:.1},{:.1},{:.1},{:.1}",
            r.source,
            r.p1,
            1.0 - r.p1,
            r.observed_one_pct,
            r.observed_zero_pct,
            r.discrepancy()
        )?;
    }
    Ok(())
}

pub fn write_distribution_csv<W: std::io::Write>(reports: &[DistributionReport], mut out: W) -> std::io::Result<()> {
    writeln!(out, "audit,support_or_p1,sample_size,rejected,chi_square,dof,critical,p_value,pass")?;
    for r in reports {
        let (kind, param) = match &r.audit {
            Audit::Location { support, .. } => ("location", format!("{support:?}")),
            Audit::Binary { p1 } => ("binary", format!("{p1}")),
        };
        writeln!(
            out,
            "{kind},{param},{},{},{:.6},{},{:.6},{:.6},{}",
            r.sample_size, r.rejected, r.chi_square, r.dof, r.critical, r.p_value, r.pass
        )?;
    }
    Ok(())
}
