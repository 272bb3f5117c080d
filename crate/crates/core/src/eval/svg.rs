//! Minimal hand-written SVG figures.

use std::collections::BTreeMap;
use std::fmt::Write;

use super::curves::{CurveSet, Phase};
use super::dist::DistributionReport;
use super::probe::ProbeReport;
use crate::grid::Cell;

const CELL: f64 = 40.0;
const MARGIN: f64 = 30.0;

fn header(w: f64, h: f64) -> String {
    format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w}\" height=\"{h}\" viewBox=\"0 0 {w} {h}\" font-family=\"sans-serif\" font-size=\"11\">\n"
    )
}

/// Top-left corner of a cell, with `y = n−1` drawn at the top.
fn corner(c: Cell, n: i32) -> (f64, f64) {
    (MARGIN + f64::from(c.x) * CELL, MARGIN + f64::from(n - 1 - c.y) * CELL)
}

fn shade(v: f64) -> String {
    let v = v.clamp(0.0, 1.0);
    let g = (255.0 * (1.0 - v)).round() as u8;
    format!("rgb(255,{g},{g})")
}

fn grid_cells(svg: &mut String, n: i32, value: impl Fn(Cell) -> f64) {
    for c in Cell::all(n) {
        let (x, y) = corner(c, n);
        let _ = writeln!(
            svg,
            "<rect x=\"{x}\" y=\"{y}\" width=\"{CELL}\" height=\"{CELL}\" fill=\"{}\" stroke=\"#888\"/>",
            shade(value(c))
        );
    }
}

/// Error geography of a fidelity probe: cells shaded by error count, one arrow per
/// wrong prediction from the source cell to the predicted cell.
pub fn probe_heatmap(report: &ProbeReport) -> String {
    let n = report.n;
    let side = 2.0 * MARGIN + f64::from(n) * CELL;
    let mut svg = header(side, side);
    svg.push_str("<defs><marker id=\"a\" markerWidth=\"6\" markerHeight=\"6\" refX=\"5\" refY=\"3\" orient=\"auto\"><path d=\"M0,0 L6,3 L0,6 z\" fill=\"#036\"/></marker></defs>\n");
    let per_cell = report.errors_per_cell();
    grid_cells(&mut svg, n, |c| f64::from(per_cell[c.index(n)]) / 4.0);
    for e in &report.errors {
        let Some(p) = e.predicted else { continue };
        let (x0, y0) = corner(e.from, n);
        let (x1, y1) = corner(p, n);
        let h = CELL / 2.0;
        if p == e.from {
            let _ = writeln!(svg, "<circle cx=\"{}\" cy=\"{}\" r=\"4\" fill=\"none\" stroke=\"#036\"/>", x0 + h, y0 + h);
        } else {
            let _ = writeln!(
                svg,
                "<line x1=\"{}\" y1=\"{}\" x2=\"{}\" y2=\"{}\" stroke=\"#036\" marker-end=\"url(#a)\"/>",
                x0 + h,
                y0 + h,
                x1 + h,
                y1 + h
            );
        }
    }
    let _ = writeln!(
        svg,
        "<text x=\"{MARGIN}\" y=\"18\">{} n={} accuracy {:.1}%</text>\n</svg>",
        report.template,
        n,
        100.0 * report.accuracy
    );
    svg
}

/// Density heatmap of a location audit; shading is relative to the densest cell.
pub fn density_heatmap(report: &DistributionReport) -> Option<String> {
    let rows = report.density_rows()?;
    let n = rows.len() as i32;
    let max = rows.iter().flatten().cloned().fold(0.0, f64::max).max(1e-12);
    let side = 2.0 * MARGIN + f64::from(n) * CELL;
    let mut svg = header(side, side);
    grid_cells(&mut svg, n, |c| rows[(n - 1 - c.y) as usize][c.x as usize] / max);
    let _ = writeln!(
        svg,
        "<text x=\"{MARGIN}\" y=\"18\">chi2 {:.2} (crit {:.2}) {}</text>\n</svg>",
        report.chi_square,
        report.critical,
        if report.pass { "pass" } else { "fail" }
    );
    Some(svg)
}

fn phase_colour(p: Phase) -> &'static str {
    match p {
        Phase::Pretrain => "#999",
        Phase::Finetune => "#c33",
        Phase::Scratch => "#36c",
    }
}

/// Seed-averaged success against environment steps for each phase, plus horizontal
/// dashed lines for reference success rates (e.g. foundation-agent benchmarks).
pub fn learning_curves(set: &CurveSet, bars: &[(String, f64)]) -> String {
    let (w, h) = (520.0, 320.0);
    let (pw, ph) = (w - 2.0 * MARGIN - 100.0, h - 2.0 * MARGIN);
    let max_step = set
        .phases
        .iter()
        .flat_map(|(_, c)| c.points.iter().map(|p| p.step))
        .max()
        .unwrap_or(1)
        .max(1) as f64;
    let sx = |s: f64| MARGIN + pw * s / max_step;
    let sy = |v: f64| MARGIN + ph * (1.0 - v);
    let mut svg = header(w, h);
    let _ = writeln!(
        svg,
        "<rect x=\"{MARGIN}\" y=\"{MARGIN}\" width=\"{pw}\" height=\"{ph}\" fill=\"none\" stroke=\"#000\"/>"
    );
    let _ = writeln!(svg, "<text x=\"{MARGIN}\" y=\"{}\">0</text>", h - 10.0);
    let _ = writeln!(svg, "<text x=\"{}\" y=\"{}\" text-anchor=\"end\">{max_step}</text>", MARGIN + pw, h - 10.0);
    let mut legend_y = MARGIN;
    for (phase, curve) in &set.phases {
        let mut by_step: BTreeMap<u64, (f64, u32)> = BTreeMap::new();
        for p in &curve.points {
            let e = by_step.entry(p.step).or_default();
            e.0 += p.success;
            e.1 += 1;
        }
        let pts: Vec<String> = by_step
            .iter()
            .map(|(s, (sum, k))| format!("{:.1},{:.1}", sx(*s as f64), sy(sum / f64::from(*k))))
            .collect();
        let colour = phase_colour(*phase);
        let _ = writeln!(svg, "<polyline fill=\"none\" stroke=\"{colour}\" points=\"{}\"/>", pts.join(" "));
        let _ = writeln!(svg, "<text x=\"{}\" y=\"{legend_y}\" fill=\"{colour}\">{phase}</text>", MARGIN + pw + 8.0);
        legend_y += 14.0;
    }
    for (label, rate) in bars {
        let y = sy(*rate);
        let _ = writeln!(
            svg,
            "<line x1=\"{MARGIN}\" y1=\"{y:.1}\" x2=\"{:.1}\" y2=\"{y:.1}\" stroke=\"#393\" stroke-dasharray=\"4 3\"/>",
            MARGIN + pw
        );
        let _ = writeln!(svg, "<text x=\"{}\" y=\"{:.1}\" fill=\"#393\">{label}</text>", MARGIN + pw + 8.0, y + 4.0);
    }
    svg.push_str("</svg>\n");
    svg
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eval::dist::{test_location_distribution, Support};
    use crate::pg::{CurvePoint, LearningCurve};

    #[test]
    fn corner_flips_rows() {
        assert_eq!(corner(Cell::new(0, 0), 5), (MARGIN, MARGIN + 4.0 * CELL));
        assert_eq!(corner(Cell::new(4, 4), 5), (MARGIN + 4.0 * CELL, MARGIN));
    }

    #[test]
    fn figures_are_well_formed() {
        let r = test_location_distribution(|| Ok(Cell::new(1, 1)), 3, Support::AllCells, 5, 0.01).unwrap();
        let svg = density_heatmap(&r).unwrap();
        assert!(svg.starts_with("<svg") && svg.trim_end().ends_with("</svg>"));
        assert_eq!(svg.matches("<rect").count(), 9);

        let set = CurveSet {
            phases: vec![(
                Phase::Scratch,
                LearningCurve { points: vec![CurvePoint { seed: 0, step: 0, success: 0.0, mean_return: 0.0 }] },
            )],
            failures: vec![],
        };
        let svg = learning_curves(&set, &[("FA sweep".into(), 1.0)]);
        assert!(svg.contains("polyline") && svg.contains("FA sweep"));
    }
}
