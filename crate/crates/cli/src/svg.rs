//! Frequency and tracking-error plots of a trajectory.

use std::path::Path;

use anyhow::{anyhow, Result};
use plotters::prelude::*;

use mrcie_core::sim::Trajectory;

const COLORS: [RGBColor; 4] = [BLUE, RED, GREEN, MAGENTA];

/// Top panel: `dw_d` and `dw_ref` [Hz] per group. Bottom: `e`.
pub fn plot_trajectory(tr: &Trajectory, path: &Path, title: &str) -> Result<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir)?;
    }
    let root = SVGBackend::new(path, (900, 640)).into_drawing_area();
    root.fill(&WHITE).map_err(|e| anyhow!("{e}"))?;
    let (top, bottom) = root.split_vertically(400);
    let groups = tr.groups();
    let t0 = tr.time[0];
    let t1 = *tr.time.last().unwrap_or(&t0);

    let mut top_series = Vec::new();
    for (k, g) in groups.iter().enumerate() {
        for (col, style) in [("dw_d", 0), ("dw_ref", 1)] {
            if let Some(y) = tr.column(&format!("{g}.{col}")) {
                top_series.push((format!("{g} {col}"), y, COLORS[k % COLORS.len()], style));
            }
        }
    }
    panel(&top, &tr.time, (t0, t1), title, "deviation [Hz]", &top_series)?;

    let mut bottom_series = Vec::new();
    for (k, g) in groups.iter().enumerate() {
        if let Some(y) = tr.column(&format!("{g}.e")) {
            bottom_series.push((format!("{g} e"), y, COLORS[k % COLORS.len()], 0));
        }
    }
    panel(&bottom, &tr.time, (t0, t1), "", "e [Hz]", &bottom_series)?;
    root.present().map_err(|e| anyhow!("{e}"))?;
    Ok(())
}

type Series<'a> = (String, &'a [f64], RGBColor, u8);

fn panel(area: &DrawingArea<SVGBackend, plotters::coord::Shift>, t: &[f64], x: (f64, f64), title: &str, ylabel: &str, series: &[Series]) -> Result<()> {
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for (_, y, _, _) in series {
        for &v in *y {
            lo = lo.min(v);
            hi = hi.max(v);
        }
    }
    if !lo.is_finite() {
        (lo, hi) = (-1.0, 1.0);
    }
    let pad = ((hi - lo) * 0.05).max(1e-6);
    let mut chart = ChartBuilder::on(area)
        .caption(title, ("sans-serif", 18))
        .margin(10)
        .x_label_area_size(30)
        .y_label_area_size(60)
        .build_cartesian_2d(x.0..x.1, (lo - pad)..(hi + pad))
        .map_err(|e| anyhow!("{e}"))?;
    chart
        .configure_mesh()
        .x_desc("time [s]")
        .y_desc(ylabel)
        .draw()
        .map_err(|e| anyhow!("{e}"))?;
    // Every 5th sample is plenty at 1 kHz.
    for (name, y, color, style) in series {
        let pts = t.iter().zip(y.iter()).step_by(5).map(|(&a, &b)| (a, b));
        let stroke = if *style == 0 { color.stroke_width(2) } else { color.mix(0.6).stroke_width(1) };
        chart
            .draw_series(LineSeries::new(pts, stroke))
            .map_err(|e| anyhow!("{e}"))?
            .label(name.clone())
            .legend(move |(x, y)| PathElement::new(vec![(x, y), (x + 16, y)], stroke));
    }
    if !series.is_empty() {
        chart
            .configure_series_labels()
            .background_style(WHITE.mix(0.8))
            .border_style(BLACK)
            .draw()
            .map_err(|e| anyhow!("{e}"))?;
    }
    Ok(())
}
