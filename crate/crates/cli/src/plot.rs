use std::path::Path;

use anyhow::{anyhow, Result};
use plotters::prelude::*;

use crate::output::{write_atomic, EstimatesTable};

const SIZE: (u32, u32) = (800, 500);

fn bounds(values: impl Iterator<Item = f64>) -> (f64, f64) {
    let (lo, hi) = values.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)));
    let pad = ((hi - lo) * 0.05).max(1e-9);
    (lo - pad, hi + pad)
}

fn render<F>(path: &Path, draw: F) -> Result<()>
where
    F: FnOnce(DrawingArea<SVGBackend, plotters::coord::Shift>) -> Result<(), Box<dyn std::error::Error + '_>>,
{
    let mut svg = String::new();
    {
        let root = SVGBackend::with_string(&mut svg, SIZE).into_drawing_area();
        draw(root).map_err(|e| anyhow!("plotting failed: {e}"))?;
    }
    write_atomic(path, svg.as_bytes())
}

/// Estimate curves with horizontal ground-truth lines.
pub fn estimates_plot(path: &Path, table: &EstimatesTable, truth: &[f64], title: &str) -> Result<()> {
    let (t0, t1) = (table.t[0], *table.t.last().expect("non-empty"));
    let (y0, y1) = bounds(table.theta.iter().flatten().copied().chain(truth.iter().copied()));
    render(path, |root| {
        root.fill(&WHITE)?;
        let mut chart = ChartBuilder::on(&root)
            .caption(title, ("sans-serif", 20))
            .margin(10)
            .x_label_area_size(35)
            .y_label_area_size(50)
            .build_cartesian_2d(t0..t1.max(t0 + 1.0), y0..y1)?;
        chart.configure_mesh().x_desc("t").y_desc("estimate").draw()?;
        for (i, series) in table.theta.iter().enumerate() {
            let color = Palette99::pick(i).to_rgba();
            chart
                .draw_series(LineSeries::new(table.t.iter().copied().zip(series.iter().copied()), color.stroke_width(2)))?
                .label(format!("theta_{}", i + 1))
                .legend(move |(x, y)| PathElement::new(vec![(x, y), (x + 20, y)], color));
            if let Some(&g) = truth.get(i) {
                chart.draw_series(LineSeries::new([(t0, g), (t1, g)], color.mix(0.5)))?;
            }
        }
        chart.configure_series_labels().background_style(WHITE.mix(0.8)).border_style(BLACK).draw()?;
        root.present()?;
        Ok(())
    })
}

/// Per-step time for each filter.
pub fn timing_plot(path: &Path, rows: &[(String, f64, f64)], title: &str) -> Result<()> {
    let mut names: Vec<&str> = rows.iter().map(|r| r.0.as_str()).collect();
    names.dedup();
    names.sort_unstable();
    names.dedup();
    let (t0, t1) = bounds(rows.iter().map(|r| r.1));
    let y1 = rows.iter().map(|r| r.2).fold(0.0, f64::max) * 1.1 + 1e-9;
    render(path, |root| {
        root.fill(&WHITE)?;
        let mut chart = ChartBuilder::on(&root)
            .caption(title, ("sans-serif", 20))
            .margin(10)
            .x_label_area_size(35)
            .y_label_area_size(60)
            .build_cartesian_2d(t0..t1, 0.0..y1)?;
        chart.configure_mesh().x_desc("t").y_desc("step time [s]").draw()?;
        for (i, name) in names.iter().enumerate() {
            let color = Palette99::pick(i).to_rgba();
            let pts: Vec<(f64, f64)> = rows.iter().filter(|r| r.0 == *name).map(|r| (r.1, r.2)).collect();
            chart
                .draw_series(LineSeries::new(pts, color.stroke_width(2)))?
                .label(name.to_uppercase())
                .legend(move |(x, y)| PathElement::new(vec![(x, y), (x + 20, y)], color));
        }
        chart.configure_series_labels().background_style(WHITE.mix(0.8)).border_style(BLACK).draw()?;
        root.present()?;
        Ok(())
    })
}
