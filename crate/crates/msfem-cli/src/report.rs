//! Artifact writers: history CSV, basis-count map CSV, and the SVG
//! convergence plot.
//!
//! Floats are written with Rust's shortest round-trip formatting, so parsing
//! a written file and formatting it again reproduces the bytes exactly.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use msfem::adapt::EnrichmentHistory;
use msfem::{Error, Result};

pub fn write_text(path: &Path, contents: &str) -> Result<()> {
    fs::write(path, contents).map_err(|source| Error::Io {
        path: path.display().to_string(),
        source,
    })
}

/// One row per recorded level, including the initial one.
pub fn history_csv(history: &EnrichmentHistory) -> String {
    let mut out = String::from("iter,dofs,erp,eru,sum_eta2,wall_ms\n");
    for r in &history.records {
        writeln!(
            out,
            "{},{},{},{},{},{}",
            r.iter, r.dofs, r.erp, r.eru, r.sum_eta2, r.wall_ms
        )
        .expect("string write");
    }
    out
}

/// Basis counts per coarse element as `ny` rows of `nx` integers, top row
/// first.
pub fn basis_map_csv(nx: usize, ny: usize, levels: &[usize]) -> String {
    debug_assert_eq!(levels.len(), nx * ny);
    let mut out = String::new();
    for ey in (0..ny).rev() {
        for ex in 0..nx {
            if ex > 0 {
                out.push(',');
            }
            write!(out, "{}", levels[ey * nx + ex]).expect("string write");
        }
        out.push('\n');
    }
    out
}

/// One plotted run: label shown in the legend, points as (dofs, eru).
pub struct Series {
    pub label: String,
    pub points: Vec<(f64, f64)>,
}

const PALETTE: [&str; 6] = [
    "#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b",
];

const WIDTH: f64 = 720.0;
const HEIGHT: f64 = 480.0;
const LEFT: f64 = 84.0;
const RIGHT: f64 = 24.0;
const TOP: f64 = 24.0;
const BOTTOM: f64 = 56.0;

/// Velocity error against coarse dofs, one polyline per series, logarithmic
/// y axis. Returns `None` when no series has a positive point to plot.
pub fn convergence_svg(series: &[Series]) -> Option<String> {
    let visible: Vec<(&str, Vec<(f64, f64)>)> = series
        .iter()
        .map(|s| {
            (
                s.label.as_str(),
                s.points
                    .iter()
                    .copied()
                    .filter(|&(_, e)| e > 0.0 && e.is_finite())
                    .collect::<Vec<_>>(),
            )
        })
        .filter(|(_, pts)| !pts.is_empty())
        .collect();
    if visible.is_empty() {
        return None;
    }

    let mut xmin = f64::MAX;
    let mut xmax = f64::MIN;
    let mut emin = f64::MAX;
    let mut emax = f64::MIN;
    for (_, pts) in &visible {
        for &(x, e) in pts {
            xmin = xmin.min(x);
            xmax = xmax.max(x);
            emin = emin.min(e);
            emax = emax.max(e);
        }
    }
    if xmax <= xmin {
        xmax = xmin + 1.0;
    }
    let dec_lo = emin.log10().floor();
    let dec_hi = (emax.log10().ceil()).max(dec_lo + 1.0);

    let px = |x: f64| LEFT + (x - xmin) / (xmax - xmin) * (WIDTH - LEFT - RIGHT);
    let py = |e: f64| {
        let t = (e.log10() - dec_lo) / (dec_hi - dec_lo);
        HEIGHT - BOTTOM - t * (HEIGHT - TOP - BOTTOM)
    };

    let mut svg = String::new();
    writeln!(
        svg,
        "<svg xmlns=\"http://www.w3.org/2000/svg\" viewBox=\"0 0 {WIDTH} {HEIGHT}\" \
         font-family=\"sans-serif\" font-size=\"13\">"
    )
    .expect("string write");
    writeln!(
        svg,
        "<rect x=\"0\" y=\"0\" width=\"{WIDTH}\" height=\"{HEIGHT}\" fill=\"white\"/>"
    )
    .expect("string write");

    let decades = (dec_hi - dec_lo) as i64;
    let dec_step = (decades as usize).div_ceil(8).max(1) as i64;
    let mut d = dec_lo as i64;
    while d <= dec_hi as i64 {
        let y = py(10f64.powi(d as i32));
        writeln!(
            svg,
            "<line x1=\"{LEFT}\" y1=\"{y:.1}\" x2=\"{:.1}\" y2=\"{y:.1}\" \
             stroke=\"#dddddd\"/>",
            WIDTH - RIGHT
        )
        .expect("string write");
        writeln!(
            svg,
            "<text x=\"{:.1}\" y=\"{:.1}\" text-anchor=\"end\">1e{d}</text>",
            LEFT - 8.0,
            y + 4.0
        )
        .expect("string write");
        d += dec_step;
    }

    let n_xticks = 5;
    for k in 0..=n_xticks {
        let x = xmin + (xmax - xmin) * k as f64 / n_xticks as f64;
        let sx = px(x);
        writeln!(
            svg,
            "<line x1=\"{sx:.1}\" y1=\"{:.1}\" x2=\"{sx:.1}\" y2=\"{:.1}\" \
             stroke=\"#999999\"/>",
            HEIGHT - BOTTOM,
            HEIGHT - BOTTOM + 5.0
        )
        .expect("string write");
        writeln!(
            svg,
            "<text x=\"{sx:.1}\" y=\"{:.1}\" text-anchor=\"middle\">{}</text>",
            HEIGHT - BOTTOM + 20.0,
            x.round() as i64
        )
        .expect("string write");
    }

    writeln!(
        svg,
        "<rect x=\"{LEFT}\" y=\"{TOP}\" width=\"{:.1}\" height=\"{:.1}\" \
         fill=\"none\" stroke=\"#333333\"/>",
        WIDTH - LEFT - RIGHT,
        HEIGHT - TOP - BOTTOM
    )
    .expect("string write");
    writeln!(
        svg,
        "<text x=\"{:.1}\" y=\"{:.1}\" text-anchor=\"middle\">dofs</text>",
        LEFT + (WIDTH - LEFT - RIGHT) / 2.0,
        HEIGHT - 12.0
    )
    .expect("string write");
    writeln!(
        svg,
        "<text x=\"18\" y=\"{:.1}\" text-anchor=\"middle\" \
         transform=\"rotate(-90 18 {:.1})\">Eru</text>",
        TOP + (HEIGHT - TOP - BOTTOM) / 2.0,
        TOP + (HEIGHT - TOP - BOTTOM) / 2.0
    )
    .expect("string write");

    for (i, (_, pts)) in visible.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        let path: Vec<String> = pts
            .iter()
            .map(|&(x, e)| format!("{:.1},{:.1}", px(x), py(e)))
            .collect();
        writeln!(
            svg,
            "<polyline points=\"{}\" fill=\"none\" stroke=\"{color}\" stroke-width=\"1.8\"/>",
            path.join(" ")
        )
        .expect("string write");
        for &(x, e) in pts {
            writeln!(
                svg,
                "<circle cx=\"{:.1}\" cy=\"{:.1}\" r=\"2.6\" fill=\"{color}\"/>",
                px(x),
                py(e)
            )
            .expect("string write");
        }
    }

    for (i, (label, _)) in visible.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        let y = TOP + 16.0 + 18.0 * i as f64;
        let x = WIDTH - RIGHT - 190.0;
        writeln!(
            svg,
            "<line x1=\"{x:.1}\" y1=\"{:.1}\" x2=\"{:.1}\" y2=\"{:.1}\" \
             stroke=\"{color}\" stroke-width=\"1.8\"/>",
            y - 4.0,
            x + 24.0,
            y - 4.0
        )
        .expect("string write");
        writeln!(
            svg,
            "<text x=\"{:.1}\" y=\"{y:.1}\">{label}</text>",
            x + 32.0
        )
        .expect("string write");
    }

    svg.push_str("</svg>\n");
    Some(svg)
}

#[cfg(test)]
mod tests {
    use super::*;
    use msfem::adapt::{EnrichmentHistory, LevelRecord, StopReason};

    fn history() -> EnrichmentHistory {
        EnrichmentHistory {
            records: vec![
                LevelRecord {
                    iter: 0,
                    dofs: 48,
                    erp: 0.25,
                    eru: 0.5,
                    sum_eta2: 1.5e-3,
                    wall_ms: 12.5,
                    levels: vec![3; 16],
                },
                LevelRecord {
                    iter: 1,
                    dofs: 52,
                    erp: 0.125,
                    eru: 0.0625,
                    sum_eta2: 7.25e-5,
                    wall_ms: 8.25,
                    levels: vec![3; 16],
                },
            ],
            stop: StopReason::MaxIters,
        }
    }

    #[test]
    fn history_csv_has_header_and_one_row_per_level() {
        let text = history_csv(&history());
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "iter,dofs,erp,eru,sum_eta2,wall_ms");
        assert_eq!(lines.len(), 3);
        assert_eq!(lines[1], "0,48,0.25,0.5,0.0015,12.5");
        assert_eq!(lines[2], "1,52,0.125,0.0625,0.0000725,8.25");
    }

    #[test]
    fn history_csv_round_trips_through_parse_and_reformat() {
        let text = history_csv(&history());
        let mut rebuilt = String::from("iter,dofs,erp,eru,sum_eta2,wall_ms\n");
        for line in text.lines().skip(1) {
            let f: Vec<&str> = line.split(',').collect();
            let iter: usize = f[0].parse().unwrap();
            let dofs: usize = f[1].parse().unwrap();
            let nums: Vec<f64> = f[2..6].iter().map(|v| v.parse().unwrap()).collect();
            use std::fmt::Write as _;
            writeln!(
                rebuilt,
                "{iter},{dofs},{},{},{},{}",
                nums[0], nums[1], nums[2], nums[3]
            )
            .unwrap();
        }
        assert_eq!(rebuilt, text);
    }

    #[test]
    fn basis_map_lists_the_top_row_first() {
        let levels: Vec<usize> = (0..6).collect();
        let text = basis_map_csv(3, 2, &levels);
        assert_eq!(text, "3,4,5\n0,1,2\n");
    }

    #[test]
    fn plot_skips_empty_and_nonpositive_series() {
        assert!(convergence_svg(&[]).is_none());
        let dead = Series {
            label: "x".into(),
            points: vec![(10.0, 0.0)],
        };
        assert!(convergence_svg(&[dead]).is_none());
    }

    #[test]
    fn plot_draws_one_polyline_and_legend_entry_per_series() {
        let mk = |label: &str, scale: f64| Series {
            label: label.into(),
            points: (1..=4).map(|k| (100.0 * k as f64, scale / k as f64)).collect(),
        };
        let svg = convergence_svg(&[mk("online-adaptive", 0.5), mk("offline-uniform", 0.9)])
            .unwrap();
        assert_eq!(svg.matches("<polyline").count(), 2);
        assert!(svg.contains(">online-adaptive</text>"));
        assert!(svg.contains(">offline-uniform</text>"));
        assert!(svg.contains("1e-1"));
        assert!(!svg.contains("NaN"));
    }
}
