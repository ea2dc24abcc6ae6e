//! Hand-written SVG heatmaps over the (Re z1, Im z1) plane.

use std::fmt::Write;

use crate::geometry::Grid;

const CELL: f64 = 24.0;
const PAD: f64 = 40.0;

/// Colour `k` of the fixed 256-step ramp, dark blue through yellow.
pub fn ramp(k: u8) -> (u8, u8, u8) {
    let t = k as f64 / 255.0;
    let r = (255.0 * t.powf(0.8)).round();
    let g = (255.0 * (0.15 + 0.8 * t)).min(255.0).round();
    let b = (255.0 * (0.55 * (1.0 - t) + 0.1)).round();
    (r as u8, g as u8, b as u8)
}

/// Projects values onto the first coordinate plane, keeping the maximum
/// over the remaining coordinates. Returns `cells[ix][iy]`.
pub fn project(grid: &Grid, values: &[f64]) -> Vec<Vec<Option<f64>>> {
    let nx = grid.axes.first().map_or(0, Vec::len);
    let ny = grid.axes.get(1).map_or(0, Vec::len);
    let mut cells = vec![vec![None; ny]; nx];
    for (cell, &v) in grid.cells.iter().zip(values) {
        let slot: &mut Option<f64> = &mut cells[cell[0]][cell[1]];
        *slot = Some(match *slot {
            None => v,
            Some(old) if old.is_nan() || v.is_nan() => f64::NAN,
            Some(old) => old.max(v),
        });
    }
    cells
}

/// Heatmap of `values` (one per grid point) with flagged points outlined.
/// Non-finite cells are drawn gray.
pub fn heatmap(grid: &Grid, values: &[f64], flagged: &[usize], title: &str) -> String {
    let cells = project(grid, values);
    let nx = cells.len();
    let ny = cells.first().map_or(0, Vec::len);
    let finite: Vec<f64> = cells
        .iter()
        .flatten()
        .flatten()
        .copied()
        .filter(|v| v.is_finite())
        .collect();
    let lo = finite.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = finite.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let width = 2.0 * PAD + CELL * nx as f64;
    let height = 2.0 * PAD + CELL * ny as f64;
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" viewBox="0 0 {width} {height}">"#
    );
    let _ = writeln!(s, r#"<title>{}</title>"#, escape(title));
    let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);
    for (ix, col) in cells.iter().enumerate() {
        for (iy, v) in col.iter().enumerate() {
            let Some(v) = v else { continue };
            let fill = if v.is_finite() {
                let t = if hi > lo { (v - lo) / (hi - lo) } else { 0.5 };
                let (r, g, b) = ramp((t * 255.0).round().clamp(0.0, 255.0) as u8);
                format!("#{r:02x}{g:02x}{b:02x}")
            } else {
                "#808080".to_string()
            };
            let (x, y) = origin(ix, iy, ny);
            let _ = writeln!(
                s,
                r#"<rect x="{x}" y="{y}" width="{CELL}" height="{CELL}" fill="{fill}"/>"#
            );
        }
    }
    let mut marked = vec![vec![false; ny]; nx];
    for &i in flagged {
        let c = &grid.cells[i];
        marked[c[0]][c[1]] = true;
    }
    for (ix, col) in marked.iter().enumerate() {
        for (iy, &m) in col.iter().enumerate() {
            if m {
                let (x, y) = origin(ix, iy, ny);
                let _ = writeln!(
                    s,
                    r#"<rect x="{}" y="{}" width="{}" height="{}" fill="none" stroke="red" stroke-width="2"/>"#,
                    x + 2.0,
                    y + 2.0,
                    CELL - 4.0,
                    CELL - 4.0
                );
            }
        }
    }
    if let (Some(xa), Some(ya)) = (grid.axes.first(), grid.axes.get(1)) {
        if let (Some(x0), Some(x1), Some(y0), Some(y1)) = (xa.first(), xa.last(), ya.first(), ya.last()) {
            let _ = writeln!(
                s,
                r#"<text x="{PAD}" y="{}" font-size="12">Re z1 in [{x0}, {x1}], Im z1 in [{y0}, {y1}]; range [{}, {}]</text>"#,
                height - 12.0,
                fmt_num(lo),
                fmt_num(hi)
            );
        }
    }
    s.push_str("</svg>\n");
    s
}

fn origin(ix: usize, iy: usize, ny: usize) -> (f64, f64) {
    (PAD + CELL * ix as f64, PAD + CELL * (ny - 1 - iy) as f64)
}

fn fmt_num(v: f64) -> String {
    if v.is_finite() {
        format!("{v:.3e}")
    } else {
        "n/a".into()
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Domain;

    #[test]
    fn ramp_endpoints_differ() {
        assert_ne!(ramp(0), ramp(255));
        let distinct: std::collections::BTreeSet<_> = (0..=255u8).map(ramp).collect();
        assert!(distinct.len() > 200);
    }

    #[test]
    fn heatmap_draws_each_projected_cell() {
        let grid = Domain::unit_polydisc(2, 1.0).sample_grid(5, 0.2).unwrap();
        let mut values: Vec<f64> = grid.points.iter().map(|p| p[0].norm()).collect();
        values[0] = f64::INFINITY;
        let svg = heatmap(&grid, &values, &[1, 2], "t<1>");
        let cells = project(&grid, &values).iter().flatten().filter(|c| c.is_some()).count();
        assert_eq!(svg.matches("<rect ").count(), 1 + cells + 2 - overlap(&grid, &[1, 2]));
        assert!(svg.contains("#808080"));
        assert!(svg.contains("t&lt;1&gt;"));
    }

    fn overlap(grid: &Grid, flagged: &[usize]) -> usize {
        let set: std::collections::BTreeSet<_> =
            flagged.iter().map(|&i| (grid.cells[i][0], grid.cells[i][1])).collect();
        flagged.len() - set.len()
    }
}
