//! Coverage maps from mission traces, as ASCII grids or SVG documents.
//!
//! ASCII glyphs, highest precedence first: `O` origin, `R` where the robot
//! ended (if not the origin), `K` key point, `x` replan cell, `*` traversed
//! cell, `#` static obstacle, `.` free cell.
//!
//! SVG follows the same convention as the original coverage plots: black
//! dots for free cells and blue dots for static obstacles, with the
//! traversed path drawn as a polyline over them.

use std::fmt::Write as _;

use crate::map::{Cell, GridMap};
use crate::scenario::Scenario;
use crate::trace::{MissionTrace, TraceError};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RenderStyle {
    Ascii,
    Svg,
}

/// Checks that a trace could have been produced on this scenario's map.
pub fn check_consistency(trace: &MissionTrace, scenario: &Scenario) -> Result<(), TraceError> {
    let map = &scenario.map;
    let h = &trace.header;
    let bad = |m: String| Err(TraceError::Inconsistent(m));
    if (h.rows, h.cols) != (map.rows(), map.cols()) {
        return bad(format!(
            "trace map is {}x{}, scenario map is {}x{}",
            h.rows,
            h.cols,
            map.rows(),
            map.cols()
        ));
    }
    if h.keypoints != scenario.keypoints.all() {
        return bad("key points differ from the scenario".into());
    }
    for (i, r) in trace.records.iter().enumerate() {
        if !map.in_bounds(r.cell) {
            return bad(format!("tick {} is outside the map at {}", r.tick, r.cell));
        }
        if !map.is_free(r.cell) {
            return bad(format!("tick {} sits on static obstacle {}", r.tick, r.cell));
        }
        if i > 0 {
            let prev = trace.records[i - 1].cell;
            if prev != r.cell && prev.manhattan(r.cell) != 1 {
                return bad(format!("tick {} jumps from {} to {}", r.tick, prev, r.cell));
            }
        }
    }
    Ok(())
}

pub fn render_trace(trace: &MissionTrace, scenario: &Scenario, style: RenderStyle) -> Result<String, TraceError> {
    check_consistency(trace, scenario)?;
    Ok(match style {
        RenderStyle::Ascii => ascii(trace, scenario),
        RenderStyle::Svg => svg(trace, scenario),
    })
}

fn end_cell(trace: &MissionTrace) -> Option<Cell> {
    trace.records.last().map(|r| r.cell)
}

fn ascii(trace: &MissionTrace, scenario: &Scenario) -> String {
    let map = &scenario.map;
    let mut grid: Vec<Vec<char>> = (0..map.rows())
        .map(|r| {
            (0..map.cols())
                .map(|c| if map.is_free(Cell::new(r, c)) { '.' } else { '#' })
                .collect()
        })
        .collect();
    let mut put = |c: Cell, ch: char| grid[c.row][c.col] = ch;
    for c in trace.visited() {
        put(c, '*');
    }
    for c in trace.replan_cells() {
        put(c, 'x');
    }
    for &c in scenario.keypoints.others() {
        put(c, 'K');
    }
    if let Some(end) = end_cell(trace) {
        put(end, 'R');
    }
    put(scenario.keypoints.origin(), 'O');
    let mut out = String::new();
    for row in grid {
        out.extend(row);
        out.push('\n');
    }
    out
}

const PX: usize = 24;

fn center(c: Cell) -> (usize, usize) {
    (c.col * PX + PX / 2, c.row * PX + PX / 2)
}

fn svg(trace: &MissionTrace, scenario: &Scenario) -> String {
    let map: &GridMap = &scenario.map;
    let width = map.cols() * PX;
    let grid_h = map.rows() * PX;
    let height = grid_h + 5 * PX / 2;
    let mut o = String::new();
    let _ = writeln!(
        o,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" viewBox="0 0 {width} {height}">"#
    );
    let _ = writeln!(o, r#"<rect width="{width}" height="{height}" fill="white"/>"#);
    let _ = writeln!(o, r#"<g id="cells">"#);
    for c in map.iter_cells() {
        let (x, y) = center(c);
        if map.is_free(c) {
            let _ = writeln!(o, r#"<circle cx="{x}" cy="{y}" r="2" fill="black"/>"#);
        } else {
            let _ = writeln!(o, r#"<circle cx="{x}" cy="{y}" r="6" fill="blue"/>"#);
        }
    }
    let _ = writeln!(o, "</g>");

    let visited = trace.visited();
    if visited.len() > 1 {
        let pts: Vec<String> = visited
            .iter()
            .map(|&c| {
                let (x, y) = center(c);
                format!("{x},{y}")
            })
            .collect();
        let _ = writeln!(
            o,
            r#"<polyline id="path" points="{}" fill="none" stroke="red" stroke-width="2"/>"#,
            pts.join(" ")
        );
    }

    let _ = writeln!(o, r#"<g id="keypoints">"#);
    let half = PX / 3;
    for (i, c) in scenario.keypoints.all().into_iter().enumerate() {
        let (x, y) = center(c);
        let fill = if i == 0 { "green" } else { "orange" };
        let _ = writeln!(
            o,
            r#"<rect x="{}" y="{}" width="{}" height="{}" fill="{fill}" fill-opacity="0.7" data-cell="{},{}"/>"#,
            x - half,
            y - half,
            2 * half,
            2 * half,
            c.row,
            c.col
        );
    }
    let _ = writeln!(o, "</g>");

    let replans = trace.replan_cells();
    if !replans.is_empty() {
        let _ = writeln!(o, r#"<g id="replans" stroke="purple" stroke-width="2">"#);
        for c in replans {
            let (x, y) = center(c);
            let d = PX / 4;
            let _ = writeln!(o, r#"<line x1="{}" y1="{}" x2="{}" y2="{}"/>"#, x - d, y - d, x + d, y + d);
            let _ = writeln!(o, r#"<line x1="{}" y1="{}" x2="{}" y2="{}"/>"#, x - d, y + d, x + d, y - d);
        }
        let _ = writeln!(o, "</g>");
    }
    if let Some(end) = end_cell(trace) {
        let (x, y) = center(end);
        let _ = writeln!(
            o,
            r#"<circle id="robot" cx="{x}" cy="{y}" r="{}" fill="none" stroke="black" stroke-width="2"/>"#,
            PX / 2 - 2
        );
    }

    let legend = [
        ("black", "free"),
        ("blue", "obstacle"),
        ("red", "path"),
        ("green", "origin"),
        ("orange", "key point"),
        ("purple", "replan"),
    ];
    let _ = writeln!(o, r#"<g id="legend" font-family="monospace" font-size="10">"#);
    let ly = grid_h + PX / 2;
    for (i, (color, label)) in legend.iter().enumerate() {
        let col = i % 3;
        let row = i / 3;
        let x = 4 + col * (width.max(3 * 60) / 3);
        let y = ly + row * PX;
        let _ = writeln!(o, r#"<circle cx="{}" cy="{}" r="4" fill="{color}"/>"#, x + 4, y);
        let _ = writeln!(o, r#"<text x="{}" y="{}">{label}</text>"#, x + 12, y + 4);
    }
    let _ = writeln!(o, "</g>");
    o.push_str("</svg>\n");
    o
}
