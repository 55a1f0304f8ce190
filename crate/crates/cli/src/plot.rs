//! SVG figures: the per-index gallery, the selected profile, the data fit
//! and a section image.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use fdem_core::Quantity;

use crate::error::Result;
use crate::report::write_file;
use crate::run::{Payload, RunKind};

const FONT: &str = "font-family=\"sans-serif\" font-size=\"11\"";
const LINE: &str = "#1f77b4";
const TRUTH: &str = "#7f7f7f";
const HIGHLIGHT: &str = "#d62728";

/// Tick label: plain for moderate magnitudes, exponent form otherwise.
fn tick(v: f64) -> String {
    let a = v.abs();
    if a != 0.0 && !(1e-3..1e4).contains(&a) {
        format!("{v:.2e}")
    } else {
        let s = format!("{v:.3}");
        let s = s.trim_end_matches('0').trim_end_matches('.');
        if s == "-0" { "0".into() } else { s.to_string() }
    }
}

fn range(values: impl Iterator<Item = f64>) -> (f64, f64) {
    let (lo, hi) = values
        .filter(|v| v.is_finite())
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)));
    if !lo.is_finite() {
        return (0.0, 1.0);
    }
    if hi - lo <= f64::EPSILON * hi.abs().max(1e-300) {
        let pad = if hi == 0.0 { 1.0 } else { 0.1 * hi.abs() };
        return (lo - pad, hi + pad);
    }
    let pad = 0.05 * (hi - lo);
    (lo - pad, hi + pad)
}

/// Plot area in pixels with its data window.
struct Frame {
    x: f64,
    y: f64,
    w: f64,
    h: f64,
    xr: (f64, f64),
    yr: (f64, f64),
    /// y grows downward in data units too (depth axes).
    flip: bool,
}

impl Frame {
    fn px(&self, v: f64) -> f64 {
        self.x + (v - self.xr.0) / (self.xr.1 - self.xr.0) * self.w
    }

    fn py(&self, v: f64) -> f64 {
        let t = (v - self.yr.0) / (self.yr.1 - self.yr.0);
        if self.flip {
            self.y + t * self.h
        } else {
            self.y + self.h - t * self.h
        }
    }

    fn axes(&self, out: &mut String, xlabel: &str, ylabel: &str) {
        let (x, y, w, h) = (self.x, self.y, self.w, self.h);
        let _ = writeln!(
            out,
            "<rect x=\"{x:.2}\" y=\"{y:.2}\" width=\"{w:.2}\" height=\"{h:.2}\" fill=\"none\" stroke=\"#000\"/>"
        );
        for k in 0..=4 {
            let vx = self.xr.0 + (self.xr.1 - self.xr.0) * k as f64 / 4.0;
            let vy = self.yr.0 + (self.yr.1 - self.yr.0) * k as f64 / 4.0;
            let (tx, ty) = (self.px(vx), self.py(vy));
            let _ = writeln!(
                out,
                "<text x=\"{tx:.2}\" y=\"{:.2}\" text-anchor=\"middle\" {FONT}>{}</text>",
                y + h + 14.0,
                tick(vx)
            );
            let _ = writeln!(
                out,
                "<text x=\"{:.2}\" y=\"{:.2}\" text-anchor=\"end\" {FONT}>{}</text>",
                x - 4.0,
                ty + 4.0,
                tick(vy)
            );
        }
        let _ = writeln!(
            out,
            "<text x=\"{:.2}\" y=\"{:.2}\" text-anchor=\"middle\" {FONT}>{xlabel}</text>",
            x + w / 2.0,
            y + h + 30.0
        );
        let _ = writeln!(
            out,
            "<text transform=\"translate({:.2},{:.2}) rotate(-90)\" text-anchor=\"middle\" {FONT}>{ylabel}</text>",
            x - 44.0,
            y + h / 2.0
        );
    }

    /// Piecewise-constant profile against depth.
    fn profile(&self, out: &mut String, tops: &[f64], bottoms: &[f64], values: &[f64], style: &str) {
        let mut d = String::new();
        for (k, v) in values.iter().enumerate() {
            let cmd = if k == 0 { 'M' } else { 'L' };
            let _ = write!(
                d,
                "{cmd}{:.2},{:.2} L{:.2},{:.2} ",
                self.px(*v),
                self.py(tops[k]),
                self.px(*v),
                self.py(bottoms[k])
            );
        }
        let _ = writeln!(out, "<path d=\"{}\" fill=\"none\" {style}/>", d.trim_end());
    }
}

fn svg(width: f64, height: f64, body: &str) -> String {
    format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{width:.0}\" height=\"{height:.0}\" viewBox=\"0 0 {width:.0} {height:.0}\">\n\
         <rect width=\"100%\" height=\"100%\" fill=\"#fff\"/>\n{body}</svg>\n"
    )
}

fn bottoms(p: &Payload) -> Vec<f64> {
    p.tops.iter().zip(&p.midpoints).map(|(t, m)| 2.0 * m - t).collect()
}

fn value_label(q: Quantity) -> &'static str {
    match q {
        Quantity::Sigma => "conductivity (S/m)",
        Quantity::Mu => "permeability (H/m)",
    }
}

/// One panel per truncation index of column `c`, selected one outlined.
pub fn gallery(p: &Payload, c: usize) -> Option<String> {
    let r = p.columns[c].result()?;
    let truth = p.truth.as_ref().map(|t| t[c].as_slice());
    let bottoms = bottoms(p);
    let xr = range(
        r.runs
            .iter()
            .flat_map(|run| run.profile.iter().copied())
            .chain(truth.into_iter().flatten().copied()),
    );
    let yr = (0.0, bottoms.last().copied().unwrap_or(1.0));
    let per_row = 4usize.min(r.runs.len());
    let rows = r.runs.len().div_ceil(per_row);
    let (pw, ph) = (230.0, 300.0);
    let mut body = String::new();
    for (k, run) in r.runs.iter().enumerate() {
        let (gx, gy) = ((k % per_row) as f64 * pw, (k / per_row) as f64 * ph);
        let f = Frame { x: gx + 62.0, y: gy + 30.0, w: pw - 80.0, h: ph - 80.0, xr, yr, flip: true };
        let selected = run.ell == r.selected_ell;
        let mut title = format!("ell = {}", run.ell);
        if let Some(t) = truth {
            title.push_str(&format!(", err {}", tick(crate::run::relative_error(&run.profile, t))));
        }
        let color = if selected { HIGHLIGHT } else { "#000" };
        let _ = writeln!(
            body,
            "<text x=\"{:.2}\" y=\"{:.2}\" text-anchor=\"middle\" fill=\"{color}\" {FONT}>{title}</text>",
            f.x + f.w / 2.0,
            gy + 18.0
        );
        f.axes(&mut body, value_label(p.unknown()), "depth (m)");
        if selected {
            let _ = writeln!(
                body,
                "<rect x=\"{:.2}\" y=\"{:.2}\" width=\"{:.2}\" height=\"{:.2}\" fill=\"none\" stroke=\"{HIGHLIGHT}\" stroke-width=\"2\"/>",
                f.x, f.y, f.w, f.h
            );
        }
        if let Some(t) = truth {
            f.profile(&mut body, &p.tops, &bottoms, t, &format!("stroke=\"{TRUTH}\" stroke-dasharray=\"4 3\""));
        }
        f.profile(&mut body, &p.tops, &bottoms, &run.profile, &format!("stroke=\"{LINE}\" stroke-width=\"1.5\""));
    }
    Some(svg(per_row as f64 * pw, rows as f64 * ph, &body))
}

/// The selected profile of column `c` against the truth.
pub fn selected(p: &Payload, c: usize) -> Option<String> {
    let r = p.columns[c].result()?;
    let truth = p.truth.as_ref().map(|t| t[c].as_slice());
    let bottoms = bottoms(p);
    let profile = &r.selected().profile;
    let xr = range(profile.iter().chain(truth.into_iter().flatten()).copied());
    let f = Frame {
        x: 70.0,
        y: 40.0,
        w: 300.0,
        h: 400.0,
        xr,
        yr: (0.0, bottoms.last().copied().unwrap_or(1.0)),
        flip: true,
    };
    let mut body = String::new();
    let _ = writeln!(
        body,
        "<text x=\"220\" y=\"22\" text-anchor=\"middle\" {FONT}>selected ell = {} ({})</text>",
        r.selected_ell, r.selection.applied
    );
    f.axes(&mut body, value_label(p.unknown()), "depth (m)");
    if let Some(t) = truth {
        f.profile(&mut body, &p.tops, &bottoms, t, &format!("stroke=\"{TRUTH}\" stroke-dasharray=\"4 3\""));
    }
    f.profile(&mut body, &p.tops, &bottoms, profile, &format!("stroke=\"{LINE}\" stroke-width=\"2\""));
    Some(svg(400.0, 500.0, &body))
}

/// Observed (markers) and predicted (line) stacked data of column `c`.
pub fn fit(p: &Payload, c: usize) -> Option<String> {
    let col = &p.columns[c];
    let predicted = col.selected_prediction()?;
    let n = col.observed.len();
    let f = Frame {
        x: 80.0,
        y: 30.0,
        w: 460.0,
        h: 280.0,
        xr: (-0.5, n as f64 - 0.5),
        yr: range(col.observed.iter().chain(predicted).copied()),
        flip: false,
    };
    let mut body = String::new();
    f.axes(&mut body, "data row", "stacked value");
    let pts: Vec<String> = predicted
        .iter()
        .enumerate()
        .map(|(k, v)| format!("{:.2},{:.2}", f.px(k as f64), f.py(*v)))
        .collect();
    let _ = writeln!(body, "<polyline points=\"{}\" fill=\"none\" stroke=\"{LINE}\"/>", pts.join(" "));
    for (k, v) in col.observed.iter().enumerate() {
        let _ = writeln!(
            body,
            "<circle cx=\"{:.2}\" cy=\"{:.2}\" r=\"3\" fill=\"none\" stroke=\"#000\"/>",
            f.px(k as f64),
            f.py(*v)
        );
    }
    Some(svg(580.0, 360.0, &body))
}

/// Linear interpolation through a perceptually ordered palette.
fn color(t: f64) -> String {
    const STOPS: [(f64, f64, f64); 5] = [
        (68.0, 1.0, 84.0),
        (59.0, 82.0, 139.0),
        (33.0, 145.0, 140.0),
        (94.0, 201.0, 98.0),
        (253.0, 231.0, 37.0),
    ];
    let t = if t.is_finite() { t.clamp(0.0, 1.0) } else { 0.0 } * (STOPS.len() - 1) as f64;
    let k = (t.floor() as usize).min(STOPS.len() - 2);
    let u = t - k as f64;
    let (a, b) = (STOPS[k], STOPS[k + 1]);
    let mix = |x: f64, y: f64| (x + (y - x) * u).round() as u8;
    format!("#{:02x}{:02x}{:02x}", mix(a.0, b.0), mix(a.1, b.1), mix(a.2, b.2))
}

/// Selected profiles of every column as an image; the truth alongside when
/// known. Failed columns are grey.
pub fn section(p: &Payload) -> String {
    let cols = p.columns.len();
    let bottoms = bottoms(p);
    let inverted: Vec<Option<&Vec<f64>>> = p.columns.iter().map(|c| c.result().map(|r| &r.selected().profile)).collect();
    let (lo, hi) = range(
        inverted
            .iter()
            .flatten()
            .flat_map(|v| v.iter())
            .chain(p.truth.iter().flatten().flatten())
            .copied(),
    );
    let mut panels: Vec<(&str, Vec<Option<&Vec<f64>>>)> = Vec::new();
    if let Some(t) = &p.truth {
        panels.push(("truth", t.iter().map(Some).collect()));
    }
    panels.push(("inverted", inverted));

    let (pw, ph) = (320.0, 380.0);
    let mut body = String::new();
    for (k, (title, images)) in panels.iter().enumerate() {
        let f = Frame {
            x: k as f64 * pw + 62.0,
            y: 30.0,
            w: pw - 80.0,
            h: ph - 80.0,
            xr: (0.0, cols as f64),
            yr: (0.0, bottoms.last().copied().unwrap_or(1.0)),
            flip: true,
        };
        let _ = writeln!(
            body,
            "<text x=\"{:.2}\" y=\"18\" text-anchor=\"middle\" {FONT}>{title}</text>",
            f.x + f.w / 2.0
        );
        for (c, image) in images.iter().enumerate() {
            let (x0, x1) = (f.px(c as f64), f.px(c as f64 + 1.0));
            match image {
                Some(v) => {
                    for (layer, value) in v.iter().enumerate() {
                        let (y0, y1) = (f.py(p.tops[layer]), f.py(bottoms[layer]));
                        let fill = color((value - lo) / (hi - lo));
                        let _ = writeln!(
                            body,
                            "<rect x=\"{x0:.2}\" y=\"{y0:.2}\" width=\"{:.2}\" height=\"{:.2}\" fill=\"{fill}\"/>",
                            x1 - x0,
                            y1 - y0
                        );
                    }
                }
                None => {
                    let _ = writeln!(
                        body,
                        "<rect x=\"{x0:.2}\" y=\"{:.2}\" width=\"{:.2}\" height=\"{:.2}\" fill=\"#ccc\"/>",
                        f.y,
                        x1 - x0,
                        f.h
                    );
                    let _ = writeln!(
                        body,
                        "<text transform=\"translate({:.2},{:.2}) rotate(-90)\" text-anchor=\"middle\" {FONT}>failed</text>",
                        (x0 + x1) / 2.0 + 4.0,
                        f.y + f.h / 2.0
                    );
                }
            }
        }
        f.axes(&mut body, "column", "depth (m)");
    }

    let x = panels.len() as f64 * pw + 10.0;
    for k in 0..50 {
        let t = 1.0 - k as f64 / 50.0;
        let _ = writeln!(
            body,
            "<rect x=\"{x:.2}\" y=\"{:.2}\" width=\"16\" height=\"6.1\" fill=\"{}\"/>",
            30.0 + k as f64 * 6.0,
            color(t)
        );
    }
    let _ = writeln!(body, "<text x=\"{:.2}\" y=\"36\" {FONT}>{}</text>", x + 20.0, tick(hi));
    let _ = writeln!(body, "<text x=\"{:.2}\" y=\"330\" {FONT}>{}</text>", x + 20.0, tick(lo));
    svg(panels.len() as f64 * pw + 90.0, ph, &body)
}

/// Write the figures of `p` into `dir`; returns the paths written.
pub fn write_plots(p: &Payload, dir: &Path) -> Result<Vec<PathBuf>> {
    let mut files = Vec::new();
    match p.kind {
        RunKind::Profile => {
            let figures = [("gallery.svg", gallery(p, 0)), ("selected.svg", selected(p, 0)), ("fit.svg", fit(p, 0))];
            for (name, svg) in figures {
                if let Some(svg) = svg {
                    files.push(write_file(dir, name, &svg)?);
                }
            }
        }
        RunKind::Section => files.push(write_file(dir, "section.svg", &section(p))?),
    }
    Ok(files)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ticks() {
        assert_eq!(tick(0.0), "0");
        assert_eq!(tick(0.25), "0.25");
        assert_eq!(tick(3.0), "3");
        assert_eq!(tick(1.2566e-6), "1.26e-6");
    }

    #[test]
    fn palette_ends() {
        assert_eq!(color(0.0), "#440154");
        assert_eq!(color(1.0), "#fde725");
        assert_eq!(color(f64::NAN), "#440154");
    }

    #[test]
    fn flat_ranges_are_padded() {
        let (lo, hi) = range([2.0, 2.0].into_iter());
        assert!(lo < 2.0 && hi > 2.0);
        assert_eq!(range(std::iter::empty()), (0.0, 1.0));
    }
}
