//! Heatmaps as binary PGM/PPM and as SVG with Gaussian-fit contours.
//!
//! Columns map to the horizontal axis and rows to the vertical axis, with
//! the first row at the bottom. No timestamps are embedded, so output is a
//! pure function of the inputs.

use std::fmt::Write as _;

use crate::spectrum::{GaussianLobe, IntensityGrid};

/// Default contour level, 1/e² of each lobe's peak.
pub const CONTOUR_LEVEL: f64 = 0.135_335_283_236_612_7;

const SVG_MAX_CELLS: usize = 160;

fn normalized(grid: &IntensityGrid) -> Vec<f64> {
    let max = grid.max();
    grid.values
        .iter()
        .map(|&v| if max > 0.0 { (v / max).clamp(0.0, 1.0) } else { 0.0 })
        .collect()
}

/// Pixels in display order (top row = last grid row).
fn display_rows(grid: &IntensityGrid) -> impl Iterator<Item = usize> {
    (0..grid.rows()).rev()
}

pub fn render_pgm(grid: &IntensityGrid) -> Vec<u8> {
    let v = normalized(grid);
    let mut out = format!("P5\n{} {}\n255\n", grid.cols(), grid.rows()).into_bytes();
    for r in display_rows(grid) {
        for c in 0..grid.cols() {
            out.push((v[r * grid.cols() + c] * 255.0).round() as u8);
        }
    }
    out
}

pub fn render_ppm(grid: &IntensityGrid) -> Vec<u8> {
    let v = normalized(grid);
    let mut out = format!("P6\n{} {}\n255\n", grid.cols(), grid.rows()).into_bytes();
    for r in display_rows(grid) {
        for c in 0..grid.cols() {
            out.extend_from_slice(&colormap(v[r * grid.cols() + c]));
        }
    }
    out
}

/// Dark-to-bright sequential map (black, violet, red-orange, pale yellow).
pub fn colormap(t: f64) -> [u8; 3] {
    const STOPS: [(f64, [f64; 3]); 5] = [
        (0.0, [0.0, 0.0, 4.0]),
        (0.25, [87.0, 16.0, 110.0]),
        (0.5, [188.0, 55.0, 84.0]),
        (0.75, [249.0, 142.0, 9.0]),
        (1.0, [252.0, 255.0, 164.0]),
    ];
    let t = t.clamp(0.0, 1.0);
    let k = STOPS.iter().rposition(|s| s.0 <= t).unwrap_or(0).min(STOPS.len() - 2);
    let (t0, a) = STOPS[k];
    let (t1, b) = STOPS[k + 1];
    let f = (t - t0) / (t1 - t0);
    [0, 1, 2].map(|j| (a[j] + f * (b[j] - a[j])).round() as u8)
}

pub struct SvgOptions<'a> {
    pub title: &'a str,
    /// Label of the horizontal (column) axis.
    pub x_label: &'a str,
    /// Label of the vertical (row) axis.
    pub y_label: &'a str,
    pub contour_level: f64,
}

impl Default for SvgOptions<'_> {
    fn default() -> Self {
        Self {
            title: "",
            x_label: "idler wavelength (nm)",
            y_label: "signal wavelength (nm)",
            contour_level: CONTOUR_LEVEL,
        }
    }
}

fn ticks(lo: f64, hi: f64) -> Vec<f64> {
    let raw = (hi - lo) / 5.0;
    let mag = 10f64.powf(raw.log10().floor());
    let step = [1.0, 2.0, 5.0, 10.0].iter().map(|m| m * mag).find(|s| *s >= raw).unwrap_or(10.0 * mag);
    let first = (lo / step).ceil() as i64;
    let last = (hi / step).floor() as i64;
    (first..=last).map(|k| k as f64 * step).collect()
}

fn tick_label(v: f64, lo: f64, hi: f64) -> String {
    let digits = if hi - lo >= 20.0 { 0 } else if hi - lo >= 2.0 { 1 } else { 2 };
    format!("{v:.digits$}")
}

/// Heatmap with axes, ticks and one contour ellipse per lobe. Lobe
/// coordinates are (row axis, column axis), matching `GaussianLobe::center`.
pub fn render_svg(grid: &IntensityGrid, lobes: &[GaussianLobe], opts: &SvgOptions) -> String {
    let (w, h) = (640.0, 560.0);
    let (left, right, top, bottom) = (80.0, 20.0, 40.0, 60.0);
    let (pw, ph) = (w - left - right, h - top - bottom);
    let (x0, x1) = (grid.lambda_i_axis[0], *grid.lambda_i_axis.last().unwrap());
    let (y0, y1) = (grid.lambda_s_axis[0], *grid.lambda_s_axis.last().unwrap());
    let sx = |x: f64| left + (x - x0) / (x1 - x0) * pw;
    let sy = |y: f64| top + ph - (y - y0) / (y1 - y0) * ph;

    let mut s = String::new();
    let _ = writeln!(s, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}" font-family="sans-serif" font-size="12">"#);
    let _ = writeln!(s, r#"<rect width="{w}" height="{h}" fill="white"/>"#);

    // block-averaged cells
    let v = normalized(grid);
    let br = grid.rows().div_ceil(SVG_MAX_CELLS);
    let bc = grid.cols().div_ceil(SVG_MAX_CELLS);
    let (nr, nc) = (grid.rows().div_ceil(br), grid.cols().div_ceil(bc));
    let (cw, ch) = (pw / nc as f64, ph / nr as f64);
    let _ = writeln!(s, r#"<g shape-rendering="crispEdges">"#);
    for i in 0..nr {
        for j in 0..nc {
            let (mut acc, mut n) = (0.0, 0.0);
            for r in i * br..((i + 1) * br).min(grid.rows()) {
                for c in j * bc..((j + 1) * bc).min(grid.cols()) {
                    acc += v[r * grid.cols() + c];
                    n += 1.0;
                }
            }
            let [cr, cg, cb] = colormap(acc / n);
            let _ = writeln!(
                s,
                r##"<rect x="{:.3}" y="{:.3}" width="{:.3}" height="{:.3}" fill="#{cr:02x}{cg:02x}{cb:02x}"/>"##,
                left + j as f64 * cw,
                top + ph - (i + 1) as f64 * ch,
                cw + 0.05,
                ch + 0.05
            );
        }
    }
    let _ = writeln!(s, "</g>");

    for l in lobes {
        let (a, b) = l.contour_semi_axes(opts.contour_level);
        let (c, sn) = (l.orientation.cos(), l.orientation.sin());
        let pts: Vec<String> = (0..=96)
            .map(|k| {
                let t = k as f64 / 96.0 * std::f64::consts::TAU;
                let (u, w2) = (a * t.cos(), b * t.sin());
                let ds = u * c - w2 * sn;
                let di = u * sn + w2 * c;
                format!("{:.3},{:.3}", sx(l.center[1] + di), sy(l.center[0] + ds))
            })
            .collect();
        let _ = writeln!(s, r#"<polyline points="{}" fill="none" stroke="white" stroke-width="1.5"/>"#, pts.join(" "));
        if let Some(label) = &l.process_label {
            let _ = writeln!(
                s,
                r#"<text x="{:.3}" y="{:.3}" fill="white" text-anchor="middle">{label}</text>"#,
                sx(l.center[1]),
                sy(l.center[0]) + 4.0
            );
        }
    }

    let _ = writeln!(s, r#"<rect x="{left}" y="{top}" width="{pw}" height="{ph}" fill="none" stroke="black"/>"#);
    for t in ticks(x0, x1) {
        let x = sx(t);
        let _ = writeln!(s, r#"<line x1="{x:.3}" y1="{:.3}" x2="{x:.3}" y2="{:.3}" stroke="black"/>"#, top + ph, top + ph + 5.0);
        let _ = writeln!(s, r#"<text x="{x:.3}" y="{:.3}" text-anchor="middle">{}</text>"#, top + ph + 18.0, tick_label(t, x0, x1));
    }
    for t in ticks(y0, y1) {
        let y = sy(t);
        let _ = writeln!(s, r#"<line x1="{:.3}" y1="{y:.3}" x2="{left}" y2="{y:.3}" stroke="black"/>"#, left - 5.0);
        let _ = writeln!(s, r#"<text x="{:.3}" y="{:.3}" text-anchor="end">{}</text>"#, left - 8.0, y + 4.0, tick_label(t, y0, y1));
    }
    let _ = writeln!(s, r#"<text x="{:.3}" y="{:.3}" text-anchor="middle">{}</text>"#, left + pw / 2.0, h - 15.0, escape(opts.x_label));
    let _ = writeln!(
        s,
        r#"<text transform="translate(20 {:.3}) rotate(-90)" text-anchor="middle">{}</text>"#,
        top + ph / 2.0,
        escape(opts.y_label)
    );
    if !opts.title.is_empty() {
        let _ = writeln!(s, r#"<text x="{:.3}" y="24" text-anchor="middle" font-size="14">{}</text>"#, w / 2.0, escape(opts.title));
    }
    s.push_str("</svg>\n");
    s
}

fn escape(t: &str) -> String {
    t.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectrum::linspace;

    fn grid(f: impl Fn(f64, f64) -> f64) -> IntensityGrid {
        let s = linspace(670.0, 700.0, 41);
        let i = linspace(567.0, 576.0, 31);
        let values = s.iter().flat_map(|&a| i.iter().map(move |&b| (a, b))).map(|(a, b)| f(a, b)).collect();
        IntensityGrid::new(s, i, values).unwrap()
    }

    #[test]
    fn constant_grid_is_uniform() {
        let g = grid(|_, _| 2.5);
        let pgm = render_pgm(&g);
        let header = "P5\n31 41\n255\n".to_string();
        assert!(pgm.starts_with(header.as_bytes()));
        let px = &pgm[header.len()..];
        assert_eq!(px.len(), 31 * 41);
        assert!(px.iter().all(|&p| p == px[0]));
        let svg = render_svg(&g, &[], &SvgOptions::default());
        assert!(!svg.contains("polyline"));
    }

    #[test]
    fn contours_and_determinism() {
        let lobe = GaussianLobe {
            center: [685.0, 571.0],
            sigma_major: 2.0,
            sigma_minor: 0.5,
            orientation: 0.4,
            amplitude: 1.0,
            r_squared: 1.0,
            process_label: Some("B".into()),
        };
        let g = grid(|a, b| lobe.value_at(a, b));
        let a = render_svg(&g, std::slice::from_ref(&lobe), &SvgOptions::default());
        assert_eq!(a, render_svg(&g, std::slice::from_ref(&lobe), &SvgOptions::default()));
        assert_eq!(a.matches("<polyline").count(), 1);
        assert_eq!(render_ppm(&g), render_ppm(&g));
        // the drawn contour sits where the lobe is at 1/e²
        let (ma, _) = lobe.contour_semi_axes(CONTOUR_LEVEL);
        let edge = lobe.value_at(685.0 + ma * 0.4f64.cos(), 571.0 + ma * 0.4f64.sin());
        assert!((edge - CONTOUR_LEVEL).abs() < 1e-12);
        assert!((CONTOUR_LEVEL - (-2.0f64).exp()).abs() < 1e-16);
    }

    #[test]
    fn colormap_endpoints() {
        assert_eq!(colormap(0.0), [0, 0, 4]);
        assert_eq!(colormap(1.0), [252, 255, 164]);
        assert_eq!(colormap(2.0), colormap(1.0));
    }
}
