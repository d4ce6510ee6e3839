//! Presentation-only rendering of spectra (SVG) and maps (SVG or PGM).
//!
//! Output bytes depend only on the data and the style, never on time or
//! environment.

use std::fmt::Write as _;

use crate::io::format_sig;
use crate::map::PLMap;
use crate::spectrum::Spectrum;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Colormap {
    #[default]
    Gray,
    Viridis,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RenderStyle {
    pub colormap: Colormap,
    /// Value range mapped onto the colormap; data min/max when `None`.
    pub range: Option<(f64, f64)>,
    /// Draw guide lines at the NV⁰ (575 nm) and NV⁻ (637 nm) zero-phonon lines.
    pub zpl_guides: bool,
    /// Plot size in px for spectra, pixel size in px for map SVGs.
    pub plot_width: u32,
    pub plot_height: u32,
    pub cell_px: u32,
}

impl Default for RenderStyle {
    fn default() -> Self {
        RenderStyle {
            colormap: Colormap::Gray,
            range: None,
            zpl_guides: false,
            plot_width: 720,
            plot_height: 420,
            cell_px: 4,
        }
    }
}

const PALETTE: [&str; 6] = [
    "#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf",
];

// Five anchors of a perceptually ordered purple-blue-green-yellow ramp.
const VIRIDIS: [(f64, f64, f64); 5] = [
    (68.0, 1.0, 84.0),
    (59.0, 82.0, 139.0),
    (33.0, 145.0, 140.0),
    (94.0, 201.0, 98.0),
    (253.0, 231.0, 37.0),
];

fn color(cmap: Colormap, t: f64) -> (u8, u8, u8) {
    let t = if t.is_finite() {
        t.clamp(0.0, 1.0)
    } else {
        0.0
    };
    match cmap {
        Colormap::Gray => {
            let v = (t * 255.0).round() as u8;
            (v, v, v)
        }
        Colormap::Viridis => {
            let pos = t * (VIRIDIS.len() - 1) as f64;
            let i = (pos.floor() as usize).min(VIRIDIS.len() - 2);
            let u = pos - i as f64;
            let (a, b) = (VIRIDIS[i], VIRIDIS[i + 1]);
            let mix = |x: f64, y: f64| (x + (y - x) * u).round() as u8;
            (mix(a.0, b.0), mix(a.1, b.1), mix(a.2, b.2))
        }
    }
}

fn value_range(values: &[f64], style: &RenderStyle) -> (f64, f64) {
    style.range.unwrap_or_else(|| {
        let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        (lo, hi)
    })
}

fn normalized(v: f64, (lo, hi): (f64, f64)) -> f64 {
    if hi > lo {
        (v - lo) / (hi - lo)
    } else {
        0.0
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
}

/// Overlaid line plot of one or more labelled spectra.
pub fn spectrum_svg(series: &[(&str, &Spectrum)], style: &RenderStyle) -> String {
    let (w, h) = (style.plot_width as f64, style.plot_height as f64);
    let (ml, mr, mt, mb) = (80.0, 20.0, 20.0, 50.0);
    let (pw, ph) = (w - ml - mr, h - mt - mb);

    let xmin = series
        .iter()
        .map(|(_, s)| s.wavelengths()[0])
        .fold(f64::INFINITY, f64::min);
    let xmax = series
        .iter()
        .map(|(_, s)| s.wavelengths()[s.len() - 1])
        .fold(f64::NEG_INFINITY, f64::max);
    let all: Vec<f64> = series
        .iter()
        .flat_map(|(_, s)| s.intensities().iter().copied())
        .collect();
    let (ymin, ymax) = value_range(&all, style);
    let (ymin, ymax) = if ymax > ymin {
        (ymin, ymax)
    } else {
        (ymin - 1.0, ymin + 1.0)
    };
    let px = |x: f64| ml + pw * (x - xmin) / (xmax - xmin);
    let py = |y: f64| mt + ph * (1.0 - (y - ymin) / (ymax - ymin));

    let mut out = String::new();
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(
        out,
        r#"<rect x="0" y="0" width="{w}" height="{h}" fill="white"/>"#
    );
    let _ = writeln!(
        out,
        r#"<rect x="{ml}" y="{mt}" width="{pw}" height="{ph}" fill="none" stroke="black"/>"#
    );
    for k in 0..=5 {
        let x = xmin + (xmax - xmin) * k as f64 / 5.0;
        let _ = writeln!(
            out,
            r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">{}</text>"#,
            px(x),
            mt + ph + 16.0,
            format_sig(x, 4)
        );
        let y = ymin + (ymax - ymin) * k as f64 / 5.0;
        let _ = writeln!(
            out,
            r#"<text x="{:.2}" y="{:.2}" text-anchor="end">{}</text>"#,
            ml - 6.0,
            py(y) + 4.0,
            format_sig(y, 4)
        );
    }
    let _ = writeln!(
        out,
        r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">wavelength (nm)</text>"#,
        ml + pw / 2.0,
        h - 10.0
    );
    let _ = writeln!(
        out,
        r#"<text x="14" y="{:.2}" text-anchor="middle" transform="rotate(-90 14 {:.2})">intensity (counts/s)</text>"#,
        mt + ph / 2.0,
        mt + ph / 2.0
    );
    if style.zpl_guides {
        for (lambda, label) in [(575.0, "NV0 ZPL 575 nm"), (637.0, "NV- ZPL 637 nm")] {
            if lambda >= xmin && lambda <= xmax {
                let x = px(lambda);
                let _ = writeln!(
                    out,
                    r##"<line x1="{x:.2}" y1="{mt}" x2="{x:.2}" y2="{:.2}" stroke="#888" stroke-dasharray="4 3"/>"##,
                    mt + ph
                );
                let _ = writeln!(
                    out,
                    r##"<text x="{:.2}" y="{:.2}" fill="#555">{label}</text>"##,
                    x + 3.0,
                    mt + 12.0
                );
            }
        }
    }
    for (i, (label, s)) in series.iter().enumerate() {
        let c = PALETTE[i % PALETTE.len()];
        let mut pts = String::new();
        for (x, y) in s.wavelengths().iter().zip(s.intensities()) {
            let _ = write!(pts, "{:.2},{:.2} ", px(*x), py(*y));
        }
        let _ = writeln!(
            out,
            r#"<polyline fill="none" stroke="{c}" stroke-width="1.2" points="{}"/>"#,
            pts.trim_end()
        );
        let _ = writeln!(
            out,
            r#"<text x="{:.2}" y="{:.2}" fill="{c}" text-anchor="end">{} (min {}, max {})</text>"#,
            ml + pw - 8.0,
            mt + 16.0 + 14.0 * i as f64,
            escape(label),
            format_sig(s.min_intensity(), 4),
            format_sig(s.max_intensity(), 4)
        );
    }
    out.push_str("</svg>\n");
    out
}

/// Heat-map SVG with µm axes and a colour bar labelled with the value range.
pub fn map_svg(m: &PLMap, style: &RenderStyle) -> String {
    let cell = style.cell_px.max(1) as f64;
    let (mw, mh) = (m.width() as f64 * cell, m.height() as f64 * cell);
    let (ml, mt, mb, bar) = (60.0, 20.0, 50.0, 90.0);
    let (w, h) = (ml + mw + bar, mt + mh + mb);
    let range = value_range(m.values(), style);

    let mut out = String::new();
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}" font-family="sans-serif" font-size="12" shape-rendering="crispEdges">"#
    );
    let _ = writeln!(
        out,
        r#"<rect x="0" y="0" width="{w}" height="{h}" fill="white"/>"#
    );
    for y in 0..m.height() {
        // merge horizontal runs of identical colour
        let mut x = 0;
        while x < m.width() {
            let c = color(style.colormap, normalized(m.get(x, y), range));
            let mut run = 1;
            while x + run < m.width()
                && color(style.colormap, normalized(m.get(x + run, y), range)) == c
            {
                run += 1;
            }
            let _ = writeln!(
                out,
                r#"<rect x="{}" y="{}" width="{}" height="{cell}" fill="rgb({},{},{})"/>"#,
                ml + x as f64 * cell,
                mt + y as f64 * cell,
                run as f64 * cell,
                c.0,
                c.1,
                c.2
            );
            x += run;
        }
    }
    let _ = writeln!(
        out,
        r#"<rect x="{ml}" y="{mt}" width="{mw}" height="{mh}" fill="none" stroke="black"/>"#
    );
    let pitch = m.pixel_pitch();
    let _ = writeln!(
        out,
        r#"<text x="{ml}" y="{:.2}">0</text><text x="{:.2}" y="{:.2}" text-anchor="end">{}</text>"#,
        mt + mh + 16.0,
        ml + mw,
        mt + mh + 16.0,
        format_sig(m.width() as f64 * pitch, 4)
    );
    let _ = writeln!(
        out,
        r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">x (µm)</text>"#,
        ml + mw / 2.0,
        h - 10.0
    );
    let _ = writeln!(
        out,
        r#"<text x="14" y="{:.2}" text-anchor="middle" transform="rotate(-90 14 {:.2})">y (µm)</text>"#,
        mt + mh / 2.0,
        mt + mh / 2.0
    );
    let _ = writeln!(
        out,
        r#"<text x="{:.2}" y="{:.2}" text-anchor="end">{}</text>"#,
        ml - 6.0,
        mt + mh,
        format_sig(m.height() as f64 * pitch, 4)
    );

    // colour bar, top = max
    let bx = ml + mw + 15.0;
    let steps = 32;
    let bh = mh / steps as f64;
    for k in 0..steps {
        let t = 1.0 - (k as f64 + 0.5) / steps as f64;
        let c = color(style.colormap, t);
        let _ = writeln!(
            out,
            r#"<rect x="{bx:.2}" y="{:.2}" width="16" height="{:.2}" fill="rgb({},{},{})"/>"#,
            mt + k as f64 * bh,
            bh,
            c.0,
            c.1,
            c.2
        );
    }
    let _ = writeln!(
        out,
        r#"<text x="{:.2}" y="{:.2}">{}</text><text x="{:.2}" y="{:.2}">{}</text>"#,
        bx + 20.0,
        mt + 10.0,
        format_sig(range.1, 4),
        bx + 20.0,
        mt + mh,
        format_sig(range.0, 4)
    );
    out.push_str("</svg>\n");
    out
}

/// Binary greyscale PGM (P5). The value range and pixel pitch are recorded
/// in header comments.
pub fn map_pgm(m: &PLMap, style: &RenderStyle) -> Vec<u8> {
    let range = value_range(m.values(), style);
    let mut out = format!(
        "P5\n# min={} max={}\n# pixel_pitch_um={}\n{} {}\n255\n",
        range.0,
        range.1,
        m.pixel_pitch(),
        m.width(),
        m.height()
    )
    .into_bytes();
    out.extend(
        m.values()
            .iter()
            .map(|&v| (normalized(v, range).clamp(0.0, 1.0) * 255.0).round() as u8),
    );
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_map_is_uniform() {
        let m = PLMap::zeros(5, 4, 1.0).unwrap();
        let pgm = map_pgm(&m, &RenderStyle::default());
        let header_len = pgm.len() - 20;
        assert!(pgm[header_len..].iter().all(|&b| b == 0));
        let svg = map_svg(&m, &RenderStyle::default());
        // one merged run per row
        assert_eq!(svg.matches("fill=\"rgb(0,0,0)\"").count(), 4);
        assert!(svg.contains("x (µm)"));
    }

    #[test]
    fn guides_toggle() {
        let s = Spectrum::from_fn((0..=400).map(|i| 500.0 + i as f64).collect(), |x| x).unwrap();
        let mut st = RenderStyle::default();
        assert!(!spectrum_svg(&[("a", &s)], &st).contains("637 nm"));
        st.zpl_guides = true;
        let svg = spectrum_svg(&[("a", &s)], &st);
        assert!(svg.contains("NV0 ZPL 575 nm") && svg.contains("NV- ZPL 637 nm"));
        assert!(svg.contains("wavelength (nm)"));
    }

    #[test]
    fn viridis_endpoints() {
        assert_eq!(color(Colormap::Viridis, 0.0), (68, 1, 84));
        assert_eq!(color(Colormap::Viridis, 1.0), (253, 231, 37));
        assert_eq!(color(Colormap::Gray, 0.5), (128, 128, 128));
    }
}
