//! Deterministic SVG rendering of a Stokes graph.

use std::fmt::Write;

use adiabat_core::roots::Rect;
use adiabat_core::stokes::{LineKind, StokesGraph};
use num_complex::Complex64;

type C = Complex64;

/// What the renderer needs from a graph; an empty view draws axes only.
#[derive(Debug, Clone)]
pub struct GraphView {
    pub bbox: Rect,
    pub turning_points: Vec<C>,
    pub poles: Vec<C>,
    pub lines: Vec<(LineKind, Vec<C>)>,
    /// s1bar first, then s1..sn.
    pub chain: Vec<C>,
}

impl GraphView {
    pub fn empty(bbox: Rect) -> GraphView {
        GraphView { bbox, turning_points: vec![], poles: vec![], lines: vec![], chain: vec![] }
    }
}

impl From<&StokesGraph> for GraphView {
    fn from(g: &StokesGraph) -> GraphView {
        let chain = match &g.chain {
            Some(c) => std::iter::once(c.conj_first).chain(c.upper.iter().copied()).collect(),
            None => vec![],
        };
        GraphView {
            bbox: g.bbox,
            turning_points: g.turning_points.iter().map(|t| t.location).collect(),
            poles: g.poles.iter().map(|p| p.at).collect(),
            lines: g.lines.iter().map(|l| (l.kind, l.points.clone())).collect(),
            chain,
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct Style {
    /// Pixels per unit of s.
    pub scale: f64,
    pub stroke: f64,
    pub marker: f64,
    pub font_size: f64,
}

impl Default for Style {
    fn default() -> Self {
        Style { scale: 80.0, stroke: 1.5, marker: 4.0, font_size: 12.0 }
    }
}

// fixed precision keeps the output byte-stable
fn num(x: f64) -> String {
    let s = format!("{x:.3}");
    if s == "-0.000" {
        "0.000".to_string()
    } else {
        s
    }
}

struct Frame {
    bbox: Rect,
    scale: f64,
}

impl Frame {
    // SVG y grows downwards
    fn map(&self, z: C) -> (f64, f64) {
        ((z.re - self.bbox.re_min) * self.scale, (self.bbox.im_max - z.im) * self.scale)
    }
}

fn chain_label(k: usize) -> String {
    if k == 0 {
        "s\u{0304}1".to_string()
    } else {
        format!("s{k}")
    }
}

pub fn emit_graph_svg(view: &GraphView, style: &Style) -> String {
    let b = view.bbox;
    let f = Frame { bbox: b, scale: style.scale };
    let (w, h) = (b.width() * style.scale, b.height() * style.scale);
    let mut out = String::new();
    out.push_str("<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n");
    let _ = writeln!(out, "<!-- adiabat {} -->", env!("CARGO_PKG_VERSION"));
    let _ = writeln!(
        out,
        "<svg xmlns=\"http://www.w3.org/2000/svg\" version=\"1.1\" width=\"{}\" height=\"{}\" viewBox=\"0 0 {} {}\">",
        num(w),
        num(h),
        num(w),
        num(h)
    );
    let _ = writeln!(out, "<rect x=\"0\" y=\"0\" width=\"{}\" height=\"{}\" fill=\"white\"/>", num(w), num(h));

    // axes through the origin when it is visible, else along the box edge
    let x0 = f.map(C::new(0.0_f64.clamp(b.re_min, b.re_max), 0.0_f64.clamp(b.im_min, b.im_max)));
    let _ = writeln!(out, "<g id=\"axes\" stroke=\"#888888\" stroke-width=\"0.75\">");
    let _ = writeln!(out, "<line x1=\"0.000\" y1=\"{}\" x2=\"{}\" y2=\"{}\"/>", num(x0.1), num(w), num(x0.1));
    let _ = writeln!(out, "<line x1=\"{}\" y1=\"0.000\" x2=\"{}\" y2=\"{}\"/>", num(x0.0), num(x0.0), num(h));
    out.push_str("</g>\n");
    let _ = writeln!(
        out,
        "<g font-family=\"sans-serif\" font-size=\"{}\" fill=\"#444444\"><text x=\"{}\" y=\"{}\">Re s</text><text x=\"{}\" y=\"{}\">Im s</text></g>",
        num(style.font_size),
        num(w - 4.0 * style.font_size),
        num(x0.1 - 4.0),
        num(x0.0 + 4.0),
        num(style.font_size)
    );

    let _ = writeln!(out, "<g id=\"lines\" fill=\"none\" stroke-width=\"{}\">", num(style.stroke));
    for (kind, pts) in &view.lines {
        if pts.len() < 2 {
            continue;
        }
        let mut d = String::new();
        for (k, z) in pts.iter().enumerate() {
            let (x, y) = f.map(*z);
            let _ = write!(d, "{}{},{}", if k == 0 { "M" } else { " L" }, num(x), num(y));
        }
        match kind {
            LineKind::Stokes => {
                let _ = writeln!(out, "<path class=\"stokes\" stroke=\"#1f4e9c\" d=\"{d}\"/>");
            }
            LineKind::AntiStokes => {
                let _ = writeln!(
                    out,
                    "<path class=\"anti-stokes\" stroke=\"#b5472b\" stroke-dasharray=\"6,4\" d=\"{d}\"/>"
                );
            }
        }
    }
    out.push_str("</g>\n");

    out.push_str("<g id=\"turning-points\" fill=\"black\">\n");
    for z in &view.turning_points {
        let (x, y) = f.map(*z);
        let _ = writeln!(out, "<circle cx=\"{}\" cy=\"{}\" r=\"{}\"/>", num(x), num(y), num(style.marker));
    }
    out.push_str("</g>\n");

    let _ = writeln!(out, "<g id=\"poles\" stroke=\"black\" stroke-width=\"{}\">", num(style.stroke));
    let m = style.marker;
    for z in &view.poles {
        let (x, y) = f.map(*z);
        let _ = writeln!(
            out,
            "<path class=\"cross\" d=\"M{},{} L{},{} M{},{} L{},{}\"/>",
            num(x - m),
            num(y - m),
            num(x + m),
            num(y + m),
            num(x - m),
            num(y + m),
            num(x + m),
            num(y - m)
        );
    }
    out.push_str("</g>\n");

    let _ = writeln!(out, "<g id=\"chain\" font-family=\"sans-serif\" font-size=\"{}\">", num(style.font_size));
    for (k, z) in view.chain.iter().enumerate() {
        let (x, y) = f.map(*z);
        let _ = writeln!(out, "<text x=\"{}\" y=\"{}\">{}</text>", num(x + 1.5 * m), num(y - 1.5 * m), chain_label(k));
    }
    out.push_str("</g>\n</svg>\n");
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_graph_has_axes_only() {
        let s = emit_graph_svg(&GraphView::empty(Rect::square(2.0)), &Style::default());
        assert!(s.contains("viewBox=\"0 0 320.000 320.000\""));
        assert!(s.contains("id=\"axes\""));
        assert!(!s.contains("<circle"));
        assert!(!s.contains("class=\"stokes\""));
        assert!(s.ends_with("</svg>\n"));
    }

    #[test]
    fn markers_and_dashes() {
        let mut v = GraphView::empty(Rect::square(2.0));
        v.turning_points = vec![C::new(0.5, 0.8), C::new(0.5, -0.8)];
        v.poles = vec![C::new(0.0, 1.0)];
        v.lines = vec![
            (LineKind::Stokes, vec![C::new(0.5, 0.8), C::new(1.0, 1.0)]),
            (LineKind::AntiStokes, vec![C::new(0.5, 0.8), C::new(0.0, 0.0)]),
        ];
        v.chain = vec![C::new(0.5, -0.8), C::new(0.5, 0.8)];
        let s = emit_graph_svg(&v, &Style::default());
        assert_eq!(s.matches("<circle").count(), 2);
        assert_eq!(s.matches("class=\"cross\"").count(), 1);
        assert_eq!(s.matches("stroke-dasharray").count(), 1);
        assert!(s.contains(">s1<") && s.contains(">s\u{0304}1<"));
        assert_eq!(s, emit_graph_svg(&v, &Style::default()));
    }

    #[test]
    fn negative_zero_is_normalised() {
        assert_eq!(num(-0.0001), "0.000");
        assert_eq!(num(1.23456), "1.235");
    }

    proptest::proptest! {
        #[test]
        fn output_depends_only_on_input(
            pts in proptest::collection::vec((-3.0f64..3.0, -3.0f64..3.0), 0..12),
            half in 0.5f64..5.0,
        ) {
            let zs: Vec<C> = pts.iter().map(|&(a, b)| C::new(a, b)).collect();
            let mut v = GraphView::empty(Rect::square(half));
            v.turning_points = zs.clone();
            v.lines = vec![(LineKind::Stokes, zs.clone())];
            v.chain = zs.iter().take(3).copied().collect();
            let a = emit_graph_svg(&v, &Style::default());
            proptest::prop_assert_eq!(&a, &emit_graph_svg(&v.clone(), &Style::default()));
            proptest::prop_assert_eq!(a.matches("<circle").count(), zs.len());
            proptest::prop_assert!(!a.contains("NaN") && !a.contains("-0.000"));
        }
    }
}
