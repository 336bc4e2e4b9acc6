//! Static SVG renderings: per-play delta curves and per-frame histograms of
//! hypothetical yardage. Output depends only on the inputs, byte for byte.

use std::fmt::Write as _;

use crate::evaluate::{FrameEvaluation, PlayEvaluation};

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 360.0;
const MARGIN: f64 = 48.0;

struct Axis {
    lo: f64,
    hi: f64,
    from: f64,
    to: f64,
}

impl Axis {
    fn new(lo: f64, hi: f64, from: f64, to: f64) -> Self {
        let (lo, hi) = if hi > lo { (lo, hi) } else { (lo - 0.5, lo + 0.5) };
        Self { lo, hi, from, to }
    }

    fn map(&self, v: f64) -> f64 {
        self.from + (v - self.lo) / (self.hi - self.lo) * (self.to - self.from)
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

fn open(out: &mut String, title: &str) {
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="11">"#
    );
    let _ = writeln!(out, r##"<rect width="{WIDTH}" height="{HEIGHT}" fill="#ffffff"/>"##);
    let _ = writeln!(out, r#"<text x="{:.1}" y="20" text-anchor="middle" font-size="13">{}</text>"#, WIDTH / 2.0, escape(title));
}

fn frame_axes(out: &mut String, x: &Axis, y: &Axis, x_label: &str, y_label: &str) {
    let (x0, x1, y0, y1) = (x.from, x.to, y.from, y.to);
    let _ = writeln!(out, r##"<line x1="{x0:.1}" y1="{y0:.1}" x2="{x1:.1}" y2="{y0:.1}" stroke="#333"/>"##);
    let _ = writeln!(out, r##"<line x1="{x0:.1}" y1="{y0:.1}" x2="{x0:.1}" y2="{y1:.1}" stroke="#333"/>"##);
    for k in 0..=4 {
        let v = x.lo + (x.hi - x.lo) * k as f64 / 4.0;
        let px = x.map(v);
        let _ = writeln!(out, r#"<text x="{px:.1}" y="{:.1}" text-anchor="middle">{v:.1}</text>"#, y0 + 14.0);
        let v = y.lo + (y.hi - y.lo) * k as f64 / 4.0;
        let py = y.map(v);
        let _ = writeln!(out, r#"<text x="{:.1}" y="{:.1}" text-anchor="end">{v:.2}</text>"#, x0 - 4.0, py + 4.0);
    }
    let _ = writeln!(out, r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{}</text>"#, (x0 + x1) / 2.0, HEIGHT - 8.0, escape(x_label));
    let _ = writeln!(
        out,
        r#"<text x="14" y="{:.1}" text-anchor="middle" transform="rotate(-90 14 {:.1})">{}</text>"#,
        (y0 + y1) / 2.0,
        (y0 + y1) / 2.0,
        escape(y_label)
    );
}

/// Delta bar per frame with its 95% band, a zero line, and a dashed marker
/// at each `(frame_id, label)` event.
pub fn delta_curve_svg(play: &PlayEvaluation, events: &[(u32, String)]) -> String {
    let mut out = String::new();
    open(&mut out, &format!("game {} play {} carrier {}: total {:+.2} yards", play.game_id, play.play_id, play.carrier_id, play.total_delta()));
    if play.frames.is_empty() {
        out.push_str("<text x=\"320\" y=\"180\" text-anchor=\"middle\">no simulated frames</text>\n</svg>\n");
        return out;
    }
    let f_lo = play.frames.first().map_or(0, |f| f.frame_id) as f64;
    let f_hi = play.frames.last().map_or(0, |f| f.frame_id) as f64;
    let lo = play.frames.iter().map(|f| f.interval.0).fold(0.0f64, f64::min);
    let hi = play.frames.iter().map(|f| f.interval.1).fold(0.0f64, f64::max);
    let x = Axis::new(f_lo, f_hi, MARGIN, WIDTH - MARGIN / 2.0);
    let y = Axis::new(lo, hi, HEIGHT - MARGIN, MARGIN);
    frame_axes(&mut out, &x, &y, "frame", "observed minus hypothetical, yards");

    let mut band = String::new();
    for f in &play.frames {
        let _ = write!(band, "{:.2},{:.2} ", x.map(f.frame_id as f64), y.map(f.interval.1));
    }
    for f in play.frames.iter().rev() {
        let _ = write!(band, "{:.2},{:.2} ", x.map(f.frame_id as f64), y.map(f.interval.0));
    }
    let _ = writeln!(out, r##"<polygon points="{}" fill="#9ecae1" fill-opacity="0.5" stroke="none"/>"##, band.trim_end());
    let zero = y.map(0.0);
    let _ = writeln!(out, r##"<line x1="{:.1}" y1="{zero:.2}" x2="{:.1}" y2="{zero:.2}" stroke="#888"/>"##, x.from, x.to);
    let line: Vec<String> =
        play.frames.iter().map(|f| format!("{:.2},{:.2}", x.map(f.frame_id as f64), y.map(f.delta_bar))).collect();
    let _ = writeln!(out, r##"<polyline points="{}" fill="none" stroke="#08519c" stroke-width="2"/>"##, line.join(" "));
    for (frame_id, label) in events {
        let fid = *frame_id as f64;
        if fid < f_lo || fid > f_hi {
            continue;
        }
        let px = x.map(fid);
        let _ = writeln!(
            out,
            r##"<line x1="{px:.2}" y1="{:.1}" x2="{px:.2}" y2="{:.1}" stroke="#d94801" stroke-dasharray="4 3"/>"##,
            y.from, y.to
        );
        let _ = writeln!(out, r##"<text x="{:.2}" y="{:.1}" fill="#d94801">{}</text>"##, px + 3.0, y.to + 10.0, escape(label));
    }
    out.push_str("</svg>\n");
    out
}

/// Histogram of the hypothetical values at one frame with the observed value marked.
pub fn hypothetical_histogram_svg(frame: &FrameEvaluation, bins: usize, title: &str) -> String {
    let bins = bins.max(1);
    let mut out = String::new();
    open(&mut out, title);
    let lo = frame.hypothetical.iter().copied().fold(frame.observed, f64::min);
    let hi = frame.hypothetical.iter().copied().fold(frame.observed, f64::max);
    let x = Axis::new(lo, hi, MARGIN, WIDTH - MARGIN / 2.0);
    let width = (x.hi - x.lo) / bins as f64;
    let mut counts = vec![0usize; bins];
    for v in &frame.hypothetical {
        let b = (((v - x.lo) / width) as usize).min(bins - 1);
        counts[b] += 1;
    }
    let top = counts.iter().copied().max().unwrap_or(1).max(1) as f64;
    let y = Axis::new(0.0, top, HEIGHT - MARGIN, MARGIN);
    frame_axes(&mut out, &x, &y, "expected yards gained", "hypothetical steps");
    for (b, &c) in counts.iter().enumerate() {
        if c == 0 {
            continue;
        }
        let (l, r) = (x.map(x.lo + b as f64 * width), x.map(x.lo + (b + 1) as f64 * width));
        let (t, base) = (y.map(c as f64), y.map(0.0));
        let _ = writeln!(
            out,
            r##"<rect x="{l:.2}" y="{t:.2}" width="{:.2}" height="{:.2}" fill="#bdbdbd" stroke="#ffffff"/>"##,
            r - l,
            base - t
        );
    }
    let px = x.map(frame.observed);
    let _ = writeln!(out, r##"<line x1="{px:.2}" y1="{:.1}" x2="{px:.2}" y2="{:.1}" stroke="#cb181d" stroke-width="2"/>"##, y.from, y.to);
    let _ = writeln!(
        out,
        r##"<text x="{:.2}" y="{:.1}" fill="#cb181d">observed {:.2}</text>"##,
        px + 3.0,
        y.to + 10.0,
        frame.observed
    );
    out.push_str("</svg>\n");
    out
}
