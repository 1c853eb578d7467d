//! Self-contained SVG plots of trajectory CSVs.

use std::fmt::Write as _;

use nalgebra::{Vector2, Vector3};
use thiserror::Error;

use gvf_core::trajectory::Trajectory;

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 480.0;
const MARGIN: f64 = 64.0;
/// Polylines are thinned to at most this many vertices.
const MAX_VERTICES: usize = 4000;

#[derive(Debug, Error)]
pub enum PlotError {
    #[error("no samples")]
    NoSamples,
    #[error("invalid view: {0}")]
    View(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Axis {
    X,
    Y,
    Z,
}

impl Axis {
    fn index(self) -> usize {
        self as usize
    }

    fn label(self) -> &'static str {
        ["x", "y", "z"][self.index()]
    }
}

/// How 3D points are mapped onto the page.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Projection {
    /// Orthographic view from a camera at the given azimuth (about z,
    /// from the +x axis) and elevation, both in degrees.
    Orbit { azimuth: f64, elevation: f64 },
    /// Drop one coordinate and plot the other two.
    Plane { horizontal: Axis, vertical: Axis },
}

impl Default for Projection {
    fn default() -> Self {
        Projection::Orbit {
            azimuth: -37.5,
            elevation: 30.0,
        }
    }
}

impl Projection {
    /// Parses `"az,el"` in degrees.
    pub fn orbit(spec: &str) -> Result<Projection, PlotError> {
        let parts: Vec<&str> = spec.split(',').map(str::trim).collect();
        let nums: Option<Vec<f64>> = parts.iter().map(|p| p.parse().ok()).collect();
        match nums.as_deref() {
            Some([azimuth, elevation]) if azimuth.is_finite() && elevation.is_finite() => Ok(Projection::Orbit {
                azimuth: *azimuth,
                elevation: *elevation,
            }),
            _ => Err(PlotError::View(format!("expected `azimuth,elevation` in degrees, got {spec:?}"))),
        }
    }

    /// Parses an axis pair such as `"xz"`.
    pub fn plane(spec: &str) -> Result<Projection, PlotError> {
        let axis = |c| match c {
            'x' => Some(Axis::X),
            'y' => Some(Axis::Y),
            'z' => Some(Axis::Z),
            _ => None,
        };
        let chars: Vec<char> = spec.chars().collect();
        match chars.as_slice() {
            [a, b] => match (axis(*a), axis(*b)) {
                (Some(h), Some(v)) if h != v => Ok(Projection::Plane {
                    horizontal: h,
                    vertical: v,
                }),
                _ => Err(PlotError::View(format!("need two distinct axes out of x, y, z, got {spec:?}"))),
            },
            _ => Err(PlotError::View(format!("need two distinct axes out of x, y, z, got {spec:?}"))),
        }
    }

    fn basis(&self) -> (Vector3<f64>, Vector3<f64>) {
        match *self {
            Projection::Orbit { azimuth, elevation } => {
                let (sa, ca) = azimuth.to_radians().sin_cos();
                let (se, ce) = elevation.to_radians().sin_cos();
                (Vector3::new(-sa, ca, 0.0), Vector3::new(-se * ca, -se * sa, ce))
            }
            Projection::Plane { horizontal, vertical } => {
                let unit = |a: Axis| Vector3::from_fn(|i, _| if i == a.index() { 1.0 } else { 0.0 });
                (unit(horizontal), unit(vertical))
            }
        }
    }

    fn project(&self, p: &Vector3<f64>) -> Vector2<f64> {
        let (right, up) = self.basis();
        Vector2::new(right.dot(p), up.dot(p))
    }
}

fn escape(text: &str) -> String {
    text.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

/// Shortest decimal that identifies a tick value at the given step.
fn tick_label(v: f64, step: f64) -> String {
    let decimals = (-step.log10().floor()).max(0.0) as usize;
    let s = format!("{:.*}", decimals, v);
    if s.starts_with('-') && s[1..].chars().all(|c| c == '0' || c == '.') {
        s[1..].to_string()
    } else {
        s
    }
}

/// Round tick positions covering `[lo, hi]`.
fn ticks(lo: f64, hi: f64, target: usize) -> (Vec<f64>, f64) {
    let raw = (hi - lo) / target as f64;
    let mag = 10f64.powf(raw.log10().floor());
    let step = [1.0, 2.0, 5.0, 10.0]
        .iter()
        .map(|m| m * mag)
        .find(|s| *s >= raw)
        .unwrap_or(10.0 * mag);
    let first = (lo / step).ceil() as i64;
    let last = (hi / step).floor() as i64;
    ((first..=last).map(|k| k as f64 * step).collect(), step)
}

fn thin<T: Copy>(points: &[T]) -> Vec<T> {
    if points.len() <= MAX_VERTICES {
        return points.to_vec();
    }
    let stride = points.len().div_ceil(MAX_VERTICES);
    let mut out: Vec<T> = points.iter().step_by(stride).copied().collect();
    out.push(points[points.len() - 1]);
    out
}

fn bounds(points: &[Vector2<f64>]) -> (Vector2<f64>, Vector2<f64>) {
    let mut lo = Vector2::repeat(f64::INFINITY);
    let mut hi = Vector2::repeat(f64::NEG_INFINITY);
    for p in points {
        lo = lo.inf(p);
        hi = hi.sup(p);
    }
    // Pad flat extents so the mapping stays finite.
    for i in 0..2 {
        if hi[i] - lo[i] < 1e-12 {
            lo[i] -= 0.5;
            hi[i] += 0.5;
        }
    }
    (lo, hi)
}

struct Frame {
    lo: Vector2<f64>,
    sx: f64,
    sy: f64,
    left: f64,
    bottom: f64,
}

impl Frame {
    fn to_page(&self, p: &Vector2<f64>) -> (f64, f64) {
        (self.left + (p.x - self.lo.x) * self.sx, self.bottom - (p.y - self.lo.y) * self.sy)
    }
}

fn polyline(svg: &mut String, frame: &Frame, points: &[Vector2<f64>], style: &str) {
    let coords: Vec<String> = thin(points)
        .iter()
        .map(|p| {
            let (x, y) = frame.to_page(p);
            format!("{x:.2},{y:.2}")
        })
        .collect();
    let _ = writeln!(svg, r#"<polyline fill="none" {style} points="{}"/>"#, coords.join(" "));
}

fn header(svg: &mut String, title: &str) {
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(svg, r#"<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#);
    let _ = writeln!(
        svg,
        r#"<text x="{:.2}" y="24" text-anchor="middle" font-size="14">{}</text>"#,
        WIDTH / 2.0,
        escape(title)
    );
}

fn axes_box(svg: &mut String, frame: &Frame, hi: Vector2<f64>, xlabel: &str, ylabel: &str, log_y: bool) {
    let (x0, y0) = frame.to_page(&frame.lo);
    let (x1, y1) = frame.to_page(&hi);
    let _ = writeln!(
        svg,
        r#"<rect x="{x0:.2}" y="{y1:.2}" width="{:.2}" height="{:.2}" fill="none" stroke="black"/>"#,
        x1 - x0,
        y0 - y1
    );
    let (xt, xstep) = ticks(frame.lo.x, hi.x, 6);
    for v in xt {
        let (px, _) = frame.to_page(&Vector2::new(v, frame.lo.y));
        let _ = writeln!(svg, r#"<line x1="{px:.2}" y1="{y0:.2}" x2="{px:.2}" y2="{:.2}" stroke="black"/>"#, y0 + 5.0);
        let _ = writeln!(
            svg,
            r#"<text x="{px:.2}" y="{:.2}" text-anchor="middle">{}</text>"#,
            y0 + 18.0,
            tick_label(v, xstep)
        );
    }
    let (yt, ystep) = if log_y {
        let lo = frame.lo.y.ceil() as i64;
        let hi = hi.y.floor() as i64;
        let stride = ((hi - lo) / 6 + 1).max(1);
        ((lo..=hi).step_by(stride as usize).map(|k| k as f64).collect(), 1.0)
    } else {
        ticks(frame.lo.y, hi.y, 6)
    };
    for v in yt {
        let (_, py) = frame.to_page(&Vector2::new(frame.lo.x, v));
        let label = if log_y { format!("1e{}", v as i64) } else { tick_label(v, ystep) };
        let _ = writeln!(svg, r#"<line x1="{:.2}" y1="{py:.2}" x2="{x0:.2}" y2="{py:.2}" stroke="black"/>"#, x0 - 5.0);
        let _ = writeln!(
            svg,
            r#"<text x="{:.2}" y="{:.2}" text-anchor="end">{label}</text>"#,
            x0 - 8.0,
            py + 4.0
        );
    }
    let _ = writeln!(
        svg,
        r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">{}</text>"#,
        (x0 + x1) / 2.0,
        HEIGHT - 16.0,
        escape(xlabel)
    );
    let _ = writeln!(
        svg,
        r#"<text x="18" y="{:.2}" text-anchor="middle" transform="rotate(-90 18 {:.2})">{}</text>"#,
        (y0 + y1) / 2.0,
        (y0 + y1) / 2.0,
        escape(ylabel)
    );
}

pub struct Traj3dOptions {
    pub projection: Projection,
    /// Points of the desired path, drawn underneath the trajectory.
    pub overlay: Vec<Vector3<f64>>,
    pub title: String,
}

impl Default for Traj3dOptions {
    fn default() -> Self {
        Traj3dOptions {
            projection: Projection::default(),
            overlay: Vec::new(),
            title: "trajectory".into(),
        }
    }
}

/// Projected trajectory with start and end markers. Orbit views get an
/// axis triad, plane views a ticked frame with equal scales.
pub fn trajectory_svg(traj: &Trajectory, opts: &Traj3dOptions) -> Result<String, PlotError> {
    if traj.samples.is_empty() {
        return Err(PlotError::NoSamples);
    }
    let proj = &opts.projection;
    let track: Vec<Vector2<f64>> = traj.positions().iter().map(|p| proj.project(p)).collect();
    let overlay: Vec<Vector2<f64>> = opts.overlay.iter().map(|p| proj.project(p)).collect();
    let all: Vec<Vector2<f64>> = track.iter().chain(&overlay).copied().collect();
    let (lo, hi) = bounds(&all);
    let avail = Vector2::new(WIDTH - 2.0 * MARGIN, HEIGHT - 2.0 * MARGIN);
    let scale = (avail.x / (hi.x - lo.x)).min(avail.y / (hi.y - lo.y));
    let used = (hi - lo) * scale;
    let frame = Frame {
        lo,
        sx: scale,
        sy: scale,
        left: MARGIN + (avail.x - used.x) / 2.0,
        bottom: HEIGHT - MARGIN - (avail.y - used.y) / 2.0,
    };

    let mut svg = String::new();
    header(&mut svg, &opts.title);
    match *proj {
        Projection::Plane { horizontal, vertical } => {
            axes_box(&mut svg, &frame, hi, horizontal.label(), vertical.label(), false)
        }
        Projection::Orbit { .. } => {
            let origin = (MARGIN * 0.75, HEIGHT - MARGIN * 0.5);
            for axis in [Axis::X, Axis::Y, Axis::Z] {
                let unit = Vector3::from_fn(|i, _| if i == axis.index() { 1.0 } else { 0.0 });
                let d = proj.project(&unit) * 28.0;
                let (x, y) = (origin.0 + d.x, origin.1 - d.y);
                let _ = writeln!(
                    svg,
                    r#"<line x1="{:.2}" y1="{:.2}" x2="{x:.2}" y2="{y:.2}" stroke="gray"/>"#,
                    origin.0, origin.1
                );
                let _ = writeln!(
                    svg,
                    r#"<text x="{:.2}" y="{:.2}" fill="gray">{}</text>"#,
                    x + 2.0,
                    y - 2.0,
                    axis.label()
                );
            }
        }
    }
    if !overlay.is_empty() {
        polyline(&mut svg, &frame, &overlay, r##"stroke="#d62728" stroke-width="1" stroke-dasharray="4 3""##);
    }
    polyline(&mut svg, &frame, &track, r##"stroke="#1f77b4" stroke-width="1.5""##);
    let (sx, sy) = frame.to_page(&track[0]);
    let (ex, ey) = frame.to_page(&track[track.len() - 1]);
    let _ = writeln!(svg, r#"<circle cx="{sx:.2}" cy="{sy:.2}" r="4" fill="green"/>"#);
    let _ = writeln!(svg, r#"<circle cx="{ex:.2}" cy="{ey:.2}" r="4" fill="black"/>"#);
    svg.push_str("</svg>\n");
    Ok(svg)
}

/// `‖e(t)‖` against time, optionally on a log10 scale.
pub fn error_svg(traj: &Trajectory, log_scale: bool, title: &str) -> Result<String, PlotError> {
    if traj.samples.is_empty() {
        return Err(PlotError::NoSamples);
    }
    let floor = 1e-300;
    let points: Vec<Vector2<f64>> = traj
        .samples
        .iter()
        .map(|s| {
            let e = s.e_norm();
            Vector2::new(s.t, if log_scale { e.max(floor).log10() } else { e })
        })
        .collect();
    let (mut lo, mut hi) = bounds(&points);
    if !log_scale {
        lo.y = lo.y.min(0.0);
    }
    hi.y += 0.05 * (hi.y - lo.y);
    let frame = Frame {
        lo,
        sx: (WIDTH - 2.0 * MARGIN) / (hi.x - lo.x),
        sy: (HEIGHT - 2.0 * MARGIN) / (hi.y - lo.y),
        left: MARGIN,
        bottom: HEIGHT - MARGIN,
    };
    let mut svg = String::new();
    header(&mut svg, title);
    axes_box(&mut svg, &frame, hi, "t (s)", "|e|", log_scale);
    polyline(&mut svg, &frame, &points, r##"stroke="#1f77b4" stroke-width="1.5""##);
    svg.push_str("</svg>\n");
    Ok(svg)
}

#[cfg(test)]
mod tests {
    use super::*;
    use gvf_core::trajectory::{Sample, SystemKind};

    fn traj(n: usize) -> Trajectory {
        let mut t = Trajectory::new(SystemKind::Raw);
        for i in 0..n {
            let s = i as f64 * 0.1;
            t.samples.push(Sample {
                t: s,
                state: vec![s.cos(), s.sin(), s],
                e: [(-s).exp(), 0.0],
                v: 0.0,
                nke_norm: 0.0,
                chi_norm: 1.0,
                beta: None,
                e_dot: None,
            });
        }
        t
    }

    #[test]
    fn view_parsing() {
        assert_eq!(
            Projection::orbit("30, -45").unwrap(),
            Projection::Orbit {
                azimuth: 30.0,
                elevation: -45.0
            }
        );
        assert!(Projection::orbit("30").is_err());
        assert!(Projection::plane("xx").is_err());
        assert!(Projection::plane("xyz").is_err());
        assert!(matches!(Projection::plane("yz").unwrap(), Projection::Plane { horizontal: Axis::Y, vertical: Axis::Z }));
    }

    #[test]
    fn ticks_are_round() {
        let (t, step) = ticks(0.0, 60.0, 6);
        assert_eq!(step, 10.0);
        assert_eq!(t.first(), Some(&0.0));
        assert_eq!(t.last(), Some(&60.0));
        assert_eq!(tick_label(-0.0001, 0.5), "0.0");
    }

    #[test]
    fn empty_trajectory() {
        let t = Trajectory::new(SystemKind::Raw);
        assert_eq!(trajectory_svg(&t, &Traj3dOptions::default()).unwrap_err().to_string(), "no samples");
        assert_eq!(error_svg(&t, false, "").unwrap_err().to_string(), "no samples");
    }

    #[test]
    fn output_is_deterministic_and_self_contained() {
        let t = traj(9000);
        let a = trajectory_svg(&t, &Traj3dOptions::default()).unwrap();
        assert_eq!(a, trajectory_svg(&t, &Traj3dOptions::default()).unwrap());
        assert!(!a.contains("href") && !a.contains("<image") && !a.contains("url("));
        let e = error_svg(&t, true, "errors <log>").unwrap();
        assert!(e.contains("errors &lt;log&gt;"));
        let vertices = a.split("points=\"").nth(1).unwrap().split('"').next().unwrap().split(' ').count();
        assert!(vertices <= MAX_VERTICES + 1);
    }

    #[test]
    fn single_sample_is_plotted() {
        let t = traj(1);
        let opts = Traj3dOptions {
            projection: Projection::plane("xy").unwrap(),
            ..Traj3dOptions::default()
        };
        assert!(trajectory_svg(&t, &opts).unwrap().contains("<circle"));
        assert!(error_svg(&t, false, "e").is_ok());
    }
}
