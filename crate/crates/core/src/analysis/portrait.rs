use nalgebra::Vector3;

use super::AnalysisError;
use crate::trajectory::Trajectory;

pub const PORTRAIT_POINTS: usize = 512;

fn arc_lengths(pts: &[Vector3<f64>]) -> Vec<f64> {
    let mut acc = Vec::with_capacity(pts.len());
    let mut s = 0.0;
    acc.push(0.0);
    for w in pts.windows(2) {
        s += (w[1] - w[0]).norm();
        acc.push(s);
    }
    acc
}

/// `n` points spaced evenly in arc length along the first `length` units
/// of the polyline.
pub fn resample_by_arc_length(
    pts: &[Vector3<f64>],
    n: usize,
    length: f64,
) -> Result<Vec<Vector3<f64>>, AnalysisError> {
    let acc = arc_lengths(pts);
    let total = *acc.last().unwrap_or(&0.0);
    if !(total > 0.0) || n < 2 {
        return Err(AnalysisError::InvalidInput("curve has zero arc length".into()));
    }
    if !(length > 0.0 && length <= total * (1.0 + 1e-12)) {
        return Err(AnalysisError::InvalidInput(format!(
            "cannot resample {length} units of a curve of length {total}"
        )));
    }
    let mut out = Vec::with_capacity(n);
    let mut seg = 0;
    for i in 0..n {
        let target = (length * i as f64 / (n - 1) as f64).min(total);
        while seg + 2 < acc.len() && acc[seg + 1] < target {
            seg += 1;
        }
        let span = acc[seg + 1] - acc[seg];
        let u = if span > 0.0 { ((target - acc[seg]) / span).clamp(0.0, 1.0) } else { 0.0 };
        out.push(pts[seg] + (pts[seg + 1] - pts[seg]) * u);
    }
    Ok(out)
}

/// Largest pointwise distance between two equally sampled curves.
pub fn curve_distance(a: &[Vector3<f64>], b: &[Vector3<f64>]) -> Result<f64, AnalysisError> {
    if a.len() != b.len() || a.is_empty() {
        return Err(AnalysisError::InvalidInput(format!(
            "curves need the same non-zero number of points ({} vs {})",
            a.len(),
            b.len()
        )));
    }
    Ok(a.iter().zip(b).map(|(p, q)| (p - q).norm()).fold(0.0, f64::max))
}

/// Compares the curves traced by two trajectories, ignoring timing. Both
/// are cut to their common arc length, measured from their own start
/// points, and resampled at [`PORTRAIT_POINTS`] points.
pub fn phase_portrait_distance(a: &Trajectory, b: &Trajectory) -> Result<f64, AnalysisError> {
    let (pa, pb) = (a.positions(), b.positions());
    let la = arc_lengths(&pa).last().copied().unwrap_or(0.0);
    let lb = arc_lengths(&pb).last().copied().unwrap_or(0.0);
    let length = la.min(lb);
    if !(length > 0.0) {
        return Err(AnalysisError::InvalidInput("trajectory has zero arc length".into()));
    }
    curve_distance(
        &resample_by_arc_length(&pa, PORTRAIT_POINTS, length)?,
        &resample_by_arc_length(&pb, PORTRAIT_POINTS, length)?,
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn resampling_a_polyline() {
        let pts = [Vector3::zeros(), Vector3::new(1.0, 0.0, 0.0), Vector3::new(1.0, 3.0, 0.0)];
        let r = resample_by_arc_length(&pts, 5, 4.0).unwrap();
        assert_eq!(r[1], Vector3::new(1.0, 0.0, 0.0));
        assert_eq!(r[4], Vector3::new(1.0, 3.0, 0.0));
        assert!(resample_by_arc_length(&[Vector3::zeros(); 3], 5, 1.0).is_err());
    }

    #[test]
    fn distance_of_shifted_lines() {
        let a: Vec<_> = (0..10).map(|i| Vector3::new(i as f64, 0.0, 0.0)).collect();
        let b: Vec<_> = a.iter().map(|p| p + Vector3::new(0.0, 0.5, 0.0)).collect();
        assert_eq!(curve_distance(&a, &b).unwrap(), 0.5);
        assert_eq!(curve_distance(&a, &a).unwrap(), 0.0);
        assert!(curve_distance(&a, &b[1..]).is_err());
    }
}
