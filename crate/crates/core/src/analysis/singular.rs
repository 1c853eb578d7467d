use nalgebra::{Matrix3, Vector3};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{Aabb, AnalysisError};
use crate::field::{field_jacobian, sample_field, FieldParams};
use crate::path::ImplicitPath;

/// Residual `‖χ‖` a Newton root must reach to count as a singular point.
const RESIDUAL_TOL: f64 = 1e-10;
/// Roots closer than this are merged.
const DEDUP_RADIUS: f64 = 1e-6;
const MAX_NEWTON: usize = 80;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SingularPoint {
    pub location: [f64; 3],
    /// `‖χ‖` at the location.
    pub residual: f64,
    /// `‖τ‖` at the location.
    pub tau_norm: f64,
    /// Grid seeds whose Newton iteration converged to this point.
    pub basin: Vec<[f64; 3]>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SingularSearch {
    pub points: Vec<SingularPoint>,
    pub seeds: usize,
    /// Seeds whose iteration did not converge or left the box.
    pub dropped: usize,
}

fn chi_norm(path: &ImplicitPath, params: &FieldParams, x: &Vector3<f64>) -> f64 {
    sample_field(path, params, x).map_or(f64::INFINITY, |s| s.chi_norm())
}

/// Damped Newton iteration on `χ(ξ) = 0`, falling back to a
/// Levenberg–Marquardt step when the Jacobian is singular or the full step
/// fails to reduce the residual.
fn newton(path: &ImplicitPath, params: &FieldParams, seed: Vector3<f64>) -> Option<(Vector3<f64>, f64)> {
    let mut x = seed;
    let mut chi = sample_field(path, params, &x).ok()?.chi;
    let mut r = chi.norm();
    for _ in 0..MAX_NEWTON {
        if r == 0.0 {
            break;
        }
        let j = field_jacobian(path, params, &x).ok()?;
        let newton_step = j.lu().solve(&(-chi)).filter(|d| d.iter().all(|v| v.is_finite()));
        let jtj = j.transpose() * j;
        let mu = 1e-6 * jtj.trace() + 1e-12;
        let lm_step = (jtj + Matrix3::identity() * mu).lu().solve(&(-(j.transpose() * chi)));
        let mut improved = None;
        for step in [newton_step, lm_step].into_iter().flatten() {
            let mut lambda = 1.0;
            while lambda > 1e-8 {
                let cand = x + step * lambda;
                if let Ok(s) = sample_field(path, params, &cand) {
                    if s.chi_norm() < r {
                        improved = Some((cand, s.chi, (step * lambda).norm()));
                        break;
                    }
                }
                lambda *= 0.5;
            }
            if improved.is_some() {
                break;
            }
        }
        let Some((cand, cand_chi, moved)) = improved else {
            break;
        };
        x = cand;
        chi = cand_chi;
        r = chi.norm();
        if moved <= 1e-15 * (1.0 + x.norm()) {
            break;
        }
    }
    (r < RESIDUAL_TOL).then_some((x, r))
}

/// Locates zeros of the field inside `bbox`, seeding Newton from grid
/// points where `‖χ‖` is locally minimal.
pub fn find_singular_points(
    path: &ImplicitPath,
    params: &FieldParams,
    bbox: &Aabb,
    grid_n: usize,
) -> Result<SingularSearch, AnalysisError> {
    if grid_n < 2 {
        return Err(AnalysisError::InvalidInput(format!(
            "grid needs at least 2 points per axis, got {grid_n}"
        )));
    }
    let n = grid_n;
    let grid = bbox.grid(n);
    let values: Vec<f64> = grid.par_iter().map(|p| chi_norm(path, params, p)).collect();
    let idx = |i: usize, j: usize, k: usize| (i * n + j) * n + k;

    let seeds: Vec<Vector3<f64>> = (0..grid.len())
        .into_par_iter()
        .filter(|&flat| {
            let v = values[flat];
            if !v.is_finite() {
                return false;
            }
            let (i, j, k) = (flat / (n * n), (flat / n) % n, flat % n);
            for di in -1i64..=1 {
                for dj in -1i64..=1 {
                    for dk in -1i64..=1 {
                        if di == 0 && dj == 0 && dk == 0 {
                            continue;
                        }
                        let (a, b, c) = (i as i64 + di, j as i64 + dj, k as i64 + dk);
                        let inside = |q: i64| q >= 0 && q < n as i64;
                        if inside(a) && inside(b) && inside(c) && values[idx(a as usize, b as usize, c as usize)] < v {
                            return false;
                        }
                    }
                }
            }
            true
        })
        .map(|flat| grid[flat])
        .collect();

    let slack = 1e-9 * bbox.diagonal();
    let roots: Vec<Option<(Vector3<f64>, f64, Vector3<f64>)>> = seeds
        .par_iter()
        .map(|seed| {
            newton(path, params, *seed)
                .filter(|(x, _)| bbox.contains(x, slack))
                .map(|(x, r)| (x, r, *seed))
        })
        .collect();

    let dropped = roots.iter().filter(|r| r.is_none()).count();
    let mut points: Vec<SingularPoint> = Vec::new();
    for (x, r, seed) in roots.into_iter().flatten() {
        match points
            .iter_mut()
            .find(|p| (Vector3::from(p.location) - x).norm() < DEDUP_RADIUS)
        {
            Some(p) => {
                if r < p.residual {
                    p.location = x.into();
                    p.residual = r;
                }
                p.basin.push(seed.into());
            }
            None => points.push(SingularPoint {
                location: x.into(),
                residual: r,
                tau_norm: 0.0,
                basin: vec![seed.into()],
            }),
        }
    }
    for p in &mut points {
        let s = sample_field(path, params, &Vector3::from(p.location))?;
        p.residual = s.chi_norm();
        p.tau_norm = s.tau.norm();
        p.basin.sort_by(|a, b| a.partial_cmp(b).expect("finite seeds"));
    }
    points.sort_by(|a, b| a.location.partial_cmp(&b.location).expect("finite roots"));
    Ok(SingularSearch {
        points,
        seeds: seeds.len(),
        dropped,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::Tolerances;
    use crate::path::{builtin_cylinder_intersection, builtin_helix};

    #[test]
    fn helix_has_no_singular_points() {
        let found = find_singular_points(
            &builtin_helix(),
            &FieldParams::new(1.0, 1.0).unwrap(),
            &Aabb::cube(-3.0, 3.0).unwrap(),
            12,
        )
        .unwrap();
        assert!(found.points.is_empty());
        assert!(found.seeds > 0);
    }

    #[test]
    fn cylinder_scenario_has_three() {
        let path = builtin_cylinder_intersection(0.0, 1.5, 2.0, 1.0).unwrap();
        let params = FieldParams::new(2.0, 2.0).unwrap();
        let found = find_singular_points(&path, &params, &Aabb::cube(-4.0, 4.0).unwrap(), 40).unwrap();
        assert_eq!(found.points.len(), 3, "{:#?}", found.points);
        for p in &found.points {
            assert!(p.residual < 1e-10 && p.tau_norm < 1e-8);
            let s = sample_field(&path, &params, &Vector3::from(p.location)).unwrap();
            assert!(s.classify(&Tolerances::default()).in_c);
        }
    }

    #[test]
    fn grid_must_have_two_points() {
        let r = find_singular_points(
            &builtin_helix(),
            &FieldParams::new(1.0, 1.0).unwrap(),
            &Aabb::cube(-1.0, 1.0).unwrap(),
            1,
        );
        assert!(r.is_err());
    }
}
