//! Deterministic sampling plans for points and tangent directions.
//!
//! Plans are fully determined by their counts and seed, so every scan or
//! certification run is reproducible bit for bit.

use crate::surfaces::{project_to_surface, tangent_project, SurfaceSpec};
use crate::{Result, Vec3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// `(point, unit tangent)` pairs plus a length budget for conjugate searches.
#[derive(Debug, Clone)]
pub struct DirectionPlan {
    pub pairs: Vec<(Vec3, Vec3)>,
    pub max_length: f64,
}

/// Fibonacci-sphere point set projected onto the surface.
pub fn fibonacci_points(spec: &SurfaceSpec, n: usize) -> Result<Vec<Vec3>> {
    let golden = (1.0 + 5.0_f64.sqrt()) / 2.0;
    let mut pts = Vec::with_capacity(n);
    for i in 0..n {
        let z = 1.0 - (2.0 * i as f64 + 1.0) / n as f64;
        let r = (1.0 - z * z).max(0.0).sqrt();
        let theta = 2.0 * std::f64::consts::PI * (i as f64 / golden).fract();
        let u = Vec3::new(r * theta.cos(), r * theta.sin(), z);
        let seed = match spec.semiaxes() {
            Some(ax) => Vec3::new(ax[0] * u.x, ax[1] * u.y, ax[2] * u.z),
            None => spec.scale() * u,
        };
        pts.push(project_to_surface(spec, seed)?);
    }
    Ok(pts)
}

/// A seeded plan of `(point, direction)` pairs: Fibonacci base points with a
/// random tangent direction each.
pub fn direction_plan(spec: &SurfaceSpec, n: usize, max_length: f64, seed: u64) -> Result<DirectionPlan> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let points = fibonacci_points(spec, n.max(1))?;
    let mut pairs = Vec::with_capacity(points.len());
    for p in points {
        let raw = Vec3::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
        let t = tangent_project(spec, p, raw)?;
        let v = if t.norm() < 1e-9 {
            let (e1, _) = spec.tangent_basis(p)?;
            e1
        } else {
            t.normalize()
        };
        pairs.push((p, v));
    }
    Ok(DirectionPlan { pairs, max_length })
}

/// Random surface point, seeded.
pub fn random_point(spec: &SurfaceSpec, rng: &mut ChaCha8Rng) -> Result<Vec3> {
    loop {
        let u = Vec3::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
        if u.norm() < 1e-3 {
            continue;
        }
        let dir = u.normalize();
        let seed = match spec.semiaxes() {
            Some(ax) => Vec3::new(ax[0] * dir.x, ax[1] * dir.y, ax[2] * dir.z),
            None => spec.scale() * dir,
        };
        return project_to_surface(spec, seed);
    }
}

/// Random unit tangent at `p`, seeded.
pub fn random_tangent(spec: &SurfaceSpec, p: Vec3, rng: &mut ChaCha8Rng) -> Result<Vec3> {
    let (e1, e2) = spec.tangent_basis(p)?;
    let theta = rng.gen_range(0.0..std::f64::consts::TAU);
    Ok(theta.cos() * e1 + theta.sin() * e2)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fibonacci_points_land_on_surface() {
        let tri = SurfaceSpec::triaxial(1.0, 1.05, 1.1).unwrap();
        let pts = fibonacci_points(&tri, 64).unwrap();
        assert_eq!(pts.len(), 64);
        for p in &pts {
            assert!(tri.residual(*p) < 1e-11);
        }
    }

    #[test]
    fn plans_are_deterministic() {
        let s = SurfaceSpec::sphere(1.0).unwrap();
        let a = direction_plan(&s, 8, 4.0, 42).unwrap();
        let b = direction_plan(&s, 8, 4.0, 42).unwrap();
        for (x, y) in a.pairs.iter().zip(b.pairs.iter()) {
            assert_eq!(x.0, y.0);
            assert_eq!(x.1, y.1);
        }
        let c = direction_plan(&s, 8, 4.0, 43).unwrap();
        assert!(a.pairs.iter().zip(c.pairs.iter()).any(|(x, y)| x.1 != y.1));
    }

    #[test]
    fn tangents_are_unit_and_tangent() {
        let ob = SurfaceSpec::oblate(0.8).unwrap();
        let plan = direction_plan(&ob, 16, 4.0, 3).unwrap();
        for &(p, v) in &plan.pairs {
            assert!((v.norm() - 1.0).abs() < 1e-12);
            let n = ob.unit_normal(p).unwrap();
            assert!(v.dot(&n).abs() < 1e-10);
        }
    }
}
