//! Geodesic integration on implicit surfaces, Jacobi fields along geodesics,
//! and conjugate-point / Morse-index reports.
//!
//! The geodesic equation in ambient coordinates is
//! `x'' = λ∇Φ(x)` with `λ = −(x'ᵀ H_Φ x')/‖∇Φ‖²`; a classical 4th-order
//! one-step method integrates it with per-step projection of the position
//! onto `{Φ=0}` and of the velocity onto the tangent plane (renormalized).

use crate::sampling::DirectionPlan;
use crate::surfaces::SurfaceSpec;
use crate::{Error, Result, Vec3};

/// Default integrator step relative to the surface scale.
pub fn default_step(spec: &SurfaceSpec) -> f64 {
    1e-3 * spec.scale()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PathSample {
    pub t: f64,
    pub x: Vec3,
    pub v: Vec3,
}

/// An arclength-parametrized geodesic trajectory.
#[derive(Debug, Clone)]
pub struct GeodesicPath {
    pub start: Vec3,
    pub direction: Vec3,
    pub length: f64,
    pub samples: Vec<PathSample>,
    /// Max over steps of `|‖v‖ − 1|` before renormalization.
    pub speed_drift: f64,
}

impl GeodesicPath {
    pub fn endpoint(&self) -> PathSample {
        *self.samples.last().expect("path has at least one sample")
    }

    fn step_size(&self) -> f64 {
        if self.samples.len() < 2 {
            0.0
        } else {
            self.samples[1].t - self.samples[0].t
        }
    }

    /// State at arclength `t`, re-integrated from the nearest stored node so
    /// accuracy matches the integrator order rather than linear interpolation.
    pub fn eval_at(&self, spec: &SurfaceSpec, t: f64) -> Result<(Vec3, Vec3)> {
        let t = t.clamp(0.0, self.length);
        let h = self.step_size();
        if h == 0.0 {
            let s = self.samples[0];
            return Ok((s.x, s.v));
        }
        let i = ((t / h) as usize).min(self.samples.len() - 1);
        let node = self.samples[i];
        let dt = t - node.t;
        if dt.abs() < 1e-15 {
            return Ok((node.x, node.v));
        }
        let (x, v) = rk4_step(spec, node.x, node.v, dt)?;
        let x = reproject(spec, x)?;
        let v = retangent(spec, x, v)?;
        Ok((x, v))
    }
}

fn geodesic_rhs(spec: &SurfaceSpec, x: Vec3, v: Vec3) -> Result<(Vec3, Vec3)> {
    let g = spec.grad(x);
    let gn2 = g.norm_squared();
    if gn2.sqrt() < spec.grad_floor() {
        return Err(Error::DegenerateGradient(x.x, x.y, x.z));
    }
    let lambda = -v.dot(&(spec.hess(x) * v)) / gn2;
    Ok((v, lambda * g))
}

fn rk4_step(spec: &SurfaceSpec, x: Vec3, v: Vec3, h: f64) -> Result<(Vec3, Vec3)> {
    let (k1x, k1v) = geodesic_rhs(spec, x, v)?;
    let (k2x, k2v) = geodesic_rhs(spec, x + 0.5 * h * k1x, v + 0.5 * h * k1v)?;
    let (k3x, k3v) = geodesic_rhs(spec, x + 0.5 * h * k2x, v + 0.5 * h * k2v)?;
    let (k4x, k4v) = geodesic_rhs(spec, x + h * k3x, v + h * k3v)?;
    Ok((
        x + (h / 6.0) * (k1x + 2.0 * k2x + 2.0 * k3x + k4x),
        v + (h / 6.0) * (k1v + 2.0 * k2v + 2.0 * k3v + k4v),
    ))
}

/// Cheap post-step projection: a couple of Newton steps along ∇Φ suffice
/// because the step leaves `|Φ|` at the local truncation scale.
fn reproject(spec: &SurfaceSpec, mut x: Vec3) -> Result<Vec3> {
    for _ in 0..3 {
        let f = spec.phi(x);
        let g = spec.grad(x);
        let gn2 = g.norm_squared();
        if gn2.sqrt() < spec.grad_floor() {
            return Err(Error::DegenerateGradient(x.x, x.y, x.z));
        }
        x -= g * (f / gn2);
        if spec.residual(x) <= 1e-13 * spec.scale() {
            break;
        }
    }
    Ok(x)
}

fn retangent(spec: &SurfaceSpec, x: Vec3, v: Vec3) -> Result<Vec3> {
    let n = spec.unit_normal(x)?;
    let t = v - n * v.dot(&n);
    let tn = t.norm();
    if tn < 1e-14 {
        return Err(Error::NonConvergence(": velocity collapsed onto the normal".into()));
    }
    Ok(t / tn)
}

/// Integrate the unit-speed geodesic from `(p, v)` for the given arclength.
pub fn shoot(spec: &SurfaceSpec, p: Vec3, v: Vec3, length: f64, step: f64) -> Result<GeodesicPath> {
    if !(length >= 0.0 && length.is_finite()) {
        return Err(Error::InvalidInput(format!("length must be nonnegative, got {length}")));
    }
    if !(step > 0.0 && step.is_finite()) {
        return Err(Error::InvalidInput(format!("step must be positive, got {step}")));
    }
    if spec.residual(p) > 1e-8 * spec.scale() {
        return Err(Error::InvalidInput(format!(
            "start point off surface: residual {:.3e}",
            spec.residual(p)
        )));
    }
    if (v.norm() - 1.0).abs() > 1e-10 {
        return Err(Error::InvalidInput(format!("direction must be unit length, got ‖v‖ = {}", v.norm())));
    }
    let n = spec.unit_normal(p)?;
    if v.dot(&n).abs() > 1e-8 {
        return Err(Error::InvalidInput(format!("direction not tangent: v·n = {:.3e}", v.dot(&n))));
    }

    let nsteps = (length / step).ceil().max(1.0) as usize;
    let h = if length > 0.0 { length / nsteps as f64 } else { 0.0 };
    let mut samples = Vec::with_capacity(nsteps + 1);
    samples.push(PathSample { t: 0.0, x: p, v });
    let mut x = p;
    let mut vel = v;
    let mut drift: f64 = 0.0;
    if length > 0.0 {
        for i in 1..=nsteps {
            let (nx, nv) = rk4_step(spec, x, vel, h)?;
            drift = drift.max((nv.norm() - 1.0).abs());
            x = reproject(spec, nx)?;
            vel = retangent(spec, x, nv)?;
            samples.push(PathSample { t: i as f64 * h, x, v: vel });
        }
    }
    let bound = 1e-8 * length.max(1.0);
    if drift > bound {
        return Err(Error::DriftExceeded { drift, bound });
    }
    Ok(GeodesicPath { start: p, direction: v, length, samples, speed_drift: drift })
}

/// Conjugate times and Morse index of a geodesic segment.
#[derive(Debug, Clone)]
pub struct IndexReport {
    /// Zeros of the Jacobi field in `(0, length)`, each of multiplicity one.
    pub conjugate_times: Vec<f64>,
    pub index: usize,
    /// Parameters where `|J|` dips near zero without a sign change; possible
    /// tangential (double) zeros that desk tolerances cannot resolve.
    pub near_tangencies: Vec<f64>,
}

#[derive(Clone, Copy)]
struct JacobiState {
    x: Vec3,
    v: Vec3,
    j: f64,
    jp: f64,
}

fn jacobi_rhs(spec: &SurfaceSpec, s: JacobiState) -> Result<(Vec3, Vec3, f64, f64)> {
    let (dx, dv) = geodesic_rhs(spec, s.x, s.v)?;
    let k = spec.gauss_curvature(s.x)?;
    Ok((dx, dv, s.jp, -k * s.j))
}

fn jacobi_step(spec: &SurfaceSpec, s: JacobiState, h: f64) -> Result<JacobiState> {
    let k1 = jacobi_rhs(spec, s)?;
    let mid1 = JacobiState { x: s.x + 0.5 * h * k1.0, v: s.v + 0.5 * h * k1.1, j: s.j + 0.5 * h * k1.2, jp: s.jp + 0.5 * h * k1.3 };
    let k2 = jacobi_rhs(spec, mid1)?;
    let mid2 = JacobiState { x: s.x + 0.5 * h * k2.0, v: s.v + 0.5 * h * k2.1, j: s.j + 0.5 * h * k2.2, jp: s.jp + 0.5 * h * k2.3 };
    let k3 = jacobi_rhs(spec, mid2)?;
    let end = JacobiState { x: s.x + h * k3.0, v: s.v + h * k3.1, j: s.j + h * k3.2, jp: s.jp + h * k3.3 };
    let k4 = jacobi_rhs(spec, end)?;
    let mut out = JacobiState {
        x: s.x + (h / 6.0) * (k1.0 + 2.0 * k2.0 + 2.0 * k3.0 + k4.0),
        v: s.v + (h / 6.0) * (k1.1 + 2.0 * k2.1 + 2.0 * k3.1 + k4.1),
        j: s.j + (h / 6.0) * (k1.2 + 2.0 * k2.2 + 2.0 * k3.2 + k4.2),
        jp: s.jp + (h / 6.0) * (k1.3 + 2.0 * k2.3 + 2.0 * k3.3 + k4.3),
    };
    out.x = reproject(spec, out.x)?;
    out.v = retangent(spec, out.x, out.v)?;
    Ok(out)
}

/// Integrate the scalar Jacobi equation `J'' + K(γ(t))·J = 0`, `J(0)=0`,
/// `J'(0)=1`, along the geodesic and report its interior zeros.
pub fn jacobi_index(spec: &SurfaceSpec, path: &GeodesicPath) -> Result<IndexReport> {
    let step = if path.samples.len() > 1 {
        path.samples[1].t - path.samples[0].t
    } else {
        default_step(spec)
    };
    let mut state = JacobiState { x: path.start, v: path.direction, j: 0.0, jp: 1.0 };
    let mut nodes: Vec<(f64, JacobiState)> = vec![(0.0, state)];
    let nsteps = if path.length > 0.0 { (path.length / step).round().max(1.0) as usize } else { 0 };
    let h = if nsteps > 0 { path.length / nsteps as f64 } else { 0.0 };
    for i in 1..=nsteps {
        state = jacobi_step(spec, state, h)?;
        nodes.push((i as f64 * h, state));
    }

    let mut conjugate_times = Vec::new();
    let mut near_tangencies = Vec::new();
    let mut jmax: f64 = 0.0;
    for w in nodes.windows(2) {
        let (t0, s0) = w[0];
        let (t1, s1) = w[1];
        jmax = jmax.max(s0.j.abs());
        if s0.j == 0.0 && t0 > 0.0 {
            conjugate_times.push(t0);
            continue;
        }
        if s0.j * s1.j < 0.0 {
            // bisection on the substep, re-integrating from the left node
            let mut lo = 0.0;
            let mut hi = t1 - t0;
            let mut flo = s0.j;
            for _ in 0..60 {
                if hi - lo <= 1e-9 {
                    break;
                }
                let mid = 0.5 * (lo + hi);
                let jm = jacobi_step(spec, s0, mid)?.j;
                if jm == 0.0 {
                    lo = mid;
                    hi = mid;
                    break;
                }
                if flo * jm < 0.0 {
                    hi = mid;
                } else {
                    lo = mid;
                    flo = jm;
                }
            }
            let t = t0 + 0.5 * (lo + hi);
            if t > 1e-12 && t < path.length - 1e-12 {
                conjugate_times.push(t);
            }
        }
    }
    // |J| dips near zero without sign change: flag as possible tangency
    for i in 1..nodes.len().saturating_sub(1) {
        let (t, s) = nodes[i];
        let prev = nodes[i - 1].1.j.abs();
        let next = nodes[i + 1].1.j.abs();
        let here = s.j.abs();
        if here < prev && here < next && here < 1e-6 * jmax.max(1e-12) {
            let same_sign = nodes[i - 1].1.j * nodes[i + 1].1.j > 0.0;
            if same_sign {
                near_tangencies.push(t);
            }
        }
    }
    let index = conjugate_times.len();
    Ok(IndexReport { conjugate_times, index, near_tangencies })
}

/// First conjugate time along `(p, v)`, or `None` if none occurs within
/// `max_length`.
pub fn first_conjugate_time(spec: &SurfaceSpec, p: Vec3, v: Vec3, max_length: f64, step: f64) -> Result<Option<f64>> {
    let mut state = JacobiState { x: p, v, j: 0.0, jp: 1.0 };
    let nsteps = (max_length / step).ceil() as usize;
    let h = max_length / nsteps as f64;
    let mut t = 0.0;
    for _ in 0..nsteps {
        let next = jacobi_step(spec, state, h)?;
        if state.j > 0.0 && next.j <= 0.0 {
            let mut lo = 0.0;
            let mut hi = h;
            let mut flo = state.j;
            for _ in 0..60 {
                if hi - lo <= 1e-10 {
                    break;
                }
                let mid = 0.5 * (lo + hi);
                let jm = jacobi_step(spec, state, mid)?.j;
                if flo * jm <= 0.0 {
                    hi = mid;
                } else {
                    lo = mid;
                    flo = jm;
                }
            }
            return Ok(Some(t + 0.5 * (lo + hi)));
        }
        state = next;
        t += h;
    }
    Ok(None)
}

/// Minimum first conjugate time over a sampling plan of `(point, direction)`
/// pairs. Directions with no conjugate point inside the plan's length budget
/// contribute nothing; the result is `+∞` if none is found at all.
pub fn conjugate_radius_estimate(spec: &SurfaceSpec, plan: &DirectionPlan, step: f64) -> Result<f64> {
    if plan.pairs.is_empty() {
        return Err(Error::InvalidInput("empty direction sampling plan".into()));
    }
    let mut best = f64::INFINITY;
    for &(p, v) in &plan.pairs {
        if let Some(t) = first_conjugate_time(spec, p, v, plan.max_length, step)? {
            best = best.min(t);
        }
    }
    Ok(best)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quad::ellipse_perimeter;
    use crate::surfaces::{project_to_surface, SurfaceSpec};
    use approx::assert_relative_eq;
    use std::f64::consts::PI;

    fn sphere1() -> SurfaceSpec {
        SurfaceSpec::sphere(1.0).unwrap()
    }

    #[test]
    fn great_circle_half_turn() {
        let s = sphere1();
        let path = shoot(&s, Vec3::x(), Vec3::y(), PI, 1e-3).unwrap();
        let end = path.endpoint();
        assert!((end.x - Vec3::new(-1.0, 0.0, 0.0)).norm() < 1e-6);
    }

    #[test]
    fn great_circle_closes() {
        let s = sphere1();
        let path = shoot(&s, Vec3::x(), Vec3::y(), 2.0 * PI, 1e-3).unwrap();
        let end = path.endpoint();
        assert!((end.x - Vec3::x()).norm() < 1e-6);
        assert!((end.v - Vec3::y()).norm() < 1e-6);
    }

    #[test]
    fn oblate_meridian_half_length_reaches_antipode() {
        let ob = SurfaceSpec::oblate(0.8).unwrap();
        let half = ellipse_perimeter(1.0, 0.8) / 2.0;
        let path = shoot(&ob, Vec3::x(), Vec3::z(), half, 1e-3).unwrap();
        let end = path.endpoint();
        assert!((end.x - Vec3::new(-1.0, 0.0, 0.0)).norm() < 1e-5, "endpoint {:?}", end.x);
    }

    #[test]
    fn speed_drift_stays_tiny() {
        let tri = SurfaceSpec::triaxial(1.0, 1.05, 1.1).unwrap();
        let p = project_to_surface(&tri, Vec3::new(0.3, 0.9, 0.4)).unwrap();
        let v = crate::surfaces::tangent_project(&tri, p, Vec3::new(-0.2, 0.5, 0.8)).unwrap().normalize();
        let path = shoot(&tri, p, v, 10.0, 1e-3).unwrap();
        assert!(path.speed_drift <= 1e-8 * 10.0, "drift {:.3e}", path.speed_drift);
        for s in &path.samples {
            assert!((s.v.norm() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn time_symmetry() {
        let ob = SurfaceSpec::oblate(0.8).unwrap();
        let p = project_to_surface(&ob, Vec3::new(0.5, 0.5, 0.5)).unwrap();
        let v = crate::surfaces::tangent_project(&ob, p, Vec3::new(0.1, -0.4, 0.6)).unwrap().normalize();
        let fwd = shoot(&ob, p, v, 2.0, 1e-3).unwrap();
        let end = fwd.endpoint();
        let back = shoot(&ob, end.x, -end.v, 2.0, 1e-3).unwrap();
        let n = fwd.samples.len();
        for (i, s) in back.samples.iter().enumerate() {
            let mirror = fwd.samples[n - 1 - i];
            assert!((s.x - mirror.x).norm() < 1e-6, "sample {i} diverged");
        }
    }

    #[test]
    fn fourth_order_step_halving() {
        let s = sphere1();
        let exact = |t: f64| Vec3::new(t.cos(), t.sin(), 0.0);
        let len = 2.0;
        let errs: Vec<f64> = [4e-3, 2e-3, 1e-3]
            .iter()
            .map(|&h| {
                let p = shoot(&s, Vec3::x(), Vec3::y(), len, h).unwrap();
                (p.endpoint().x - exact(len)).norm()
            })
            .collect();
        assert!(errs[0] / errs[1] >= 8.0, "ratio {}", errs[0] / errs[1]);
        assert!(errs[1] / errs[2] >= 8.0, "ratio {}", errs[1] / errs[2]);
    }

    #[test]
    fn eval_at_matches_direct_shoot() {
        let ob = SurfaceSpec::oblate(0.8).unwrap();
        let path = shoot(&ob, Vec3::x(), Vec3::z(), 2.0, 1e-3).unwrap();
        let (x, v) = path.eval_at(&ob, 1.234567).unwrap();
        let direct = shoot(&ob, Vec3::x(), Vec3::z(), 1.234567, 1e-3).unwrap();
        assert!((x - direct.endpoint().x).norm() < 1e-9);
        assert!((v - direct.endpoint().v).norm() < 1e-9);
    }

    #[test]
    fn sphere_conjugate_points() {
        let s = sphere1();
        let short = shoot(&s, Vec3::x(), Vec3::y(), 2.5, 1e-3).unwrap();
        let r = jacobi_index(&s, &short).unwrap();
        assert_eq!(r.index, 0);
        assert!(r.conjugate_times.is_empty());

        let medium = shoot(&s, Vec3::x(), Vec3::y(), 3.2, 1e-3).unwrap();
        let r = jacobi_index(&s, &medium).unwrap();
        assert_eq!(r.index, 1);
        assert_relative_eq!(r.conjugate_times[0], PI, epsilon = 1e-7);

        let long = shoot(&s, Vec3::x(), Vec3::y(), 7.0, 1e-3).unwrap();
        let r = jacobi_index(&s, &long).unwrap();
        assert_eq!(r.index, 2);
        assert_relative_eq!(r.conjugate_times[0], PI, epsilon = 1e-7);
        assert_relative_eq!(r.conjugate_times[1], 2.0 * PI, epsilon = 1e-6);
    }

    #[test]
    fn oblate_equator_conjugate_times() {
        // K ≡ 1/c² along the equator, so J = sin(t/c)·c has zeros at kπc... with
        // c = 0.8 the first two zeros π·0.8·? — K = 1.5625, ω = 1.25: zeros at
        // kπ/1.25 = 2.513, 5.027; both lie inside length 2π.
        let ob = SurfaceSpec::oblate(0.8).unwrap();
        let eq = shoot(&ob, Vec3::x(), Vec3::y(), 2.0 * PI, 1e-3).unwrap();
        let r = jacobi_index(&ob, &eq).unwrap();
        assert_eq!(r.index, 2);
        assert_relative_eq!(r.conjugate_times[0], PI / 1.25, epsilon = 1e-6);
        assert_relative_eq!(r.conjugate_times[1], 2.0 * PI / 1.25, epsilon = 1e-6);
    }

    #[test]
    fn conjugate_radius_round_spheres() {
        for (r, tol) in [(1.0, 1e-3), (2.0, 1e-2)] {
            let s = SurfaceSpec::sphere(r).unwrap();
            let plan = crate::sampling::direction_plan(&s, 8, 4.0 * PI * r, 7).unwrap();
            let est = conjugate_radius_estimate(&s, &plan, 1e-3 * r).unwrap();
            assert_relative_eq!(est, PI * r, epsilon = tol);
        }
    }

    #[test]
    fn conjugate_radius_oblate_below_pi() {
        let ob = SurfaceSpec::oblate(0.8).unwrap();
        let plan = crate::sampling::direction_plan(&ob, 16, 8.0, 11).unwrap();
        let est = conjugate_radius_estimate(&ob, &plan, 1e-3).unwrap();
        assert!(est < PI, "estimate {est}");
        // K ≤ 1/c² bounds the conjugate time below by πc
        assert!(est > PI * 0.8 - 1e-3, "estimate {est}");
    }

    #[test]
    fn shoot_rejects_bad_inputs() {
        let s = sphere1();
        assert!(shoot(&s, Vec3::new(2.0, 0.0, 0.0), Vec3::y(), 1.0, 1e-3).is_err());
        assert!(shoot(&s, Vec3::x(), Vec3::new(0.0, 2.0, 0.0), 1.0, 1e-3).is_err());
        assert!(shoot(&s, Vec3::x(), Vec3::x(), 1.0, 1e-3).is_err());
    }
}
