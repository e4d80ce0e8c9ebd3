//! Intrinsic distances, cut times, injectivity radius and diameter.
//!
//! Distances are two-tier: a graph oracle on the surface mesh provides the
//! branch and a certified upper bound, then a shooting solver for the
//! two-point boundary value problem refines the value. Shooting alone can
//! converge to the wrong branch; the oracle alone overshoots by the lattice
//! stretch of the mesh. Together they bracket the truth.

use crate::flow::{conjugate_radius_estimate, default_step, shoot, GeodesicPath};
use crate::quad::ellipse_perimeter;
use crate::sampling::{direction_plan, fibonacci_points, DirectionPlan};
use crate::surfaces::{
    build_mesh, intrinsic_segment_estimate, project_to_surface, tangent_project, DijkstraField,
    SurfaceKind, SurfaceMesh, SurfaceSpec,
};
use crate::{Error, Result, Vec3};
use rayon::prelude::*;
use serde::Serialize;
use std::collections::HashMap;
use std::sync::{Arc, Mutex};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum DistanceMethod {
    MeshOracle,
    ShootingRefined,
}

/// A distance value with provenance and a certified bracket.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct DistanceResult {
    pub value: f64,
    pub method: DistanceMethod,
    pub lower_bound: f64,
    pub upper_bound: f64,
}

/// Graph distance between two mesh vertices. The value is an upper bound on
/// the true intrinsic distance; the lower bound divides out the mesh's
/// measured lattice stretch.
pub fn mesh_distance(mesh: &SurfaceMesh, vi: u32, vj: u32) -> Result<DistanceResult> {
    let n = mesh.vertex_count() as u32;
    if vi >= n || vj >= n {
        return Err(Error::InvalidInput(format!("vertex index out of range ({vi}, {vj})")));
    }
    if vi == vj {
        return Ok(DistanceResult { value: 0.0, method: DistanceMethod::MeshOracle, lower_bound: 0.0, upper_bound: 0.0 });
    }
    let field = mesh.dijkstra(vi);
    let d = field.dist[vj as usize];
    if !d.is_finite() {
        return Err(Error::Disconnected);
    }
    Ok(DistanceResult {
        value: d,
        method: DistanceMethod::MeshOracle,
        lower_bound: d / (1.0 + mesh.distortion),
        upper_bound: d,
    })
}

/// Where a geodesic first stops minimizing, with the bisection bracket.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct CutTimeSample {
    pub base: [f64; 3],
    pub direction: [f64; 3],
    pub cut_time: f64,
    pub bracket: (f64, f64),
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct CutStats {
    pub min: f64,
    pub max: f64,
    pub mean: f64,
    pub count: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum BlaschkeVerdict {
    Blaschke,
    NotBlaschke,
    Inconclusive,
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct MeshInfo {
    pub h: f64,
    pub vertices: usize,
    pub distortion: f64,
}

/// Summary of a diameter / injectivity-radius scan.
#[derive(Debug, Clone, Serialize)]
pub struct ScanReport {
    pub surface: String,
    pub diameter_est: f64,
    pub inj_est: f64,
    pub cut_times: CutStats,
    pub blaschke_verdict: BlaschkeVerdict,
    pub tol: f64,
    pub mesh: MeshInfo,
}

#[derive(Debug, Clone)]
pub struct EngineConfig {
    /// Integrator step for all shooting.
    pub step: f64,
    /// Ambient miss tolerance for BVP convergence.
    pub bvp_miss_tol: f64,
    pub bvp_max_iters: usize,
    /// Curve-straightening passes on the oracle path before shooting.
    pub shorten_passes: usize,
    /// Default cut-time bisection tolerance.
    pub cut_tol: f64,
}

impl EngineConfig {
    fn for_spec(spec: &SurfaceSpec) -> Self {
        EngineConfig {
            step: default_step(spec),
            bvp_miss_tol: 1e-9 * spec.scale(),
            bvp_max_iters: 24,
            shorten_passes: 40,
            cut_tol: 1e-3 * spec.scale(),
        }
    }
}

/// Distance oracle for one surface: mesh plus shooting refinement.
pub struct DistanceEngine {
    spec: SurfaceSpec,
    mesh: SurfaceMesh,
    config: EngineConfig,
    fields: Mutex<HashMap<u32, Arc<DijkstraField>>>,
}

impl DistanceEngine {
    pub fn new(spec: SurfaceSpec, h: f64) -> Result<Self> {
        let mesh = build_mesh(&spec, h)?;
        let config = EngineConfig::for_spec(&spec);
        Ok(Self { spec, mesh, config, fields: Mutex::new(HashMap::new()) })
    }

    pub fn spec(&self) -> &SurfaceSpec {
        &self.spec
    }

    pub fn mesh(&self) -> &SurfaceMesh {
        &self.mesh
    }

    pub fn config(&self) -> &EngineConfig {
        &self.config
    }

    pub fn set_step(&mut self, step: f64) {
        self.config.step = step;
    }

    fn field(&self, src: u32) -> Arc<DijkstraField> {
        let mut cache = self.fields.lock().unwrap();
        if cache.len() > 512 {
            cache.clear();
        }
        cache.entry(src).or_insert_with(|| Arc::new(self.mesh.dijkstra(src))).clone()
    }

    /// Intrinsic distance between two surface points.
    ///
    /// Seeds a direction from the mesh shortest path, straightens it, then
    /// solves the two-point BVP by shooting. Falls back to the mesh oracle
    /// value when shooting does not converge; the `method` flag says which.
    pub fn distance(&self, p: Vec3, q: Vec3) -> Result<DistanceResult> {
        let scale = self.spec.scale();
        if (p - q).norm() < 1e-12 * scale {
            return Ok(DistanceResult { value: 0.0, method: DistanceMethod::ShootingRefined, lower_bound: 0.0, upper_bound: 0.0 });
        }
        for (name, x) in [("p", p), ("q", q)] {
            if self.spec.residual(x) > 1e-8 * scale {
                return Err(Error::InvalidInput(format!("{name} is off the surface (residual {:.3e})", self.spec.residual(x))));
            }
        }
        let vi = self.mesh.nearest_vertex(p);
        let vj = self.mesh.nearest_vertex(q);
        let field = self.field(vi);
        let (mesh_value, seed) = self.oracle_path(&field, p, q, vi, vj)?;
        let lower = mesh_value / (1.0 + self.mesh.distortion);
        let upper = mesh_value;
        let accept = mesh_value * (1.0 + 1e-8) + 1e-9;

        // A query shorter than the hazard length has a unique nearby branch;
        // longer queries approach the cut locus, where several launch angles
        // nearly connect and the graph tie-break is unreliable. There the full
        // angle fan is scanned for every connecting branch.
        let hazard = mesh_value > 1.2 * scale;
        let polyline = self.straighten(seed)?;
        let best = if hazard {
            self.fan_branches(p, q, &polyline)?.into_iter().reduce(f64::min)
        } else {
            self.seeded_branch(p, q, &polyline).ok()
        };

        match best {
            Some(t) if t <= accept => Ok(DistanceResult {
                value: t,
                method: DistanceMethod::ShootingRefined,
                lower_bound: lower.min(t),
                upper_bound: upper.max(t),
            }),
            _ => Ok(DistanceResult { value: mesh_value, method: DistanceMethod::MeshOracle, lower_bound: lower, upper_bound: upper }),
        }
    }

    /// Mesh-oracle distance between arbitrary surface points (no shooting).
    pub fn mesh_distance_points(&self, p: Vec3, q: Vec3) -> Result<DistanceResult> {
        if (p - q).norm() < 1e-14 * self.spec.scale() {
            return Ok(DistanceResult { value: 0.0, method: DistanceMethod::MeshOracle, lower_bound: 0.0, upper_bound: 0.0 });
        }
        let vi = self.mesh.nearest_vertex(p);
        let vj = self.mesh.nearest_vertex(q);
        let field = self.field(vi);
        let (value, _) = self.oracle_path(&field, p, q, vi, vj)?;
        Ok(DistanceResult {
            value,
            method: DistanceMethod::MeshOracle,
            lower_bound: value / (1.0 + self.mesh.distortion),
            upper_bound: value,
        })
    }

    /// Graph value via `p → vi ⇝ vj → q` plus the vertex polyline.
    fn oracle_path(&self, field: &DijkstraField, p: Vec3, q: Vec3, vi: u32, vj: u32) -> Result<(f64, Vec<Vec3>)> {
        let graph = field.dist[vj as usize];
        if !graph.is_finite() {
            return Err(Error::Disconnected);
        }
        let verts = self.mesh.path_to(field, vj).ok_or(Error::Disconnected)?;
        let stub_in = intrinsic_segment_estimate(&self.spec, p, self.mesh.vertices[vi as usize])?;
        let stub_out = intrinsic_segment_estimate(&self.spec, self.mesh.vertices[vj as usize], q)?;
        let mut pts = Vec::with_capacity(verts.len() + 2);
        pts.push(p);
        for v in verts {
            let x = self.mesh.vertices[v as usize];
            if (x - *pts.last().unwrap()).norm() > 1e-9 * self.spec.scale() {
                pts.push(x);
            }
        }
        if (q - *pts.last().unwrap()).norm() > 1e-9 * self.spec.scale() {
            pts.push(q);
        }
        Ok((stub_in + graph + stub_out, pts))
    }

    /// Fixed-endpoint midpoint straightening of a surface polyline.
    ///
    /// Midpoint relaxation damps short wavelengths fast but long ones at
    /// O(N²) passes, so a jagged mesh route would keep its global bend for
    /// any affordable budget. Multigrid fixes that: relax a coarse copy where
    /// the bend IS short-wavelength, then subdivide and relax again.
    fn straighten(&self, pts: Vec<Vec3>) -> Result<Vec<Vec3>> {
        let scale = self.spec.scale();
        let tol = 1e-9 * scale;
        let total: f64 = pts.windows(2).map(|w| (w[1] - w[0]).norm()).sum();
        let target = 0.75 * self.mesh.h;
        let mut level_seg = (total / 6.0).max(target);
        let mut cur = resample_polyline(&pts, level_seg, 400);
        let interior = cur.len().saturating_sub(2);
        for p in cur.iter_mut().skip(1).take(interior) {
            *p = project_to_surface(&self.spec, *p)?;
        }
        let mut coarsest = true;
        loop {
            // the coarsest level owns the slow global modes (including the
            // near-degenerate branch families at antipodal range): give it a
            // much larger budget, it has only a handful of points
            let budget = if coarsest { 8 * self.config.shorten_passes } else { self.config.shorten_passes };
            coarsest = false;
            for pass in 0..budget {
                let mut movement = 0.0_f64;
                let parity = pass % 2;
                let snapshot = cur.clone();
                for i in 1..cur.len() - 1 {
                    if i % 2 != parity {
                        continue;
                    }
                    let mid = project_to_surface(&self.spec, 0.5 * (snapshot[i - 1] + snapshot[i + 1]))?;
                    movement = movement.max((mid - cur[i]).norm());
                    cur[i] = mid;
                }
                if movement < tol {
                    break;
                }
            }
            if level_seg <= target || cur.len() >= 380 {
                return Ok(cur);
            }
            level_seg *= 0.5;
            let mut fine = Vec::with_capacity(cur.len() * 2);
            fine.push(cur[0]);
            for w in cur.windows(2) {
                fine.push(project_to_surface(&self.spec, 0.5 * (w[0] + w[1]))?);
                fine.push(w[1]);
            }
            cur = fine;
        }
    }

    fn polyline_length(&self, pts: &[Vec3]) -> Result<f64> {
        let mut sum = 0.0;
        for w in pts.windows(2) {
            sum += intrinsic_segment_estimate(&self.spec, w[0], w[1])?;
        }
        Ok(sum)
    }

    /// Launch-angle frame and closest-approach probe for the shooting BVP.
    ///
    /// `probe(θ)` shoots from `p` at angle `θ` in the seed frame and returns
    /// `(t, |miss|, transverse miss)` at the trajectory's closest approach to
    /// `q`: Newton on the arclength zeros the longitudinal miss for free from
    /// the stored trajectory, so only the transverse component is left as a
    /// scalar equation in `θ`.
    fn bvp_frame(&self, p: Vec3, q: Vec3, polyline: &[Vec3]) -> Result<(Vec3, Vec3, f64)> {
        let scale = self.spec.scale();
        let seed_len = self.polyline_length(polyline)?;
        if seed_len < 1e-12 * scale {
            return Err(Error::BvpNonConvergence("degenerate seed".into()));
        }
        let first = polyline.get(1).copied().unwrap_or(q);
        let chord = tangent_project(&self.spec, p, first - p)?;
        if chord.norm() < 1e-12 * scale {
            return Err(Error::BvpNonConvergence("degenerate seed direction".into()));
        }
        let e1 = chord.normalize();
        let e2 = self.spec.unit_normal(p)?.cross(&e1);
        Ok((e1, e2, seed_len))
    }

    fn bvp_probe(&self, p: Vec3, q: Vec3, e1: Vec3, e2: Vec3, cap: f64, theta: f64) -> Result<(f64, f64, f64)> {
        let n_q = self.spec.unit_normal(q)?;
        let step = self.config.step;
        let path = shoot(&self.spec, p, theta.cos() * e1 + theta.sin() * e2, cap, step)?;
        let mut t = step;
        let mut best = f64::INFINITY;
        for s in &path.samples {
            let d = (s.x - q).norm_squared();
            if d < best {
                best = d;
                t = s.t;
            }
        }
        for _ in 0..4 {
            let (x, v) = path.eval_at(&self.spec, t)?;
            t = (t - (x - q).dot(&v)).clamp(0.0, cap);
        }
        let (x, v) = path.eval_at(&self.spec, t)?;
        let miss = x - q;
        let w = n_q.cross(&v);
        let wn = w.norm();
        let trans = if wn > 1e-12 { miss.dot(&w) / wn } else { miss.norm() };
        Ok((t, miss.norm(), trans))
    }

    /// Single-branch solve: secant on the launch angle from the seed frame.
    fn seeded_branch(&self, p: Vec3, q: Vec3, polyline: &[Vec3]) -> Result<f64> {
        let (e1, e2, seed_len) = self.bvp_frame(p, q, polyline)?;
        let cap = seed_len * 1.35 + 8.0 * self.config.step;
        let miss_tol = self.config.bvp_miss_tol;
        let mut th0 = 0.0;
        let (t0, m0, mut f0) = self.bvp_probe(p, q, e1, e2, cap, th0)?;
        if m0 <= miss_tol {
            return Ok(t0);
        }
        let mut th1 = 1e-4_f64.copysign(-f0);
        let mut last_m = m0;
        for iter in 0..self.config.bvp_max_iters {
            let (t1, m1, f1) = self.bvp_probe(p, q, e1, e2, cap, th1)?;
            if m1 <= miss_tol {
                return Ok(t1);
            }
            let df = f1 - f0;
            let dth = if df.abs() > 1e-14 {
                (-f1 * (th1 - th0) / df).clamp(-0.25, 0.25)
            } else {
                0.03 * (iter as f64 + 1.0)
            };
            th0 = th1;
            f0 = f1;
            last_m = m1;
            th1 += dth;
            if dth.abs() < 1e-15 {
                break;
            }
        }
        Err(Error::BvpNonConvergence(format!("miss {last_m:.3e} after angle iterations")))
    }

    /// All connecting branches near the cut locus: probe the full launch-angle
    /// circle, then solve each transverse-miss sign change with a safeguarded
    /// secant. Conjugate-degenerate directions where the whole fan nearly
    /// connects are accepted directly once the miss is below tolerance.
    fn fan_branches(&self, p: Vec3, q: Vec3, polyline: &[Vec3]) -> Result<Vec<f64>> {
        let (e1, e2, seed_len) = self.bvp_frame(p, q, polyline)?;
        let cap = seed_len * 1.4 + 8.0 * self.config.step;
        let miss_tol = self.config.bvp_miss_tol;
        const FAN: usize = 8;
        let mut angles = [0.0; FAN];
        let mut probes = Vec::with_capacity(FAN);
        for (k, a) in angles.iter_mut().enumerate() {
            *a = -std::f64::consts::PI + std::f64::consts::TAU * k as f64 / FAN as f64;
            probes.push(self.bvp_probe(p, q, e1, e2, cap, *a)?);
        }
        let mut branches = Vec::new();
        for k in 0..FAN {
            let (ta, ma, fa) = probes[k];
            if ma <= miss_tol {
                branches.push(ta);
                continue;
            }
            let k2 = (k + 1) % FAN;
            let (_, _, fb) = probes[k2];
            if fa * fb < 0.0 {
                let b = angles[k] + std::f64::consts::TAU / FAN as f64;
                if let Some(t) = self.bracketed_branch(p, q, e1, e2, cap, angles[k], fa, b, fb) {
                    branches.push(t);
                }
            }
        }
        Ok(branches)
    }

    /// Illinois-damped regula falsi on the transverse miss inside a
    /// sign-change bracket. Plain false position stagnates here — one
    /// endpoint goes stale and convergence turns one-sided linear — so the
    /// stale endpoint's residual is halved on repeated same-side updates.
    /// A bracket that collapses without the miss closing (an argmin
    /// discontinuity, not a root) is discarded.
    #[allow(clippy::too_many_arguments)]
    fn bracketed_branch(&self, p: Vec3, q: Vec3, e1: Vec3, e2: Vec3, cap: f64, mut a: f64, mut fa: f64, mut b: f64, mut fb: f64) -> Option<f64> {
        let miss_tol = self.config.bvp_miss_tol;
        let mut side = 0i8;
        for _ in 0..60 {
            let mid = if (fb - fa).abs() > 1e-300 {
                let secant = b - fb * (b - a) / (fb - fa);
                if secant > a.min(b) && secant < a.max(b) {
                    secant
                } else {
                    0.5 * (a + b)
                }
            } else {
                0.5 * (a + b)
            };
            let (t, m, f) = self.bvp_probe(p, q, e1, e2, cap, mid).ok()?;
            if m <= miss_tol {
                return Some(t);
            }
            if (b - a).abs() < 1e-13 {
                return None;
            }
            if fa * f < 0.0 {
                b = mid;
                fb = f;
                if side == -1 {
                    fa *= 0.5;
                }
                side = -1;
            } else {
                a = mid;
                fa = f;
                if side == 1 {
                    fb *= 0.5;
                }
                side = 1;
            }
        }
        None
    }

    /// Cut time of the geodesic from `(p, v)`: bisection on
    /// `d(p, γ(t)) ≥ t − tol`.
    pub fn cut_time(&self, p: Vec3, v: Vec3, tol: f64) -> Result<CutTimeSample> {
        let scale = self.spec.scale();
        if !(tol > 0.0) {
            return Err(Error::InvalidInput(format!("cut tolerance must be positive, got {tol}")));
        }
        // The predicate needs refined accuracy: a mesh fallback value can
        // overshoot by the lattice stretch, which dwarfs `tol` near the cut.
        let still_minimizing = |path: &GeodesicPath, t: f64| -> Result<bool> {
            let (x, _) = path.eval_at(&self.spec, t)?;
            let d = self.distance(p, x)?;
            match d.method {
                DistanceMethod::ShootingRefined => Ok(t - d.value <= tol),
                DistanceMethod::MeshOracle => {
                    if t - d.lower_bound <= tol {
                        Ok(true)
                    } else if t - d.upper_bound > tol {
                        Ok(false)
                    } else {
                        Err(Error::BvpNonConvergence(format!(
                            "cut predicate ambiguous at t={t:.6} from p=({:.4},{:.4},{:.4}) v=({:.4},{:.4},{:.4}): oracle bracket [{:.6}, {:.6}]",
                            p.x, p.y, p.z, v.x, v.y, v.z, d.lower_bound, d.upper_bound
                        )))
                    }
                }
            }
        };
        let mut hi = scale;
        let mut path = shoot(&self.spec, p, v, hi, self.config.step)?;
        let mut grow = 0;
        while still_minimizing(&path, hi)? {
            hi *= 1.5;
            grow += 1;
            if grow > 24 {
                return Err(Error::InvalidInput("cut time exceeds the search budget; the surface may be unbounded".into()));
            }
            path = shoot(&self.spec, p, v, hi, self.config.step)?;
        }
        let mut lo = 0.0_f64;
        while hi - lo > tol {
            let mid = 0.5 * (lo + hi);
            if still_minimizing(&path, mid)? {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        Ok(CutTimeSample {
            base: [p.x, p.y, p.z],
            direction: [v.x, v.y, v.z],
            cut_time: 0.5 * (lo + hi),
            bracket: (lo, hi),
        })
    }

    /// Diameter and injectivity-radius scan.
    ///
    /// The injectivity estimate is the minimum of sampled cut times, the
    /// conjugate-radius estimate, and half the shortest known closed geodesic
    /// (Klingenberg's two candidates). The verdict compares it to the
    /// diameter estimate at the given tolerance (default 5e-3 × diameter).
    pub fn scan(&self, n_points: usize, n_directions: usize, tol: Option<f64>, seed: u64) -> Result<ScanReport> {
        if n_points < 2 || n_directions == 0 {
            return Err(Error::InvalidInput("scan needs at least 2 points and 1 direction".into()));
        }
        let diameter_est = self.diameter_estimate(n_points.min(200))?;

        let plan = direction_plan(&self.spec, n_directions, diameter_est + 0.5 * self.spec.scale(), seed)?;
        let cut_samples: Vec<CutTimeSample> = plan
            .pairs
            .par_iter()
            .map(|&(p, v)| self.cut_time(p, v, self.config.cut_tol))
            .collect::<Result<_>>()?;
        let cut_min = cut_samples.iter().map(|s| s.cut_time).fold(f64::INFINITY, f64::min);
        let cut_max = cut_samples.iter().map(|s| s.cut_time).fold(0.0, f64::max);
        let cut_mean = cut_samples.iter().map(|s| s.cut_time).sum::<f64>() / cut_samples.len() as f64;

        let conj = conjugate_radius_estimate(&self.spec, &plan, self.config.step)?;
        let half_closed = self.shortest_known_closed_geodesic().map(|l| 0.5 * l).unwrap_or(f64::INFINITY);
        let inj_est = cut_min.min(conj).min(half_closed);

        let tol_abs = tol.unwrap_or(5e-3 * diameter_est);
        let verdict = if (diameter_est - inj_est).abs() <= tol_abs {
            BlaschkeVerdict::Blaschke
        } else if inj_est < diameter_est - tol_abs {
            BlaschkeVerdict::NotBlaschke
        } else {
            BlaschkeVerdict::Inconclusive
        };
        Ok(ScanReport {
            surface: self.spec.selector(),
            diameter_est,
            inj_est,
            cut_times: CutStats { min: cut_min, max: cut_max, mean: cut_mean, count: cut_samples.len() },
            blaschke_verdict: verdict,
            tol: tol_abs,
            mesh: MeshInfo { h: self.mesh.h, vertices: self.mesh.vertex_count(), distortion: self.mesh.distortion },
        })
    }

    /// All-pairs graph scan over a Fibonacci point set, then local ascent by
    /// resampling around the best pair.
    fn diameter_estimate(&self, n_points: usize) -> Result<f64> {
        let points = fibonacci_points(&self.spec, n_points)?;
        let vids: Vec<u32> = points.iter().map(|&p| self.mesh.nearest_vertex(p)).collect();
        let fields: Vec<Arc<DijkstraField>> = vids.par_iter().map(|&v| Arc::new(self.mesh.dijkstra(v))).collect();
        let mut best_graph = (0.0_f64, 0usize, 0usize);
        for i in 0..vids.len() {
            for j in (i + 1)..vids.len() {
                let d = fields[i].dist[vids[j] as usize];
                if d.is_finite() && d > best_graph.0 {
                    best_graph = (d, i, j);
                }
            }
        }
        let mut p = points[best_graph.1];
        let mut q = points[best_graph.2];
        // Only refined values may enter the maximization: a mesh fallback
        // overshoots by the lattice stretch and would inflate the diameter.
        let refined = |a: Vec3, b: Vec3| -> Result<Option<f64>> {
            let d = self.distance(a, b)?;
            Ok((d.method == DistanceMethod::ShootingRefined).then_some(d.value))
        };
        let mut best = match refined(p, q)? {
            Some(d) => d,
            None => self.mesh_distance_points(p, q)?.lower_bound,
        };

        let golden = std::f64::consts::TAU / ((1.0 + 5.0_f64.sqrt()) / 2.0);
        for &radius in &[0.12, 0.04, 0.012, 0.004, 0.0012, 0.0004] {
            let r = radius * self.spec.scale();
            for side in 0..2 {
                let center = if side == 0 { p } else { q };
                let other = if side == 0 { q } else { p };
                let (e1, e2) = self.spec.tangent_basis(center)?;
                let candidates: Vec<Vec3> = (0..8)
                    .map(|k| {
                        let a = golden * k as f64;
                        project_to_surface(&self.spec, center + r * (a.cos() * e1 + a.sin() * e2))
                    })
                    .collect::<Result<_>>()?;
                let scored: Vec<(Option<f64>, Vec3)> = candidates
                    .par_iter()
                    .map(|&c| Ok((refined(c, other)?, c)))
                    .collect::<Result<_>>()?;
                for (d, c) in scored {
                    if let Some(d) = d {
                        if d > best {
                            best = d;
                            if side == 0 {
                                p = c;
                            } else {
                                q = c;
                            }
                        }
                    }
                }
            }
        }
        Ok(best)
    }

    /// Prime lengths of the coordinate sections, available in closed form for
    /// ellipsoid kinds. Custom surfaces contribute nothing here.
    fn shortest_known_closed_geodesic(&self) -> Option<f64> {
        let ax = self.spec.semiaxes()?;
        let sections = [
            ellipse_perimeter(ax[1], ax[2]),
            ellipse_perimeter(ax[0], ax[2]),
            ellipse_perimeter(ax[0], ax[1]),
        ];
        sections.into_iter().reduce(f64::min)
    }
}

/// Insert points along a polyline so no segment exceeds `target`, capping the
/// total point count.
fn resample_polyline(pts: &[Vec3], target: f64, max_points: usize) -> Vec<Vec3> {
    if pts.len() < 2 {
        return pts.to_vec();
    }
    let mut out = Vec::with_capacity(pts.len() * 2);
    out.push(pts[0]);
    for w in pts.windows(2) {
        let seg = w[1] - w[0];
        let len = seg.norm();
        let pieces = (len / target).ceil().max(1.0) as usize;
        for k in 1..=pieces {
            out.push(w[0] + seg * (k as f64 / pieces as f64));
        }
    }
    if out.len() > max_points {
        let stride = (out.len() as f64 / max_points as f64).ceil() as usize;
        let mut thin: Vec<Vec3> = out.iter().step_by(stride).copied().collect();
        if *thin.last().unwrap() != *out.last().unwrap() {
            thin.push(*out.last().unwrap());
        }
        return thin;
    }
    out
}

/// Convenience plan forwarding for callers that only have an engine.
pub fn scan_direction_plan(engine: &DistanceEngine, n: usize, seed: u64) -> Result<DirectionPlan> {
    direction_plan(engine.spec(), n, 4.0 * engine.spec().scale(), seed)
}

impl SurfaceKind {
    /// True for kinds whose coordinate sections are closed geodesics.
    pub fn is_ellipsoid(&self) -> bool {
        !matches!(self, SurfaceKind::CustomImplicit { .. })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use std::f64::consts::PI;

    fn engine(sel: &str, h: f64) -> DistanceEngine {
        DistanceEngine::new(SurfaceSpec::parse_selector(sel).unwrap(), h).unwrap()
    }

    #[test]
    fn sphere_antipodal_and_unit_angle() {
        let e = engine("sphere:1", 0.1);
        let d = e.distance(Vec3::x(), -Vec3::x()).unwrap();
        assert_eq!(d.method, DistanceMethod::ShootingRefined);
        assert_relative_eq!(d.value, PI, epsilon = 1e-5);

        let q = Vec3::new(1.0_f64.cos(), 1.0_f64.sin(), 0.0);
        let d = e.distance(Vec3::x(), q).unwrap();
        assert_relative_eq!(d.value, 1.0, epsilon = 1e-6);
    }

    #[test]
    fn mesh_oracle_brackets_sphere_antipodal() {
        let e = engine("sphere:1", 0.05);
        let vi = e.mesh().nearest_vertex(Vec3::x());
        let vj = e.mesh().nearest_vertex(-Vec3::x());
        let d = mesh_distance(e.mesh(), vi, vj).unwrap();
        let exact = e.mesh().vertices[vi as usize]
            .dot(&e.mesh().vertices[vj as usize])
            .clamp(-1.0, 1.0)
            .acos();
        assert!(d.value >= exact, "oracle must stay an upper bound: {} < {exact}", d.value);
        assert!(d.value <= exact * 1.05, "oracle too loose: {}", d.value);
        assert!(d.lower_bound <= exact && exact <= d.upper_bound);
    }

    #[test]
    fn mesh_distance_same_vertex_is_zero() {
        let e = engine("sphere:1", 0.1);
        let d = mesh_distance(e.mesh(), 7, 7).unwrap();
        assert_eq!(d.value, 0.0);
    }

    #[test]
    fn oblate_pole_to_pole_matches_quadrature() {
        let e = engine("oblate:0.8", 0.05);
        let half_meridian = ellipse_perimeter(1.0, 0.8) / 2.0;
        let d = e.distance(Vec3::new(0.0, 0.0, 0.8), Vec3::new(0.0, 0.0, -0.8)).unwrap();
        assert_relative_eq!(d.value, half_meridian, epsilon = 2e-4);
        // mesh oracle alone brackets it
        let m = e.mesh_distance_points(Vec3::new(0.0, 0.0, 0.8), Vec3::new(0.0, 0.0, -0.8)).unwrap();
        assert!(m.lower_bound <= half_meridian + 1e-7 && half_meridian <= m.upper_bound + 1e-7);
    }

    #[test]
    fn refined_value_stays_below_oracle() {
        let e = engine("triaxial:1,1.05,1.1", 0.1);
        let p = project_to_surface(e.spec(), Vec3::new(0.9, 0.3, 0.2)).unwrap();
        let q = project_to_surface(e.spec(), Vec3::new(-0.5, 0.7, -0.6)).unwrap();
        let d = e.distance(p, q).unwrap();
        let m = e.mesh_distance_points(p, q).unwrap();
        assert!(d.value <= m.upper_bound + 1e-9);
        assert!(d.lower_bound <= d.value && d.value <= d.upper_bound);
    }

    #[test]
    fn distance_symmetry_refined() {
        let e = engine("oblate:0.8", 0.1);
        let p = project_to_surface(e.spec(), Vec3::new(0.2, 0.9, 0.3)).unwrap();
        let q = project_to_surface(e.spec(), Vec3::new(-0.8, -0.1, -0.4)).unwrap();
        let dpq = e.distance(p, q).unwrap();
        let dqp = e.distance(q, p).unwrap();
        assert!((dpq.value - dqp.value).abs() < 1e-6, "asymmetry {:.3e}", (dpq.value - dqp.value).abs());
    }

    #[test]
    fn triaxial_second_axis_pair_beats_section() {
        // the x=0 section fails to minimize between (0, ±b, 0)
        let e = engine("triaxial:1,1.05,1.1", 0.05);
        let d = e.distance(Vec3::new(0.0, 1.05, 0.0), Vec3::new(0.0, -1.05, 0.0)).unwrap();
        let half_x0 = ellipse_perimeter(1.05, 1.1) / 2.0;
        assert!(
            d.value < half_x0 - 0.1,
            "distance {} should undercut the x=0 half-section {half_x0}",
            d.value
        );
    }

    #[test]
    fn cut_time_round_spheres() {
        for (r, h) in [(1.0, 0.1), (2.0, 0.2)] {
            let e = engine(&format!("sphere:{r}"), h);
            let tol = 1e-3 * r;
            let s = e.cut_time(Vec3::new(r, 0.0, 0.0), Vec3::y(), tol).unwrap();
            assert!((s.cut_time - PI * r).abs() <= 1e-2 * r, "cut {} vs {}", s.cut_time, PI * r);
            assert!(s.bracket.1 - s.bracket.0 <= tol + 1e-12);
        }
    }

    #[test]
    fn cut_time_oblate_equator_stops_early() {
        let e = engine("oblate:0.8", 0.05);
        let s = e.cut_time(Vec3::x(), Vec3::y(), 1e-3).unwrap();
        assert!(s.cut_time < PI, "equatorial cut {} should precede π", s.cut_time);
        assert!(s.cut_time < ellipse_perimeter(1.0, 0.8) / 2.0 + 1e-2);
    }

    #[test]
    fn scan_sphere_is_blaschke() {
        let e = engine("sphere:1", 0.1);
        let r = e.scan(96, 12, None, 11).unwrap();
        assert_relative_eq!(r.diameter_est, PI, epsilon = 1e-3);
        assert!((r.inj_est - PI).abs() <= 1e-2);
        assert_eq!(r.blaschke_verdict, BlaschkeVerdict::Blaschke);
        assert!(r.inj_est <= r.diameter_est + r.tol);
    }

    #[test]
    fn scan_oblate_is_not_blaschke() {
        let e = engine("oblate:0.8", 0.1);
        let r = e.scan(96, 10, None, 13).unwrap();
        let half_meridian = ellipse_perimeter(1.0, 0.8) / 2.0;
        assert_relative_eq!(r.diameter_est, half_meridian, epsilon = 3e-3);
        assert!(r.inj_est < r.diameter_est - r.tol);
        assert_eq!(r.blaschke_verdict, BlaschkeVerdict::NotBlaschke);
    }

    #[test]
    fn triangle_inequality_on_sampled_triples() {
        let e = engine("triaxial:1,1.05,1.1", 0.1);
        let pts = fibonacci_points(e.spec(), 9).unwrap();
        for tri in pts.chunks_exact(3) {
            let ab = e.distance(tri[0], tri[1]).unwrap();
            let bc = e.distance(tri[1], tri[2]).unwrap();
            let ac = e.distance(tri[0], tri[2]).unwrap();
            assert!(ac.value <= ab.value + bc.value + 1e-6);
        }
    }

    #[test]
    fn monotone_mesh_refinement() {
        let e1 = engine("sphere:1", 0.2);
        let e2 = engine("sphere:1", 0.1);
        let p = Vec3::x();
        let q = Vec3::new(-0.6, 0.64, 0.48).normalize();
        let c = e1.mesh_distance_points(p, q).unwrap();
        let f = e2.mesh_distance_points(p, q).unwrap();
        assert!(f.value <= c.value * (1.0 + e1.mesh().distortion));
    }
}
