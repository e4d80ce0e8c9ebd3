//! Implicit surfaces `{Φ = 0}` in 3-space with differential oracles, plus the
//! triangulated meshes that back the graph distance oracle.
//!
//! Surfaces are level sets, never charts: geodesic integration and all
//! projections work in ambient coordinates, so poles and other chart
//! singularities never appear.

use crate::{Error, Mat3, Result, Vec3};
use serde::Deserialize;
use std::collections::HashMap;
use std::sync::{Mutex, OnceLock};

/// One term `coeff · x^px y^py z^pz` of a custom polynomial Φ.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Monomial {
    pub powers: [u32; 3],
    pub coeff: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub enum SurfaceKind {
    Sphere { radius: f64 },
    TriaxialEllipsoid { a: f64, b: f64, c: f64 },
    OblateEllipsoid { c: f64 },
    CustomImplicit { monomials: Vec<Monomial> },
}

/// An implicit surface with evaluable Φ, ∇Φ and H_Φ.
///
/// Built-in kinds use the standard ellipsoid equations:
/// sphere `x²+y²+z²−r²`, oblate `x²+y²+(z/c)²−1`,
/// triaxial `(x/a)²+(y/b)²+(z/c)²−1`.
#[derive(Debug, Clone)]
pub struct SurfaceSpec {
    kind: SurfaceKind,
    scale: f64,
}

impl SurfaceSpec {
    pub fn sphere(radius: f64) -> Result<Self> {
        if !(radius > 0.0 && radius.is_finite()) {
            return Err(Error::InvalidInput(format!("sphere radius must be positive, got {radius}")));
        }
        Ok(Self { kind: SurfaceKind::Sphere { radius }, scale: radius })
    }

    pub fn oblate(c: f64) -> Result<Self> {
        if !(c > 0.0 && c < 1.0) {
            return Err(Error::InvalidInput(format!("oblate parameter must lie in (0,1), got {c}")));
        }
        Ok(Self { kind: SurfaceKind::OblateEllipsoid { c }, scale: 1.0 })
    }

    pub fn triaxial(a: f64, b: f64, c: f64) -> Result<Self> {
        for (name, v) in [("a", a), ("b", b), ("c", c)] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::InvalidInput(format!("triaxial semiaxis {name} must be positive, got {v}")));
            }
        }
        Ok(Self { kind: SurfaceKind::TriaxialEllipsoid { a, b, c }, scale: a.max(b).max(c) })
    }

    /// Custom polynomial level set. `scale_hint` sets the characteristic size
    /// used for tolerances and mesh seeding.
    pub fn custom(monomials: Vec<Monomial>, scale_hint: f64) -> Result<Self> {
        if monomials.is_empty() {
            return Err(Error::InvalidInput("custom surface needs at least one monomial".into()));
        }
        if !(scale_hint > 0.0 && scale_hint.is_finite()) {
            return Err(Error::InvalidInput(format!("scale hint must be positive, got {scale_hint}")));
        }
        Ok(Self { kind: SurfaceKind::CustomImplicit { monomials }, scale: scale_hint })
    }

    pub fn kind(&self) -> &SurfaceKind {
        &self.kind
    }

    /// Characteristic length of the surface (max semiaxis for built-ins).
    pub fn scale(&self) -> f64 {
        self.scale
    }

    /// Floor below which `‖∇Φ‖` counts as degenerate.
    pub fn grad_floor(&self) -> f64 {
        1e-9 * self.scale
    }

    /// Semiaxes `[a, b, c]` for ellipsoid kinds, `None` for custom surfaces.
    pub fn semiaxes(&self) -> Option<[f64; 3]> {
        match self.kind {
            SurfaceKind::Sphere { radius } => Some([radius; 3]),
            SurfaceKind::OblateEllipsoid { c } => Some([1.0, 1.0, c]),
            SurfaceKind::TriaxialEllipsoid { a, b, c } => Some([a, b, c]),
            SurfaceKind::CustomImplicit { .. } => None,
        }
    }

    pub fn phi(&self, p: Vec3) -> f64 {
        match &self.kind {
            SurfaceKind::Sphere { radius } => p.norm_squared() - radius * radius,
            SurfaceKind::OblateEllipsoid { c } => {
                p.x * p.x + p.y * p.y + (p.z / c) * (p.z / c) - 1.0
            }
            SurfaceKind::TriaxialEllipsoid { a, b, c } => {
                (p.x / a) * (p.x / a) + (p.y / b) * (p.y / b) + (p.z / c) * (p.z / c) - 1.0
            }
            SurfaceKind::CustomImplicit { monomials } => monomials
                .iter()
                .map(|m| m.coeff * powi(p.x, m.powers[0]) * powi(p.y, m.powers[1]) * powi(p.z, m.powers[2]))
                .sum(),
        }
    }

    pub fn grad(&self, p: Vec3) -> Vec3 {
        match &self.kind {
            SurfaceKind::Sphere { .. } => 2.0 * p,
            SurfaceKind::OblateEllipsoid { c } => Vec3::new(2.0 * p.x, 2.0 * p.y, 2.0 * p.z / (c * c)),
            SurfaceKind::TriaxialEllipsoid { a, b, c } => {
                Vec3::new(2.0 * p.x / (a * a), 2.0 * p.y / (b * b), 2.0 * p.z / (c * c))
            }
            SurfaceKind::CustomImplicit { monomials } => {
                let mut g = Vec3::zeros();
                for m in monomials {
                    let [i, j, k] = m.powers;
                    if i > 0 {
                        g.x += m.coeff * i as f64 * powi(p.x, i - 1) * powi(p.y, j) * powi(p.z, k);
                    }
                    if j > 0 {
                        g.y += m.coeff * j as f64 * powi(p.x, i) * powi(p.y, j - 1) * powi(p.z, k);
                    }
                    if k > 0 {
                        g.z += m.coeff * k as f64 * powi(p.x, i) * powi(p.y, j) * powi(p.z, k - 1);
                    }
                }
                g
            }
        }
    }

    pub fn hess(&self, p: Vec3) -> Mat3 {
        match &self.kind {
            SurfaceKind::Sphere { .. } => Mat3::from_diagonal_element(2.0),
            SurfaceKind::OblateEllipsoid { c } => {
                Mat3::from_diagonal(&Vec3::new(2.0, 2.0, 2.0 / (c * c)))
            }
            SurfaceKind::TriaxialEllipsoid { a, b, c } => {
                Mat3::from_diagonal(&Vec3::new(2.0 / (a * a), 2.0 / (b * b), 2.0 / (c * c)))
            }
            SurfaceKind::CustomImplicit { monomials } => {
                let mut h = Mat3::zeros();
                for m in monomials {
                    let [i, j, k] = m.powers;
                    let (i, j, k) = (i as i64, j as i64, k as i64);
                    let term = |di: i64, dj: i64, dk: i64| -> f64 {
                        let (pi, pj, pk) = (i - di, j - dj, k - dk);
                        if pi < 0 || pj < 0 || pk < 0 {
                            return 0.0;
                        }
                        let mut c = m.coeff;
                        for (pow, d) in [(i, di), (j, dj), (k, dk)] {
                            for step in 0..d {
                                c *= (pow - step) as f64;
                            }
                        }
                        c * powi(p.x, pi as u32) * powi(p.y, pj as u32) * powi(p.z, pk as u32)
                    };
                    h[(0, 0)] += term(2, 0, 0);
                    h[(1, 1)] += term(0, 2, 0);
                    h[(2, 2)] += term(0, 0, 2);
                    let hxy = term(1, 1, 0);
                    let hxz = term(1, 0, 1);
                    let hyz = term(0, 1, 1);
                    h[(0, 1)] += hxy;
                    h[(1, 0)] += hxy;
                    h[(0, 2)] += hxz;
                    h[(2, 0)] += hxz;
                    h[(1, 2)] += hyz;
                    h[(2, 1)] += hyz;
                }
                h
            }
        }
    }

    /// Outward unit normal `∇Φ/‖∇Φ‖`.
    pub fn unit_normal(&self, p: Vec3) -> Result<Vec3> {
        let g = self.grad(p);
        let n = g.norm();
        if n < self.grad_floor() {
            return Err(Error::DegenerateGradient(p.x, p.y, p.z));
        }
        Ok(g / n)
    }

    /// Signed distance-like residual `|Φ|/‖∇Φ‖`; the surface-membership test.
    pub fn residual(&self, p: Vec3) -> f64 {
        let g = self.grad(p).norm().max(self.grad_floor());
        self.phi(p).abs() / g
    }

    /// Gauss curvature of the level set from Φ derivatives:
    /// `K = (∇Φᵀ · adj(H_Φ) · ∇Φ) / ‖∇Φ‖⁴`.
    pub fn gauss_curvature(&self, p: Vec3) -> Result<f64> {
        let g = self.grad(p);
        let gn2 = g.norm_squared();
        if gn2.sqrt() < self.grad_floor() {
            return Err(Error::DegenerateGradient(p.x, p.y, p.z));
        }
        let adj = adjugate(&self.hess(p));
        Ok(g.dot(&(adj * g)) / (gn2 * gn2))
    }

    /// Normal curvature of the surface in unit tangent direction `u` at `p`.
    pub fn normal_curvature(&self, p: Vec3, u: Vec3) -> f64 {
        let g = self.grad(p);
        let gn = g.norm().max(self.grad_floor());
        u.dot(&(self.hess(p) * u)) / gn
    }

    /// An orthonormal tangent basis `(e1, e2)` at a surface point.
    pub fn tangent_basis(&self, p: Vec3) -> Result<(Vec3, Vec3)> {
        let n = self.unit_normal(p)?;
        let seed = if n.x.abs() < 0.9 { Vec3::x() } else { Vec3::y() };
        let e1 = (seed - n * seed.dot(&n)).normalize();
        let e2 = n.cross(&e1);
        Ok((e1, e2))
    }

    /// Does Φ have the reflection symmetry fixing the given coordinate plane?
    /// Exact for built-ins; for custom surfaces checks monomial parity.
    pub fn symmetric_about(&self, axis: usize) -> bool {
        match &self.kind {
            SurfaceKind::CustomImplicit { monomials } => monomials
                .iter()
                .all(|m| m.powers[axis] % 2 == 0 || m.coeff == 0.0),
            _ => true,
        }
    }

    /// Parse a CLI shorthand selector: `sphere:r`, `oblate:c`, `triaxial:a,b,c`.
    pub fn parse_selector(s: &str) -> Result<Self> {
        let (kind, params) = s
            .split_once(':')
            .ok_or_else(|| Error::InvalidInput(format!("surface selector `{s}` needs the form kind:params")))?;
        let nums: Vec<f64> = params
            .split(',')
            .map(|t| t.trim().parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| Error::InvalidInput(format!("bad number in selector `{s}`: {e}")))?;
        match (kind, nums.as_slice()) {
            ("sphere", [r]) => Self::sphere(*r),
            ("oblate", [c]) => Self::oblate(*c),
            ("triaxial", [a, b, c]) => Self::triaxial(*a, *b, *c),
            _ => Err(Error::InvalidInput(format!(
                "unknown selector `{s}`; expected sphere:r, oblate:c or triaxial:a,b,c"
            ))),
        }
    }

    /// Canonical selector string for reports.
    pub fn selector(&self) -> String {
        match &self.kind {
            SurfaceKind::Sphere { radius } => format!("sphere:{radius}"),
            SurfaceKind::OblateEllipsoid { c } => format!("oblate:{c}"),
            SurfaceKind::TriaxialEllipsoid { a, b, c } => format!("triaxial:{a},{b},{c}"),
            SurfaceKind::CustomImplicit { monomials } => format!("custom[{} terms]", monomials.len()),
        }
    }
}

fn powi(x: f64, n: u32) -> f64 {
    x.powi(n as i32)
}

fn adjugate(m: &Mat3) -> Mat3 {
    let c = |r0: usize, c0: usize, r1: usize, c1: usize| m[(r0, c0)] * m[(r1, c1)] - m[(r0, c1)] * m[(r1, c0)];
    // adj(M) = cofactor(M)^T, written out for the 3x3 case
    Mat3::new(
        c(1, 1, 2, 2), c(0, 2, 2, 1), c(0, 1, 1, 2),
        c(1, 2, 2, 0), c(0, 0, 2, 2), c(0, 2, 1, 0),
        c(1, 0, 2, 1), c(0, 1, 2, 0), c(0, 0, 1, 1),
    )
}

/// Project `x` onto the surface.
///
/// The result `x*` satisfies `|Φ(x*)|/‖∇Φ‖ ≤ 1e-12·scale` and `x* − x` is
/// parallel to `∇Φ(x*)` (closest-point conditions). Ellipsoid kinds solve the
/// exact secular equation; custom surfaces run gradient Newton followed by a
/// Lagrange polish.
pub fn project_to_surface(spec: &SurfaceSpec, x: Vec3) -> Result<Vec3> {
    let tol = 1e-12 * spec.scale();
    if let Some(ax) = spec.semiaxes() {
        return project_ellipsoid(spec, &ax, x, tol);
    }
    project_newton(spec, x, tol)
}

fn project_ellipsoid(spec: &SurfaceSpec, ax: &[f64; 3], x: Vec3, tol: f64) -> Result<Vec3> {
    // Closest point y_i = x_i / (1 + 2λ/a_i²); solve f(λ) = Σ(y_i/a_i)² − 1 = 0.
    // f is strictly decreasing on (−min(a²)/2, ∞) so the root is unique.
    let w = [2.0 / (ax[0] * ax[0]), 2.0 / (ax[1] * ax[1]), 2.0 / (ax[2] * ax[2])];
    let point = |lam: f64| Vec3::new(x.x / (1.0 + lam * w[0]), x.y / (1.0 + lam * w[1]), x.z / (1.0 + lam * w[2]));
    let f = |lam: f64| {
        let y = point(lam);
        (y.x / ax[0]).powi(2) + (y.y / ax[1]).powi(2) + (y.z / ax[2]).powi(2) - 1.0
    };
    if x.norm() < 1e-14 * spec.scale() {
        return Err(Error::NonConvergence(": projection basin excludes the center".into()));
    }
    let lam_min = -1.0 / w.iter().cloned().fold(f64::MIN, f64::max);
    let mut lo = lam_min + 1e-12 * spec.scale().powi(2);
    while !(f(lo) > 0.0) {
        lo = lam_min + 0.5 * (lo - lam_min);
        if lo - lam_min < 1e-300 {
            return Err(Error::NonConvergence(": secular bracket collapsed".into()));
        }
    }
    let mut hi = spec.scale().powi(2);
    let mut grow = 0;
    while f(hi) > 0.0 {
        hi *= 4.0;
        grow += 1;
        if grow > 60 {
            return Err(Error::NonConvergence(": secular upper bracket not found".into()));
        }
    }
    let mut lam = 0.0_f64.clamp(lo, hi);
    for _ in 0..100 {
        let y = point(lam);
        let fv = (y.x / ax[0]).powi(2) + (y.y / ax[1]).powi(2) + (y.z / ax[2]).powi(2) - 1.0;
        if fv > 0.0 {
            lo = lam;
        } else {
            hi = lam;
        }
        // analytic derivative of f
        let mut df = 0.0;
        for (i, a) in ax.iter().enumerate() {
            let xi = x[i];
            let d = 1.0 + lam * w[i];
            df += -2.0 * w[i] * xi * xi / (a * a * d * d * d);
        }
        let mut next = lam - fv / df;
        if !(next > lo && next < hi) || !next.is_finite() {
            next = 0.5 * (lo + hi);
        }
        lam = next;
        if spec.residual(point(lam)) <= tol {
            return Ok(point(lam));
        }
    }
    Err(Error::NonConvergence(format!(": secular iteration stalled, residual {:.3e}", spec.residual(point(lam)))))
}

fn project_newton(spec: &SurfaceSpec, x: Vec3, tol: f64) -> Result<Vec3> {
    // Phase 1: Newton along ∇Φ onto the level set.
    let mut y = x;
    let mut on_surface = false;
    for _ in 0..50 {
        let f = spec.phi(y);
        let g = spec.grad(y);
        let gn2 = g.norm_squared();
        if gn2.sqrt() < spec.grad_floor() {
            return Err(Error::DegenerateGradient(y.x, y.y, y.z));
        }
        y -= g * (f / gn2);
        if spec.residual(y) <= tol {
            on_surface = true;
            break;
        }
    }
    if !on_surface {
        return Err(Error::NonConvergence(format!(": residual {:.3e} after 50 iterations", spec.residual(y))));
    }
    // Phase 2: Lagrange polish so y − x is parallel to ∇Φ(y).
    let g0 = spec.grad(y);
    let mut lam = (y - x).dot(&g0) / g0.norm_squared();
    let start = y;
    for _ in 0..25 {
        let g = spec.grad(y);
        let h = spec.hess(y);
        let r_pos = y - x - lam * g;
        let r_phi = spec.phi(y);
        if r_pos.norm() <= 1e-11 * spec.scale() && spec.residual(y) <= tol {
            return Ok(y);
        }
        let mut j = nalgebra::Matrix4::<f64>::zeros();
        let block = Mat3::identity() - lam * h;
        j.fixed_view_mut::<3, 3>(0, 0).copy_from(&block);
        j.fixed_view_mut::<3, 1>(0, 3).copy_from(&(-g));
        j.fixed_view_mut::<1, 3>(3, 0).copy_from(&g.transpose());
        let rhs = nalgebra::Vector4::new(-r_pos.x, -r_pos.y, -r_pos.z, -r_phi);
        match j.lu().solve(&rhs) {
            Some(d) => {
                y += Vec3::new(d.x, d.y, d.z);
                lam += d.w;
            }
            None => break,
        }
    }
    // Fall back to the phase-1 point if the polish wandered; accept only if
    // the parallelism condition already holds there.
    let y = if spec.residual(y) <= tol { y } else { start };
    let n = spec.unit_normal(y)?;
    let d = y - x;
    let transverse = (d - n * d.dot(&n)).norm();
    if transverse <= 1e-8 * d.norm().max(1e-6 * spec.scale()) && spec.residual(y) <= tol {
        Ok(y)
    } else {
        Err(Error::NonConvergence(format!(": transverse residual {transverse:.3e}")))
    }
}

/// Project vector `v` onto the tangent plane at surface point `x`.
pub fn tangent_project(spec: &SurfaceSpec, x: Vec3, v: Vec3) -> Result<Vec3> {
    let n = spec.unit_normal(x)?;
    Ok(v - n * v.dot(&n))
}

/// Triangulated surface mesh used by the graph distance oracle.
///
/// Built from a subdivided icosahedron projected onto the surface: uniform
/// valence, no pole clustering.
#[derive(Debug, Clone)]
pub struct SurfaceMesh {
    pub vertices: Vec<Vec3>,
    /// Unique undirected edges with intrinsic (arc-corrected chord) lengths.
    /// The correction keeps graph path lengths true upper bounds on geodesic
    /// distance; raw chords undershoot arcs by O(κ²h²/24) per edge, which is
    /// enough to dip below the true distance along lattice-aligned routes.
    pub edges: Vec<(u32, u32, f64)>,
    /// Target max edge length.
    pub h: f64,
    /// Measured graph-vs-geodesic stretch factor δ: graph ≤ true·(1+δ).
    pub distortion: f64,
    subdivision_depth: u32,
    adj_offsets: Vec<u32>,
    adj_targets: Vec<(u32, f64)>,
}

impl SurfaceMesh {
    pub fn vertex_count(&self) -> usize {
        self.vertices.len()
    }

    pub fn subdivision_depth(&self) -> u32 {
        self.subdivision_depth
    }

    pub fn neighbors(&self, v: u32) -> &[(u32, f64)] {
        let s = self.adj_offsets[v as usize] as usize;
        let e = self.adj_offsets[v as usize + 1] as usize;
        &self.adj_targets[s..e]
    }

    /// Index of the vertex nearest to `p`.
    pub fn nearest_vertex(&self, p: Vec3) -> u32 {
        let mut best = 0u32;
        let mut best_d = f64::INFINITY;
        for (i, v) in self.vertices.iter().enumerate() {
            let d = (v - p).norm_squared();
            if d < best_d {
                best_d = d;
                best = i as u32;
            }
        }
        best
    }

    /// Single-source shortest paths avoiding a set of blocked vertices.
    /// Blocking a ball around a route vertex forces the search onto the
    /// other homotopy candidate between the endpoints.
    pub fn dijkstra_avoiding(&self, src: u32, blocked: &[bool]) -> DijkstraField {
        self.dijkstra_impl(src, Some(blocked))
    }

    /// Vertices within `hops` edges of `center`.
    pub fn ball(&self, center: u32, hops: usize) -> Vec<u32> {
        let mut seen = vec![false; self.vertices.len()];
        let mut frontier = vec![center];
        seen[center as usize] = true;
        let mut out = vec![center];
        for _ in 0..hops {
            let mut next = Vec::new();
            for &v in &frontier {
                for &(u, _) in self.neighbors(v) {
                    if !seen[u as usize] {
                        seen[u as usize] = true;
                        out.push(u);
                        next.push(u);
                    }
                }
            }
            frontier = next;
        }
        out
    }

    /// Single-source shortest paths over the edge graph (binary-heap Dijkstra).
    pub fn dijkstra(&self, src: u32) -> DijkstraField {
        self.dijkstra_impl(src, None)
    }

    fn dijkstra_impl(&self, src: u32, blocked: Option<&[bool]>) -> DijkstraField {
        use std::cmp::Reverse;
        use std::collections::BinaryHeap;

        #[derive(PartialEq)]
        struct Entry(f64, u32);
        impl Eq for Entry {}
        impl PartialOrd for Entry {
            fn partial_cmp(&self, o: &Self) -> Option<std::cmp::Ordering> {
                Some(self.cmp(o))
            }
        }
        impl Ord for Entry {
            fn cmp(&self, o: &Self) -> std::cmp::Ordering {
                self.0.total_cmp(&o.0).then(self.1.cmp(&o.1))
            }
        }

        let n = self.vertices.len();
        let mut dist = vec![f64::INFINITY; n];
        let mut parent = vec![u32::MAX; n];
        let mut heap = BinaryHeap::new();
        dist[src as usize] = 0.0;
        heap.push(Reverse(Entry(0.0, src)));
        while let Some(Reverse(Entry(d, v))) = heap.pop() {
            if d > dist[v as usize] {
                continue;
            }
            for &(u, w) in self.neighbors(v) {
                if blocked.is_some_and(|b| b[u as usize]) {
                    continue;
                }
                let nd = d + w;
                if nd < dist[u as usize] {
                    dist[u as usize] = nd;
                    parent[u as usize] = v;
                    heap.push(Reverse(Entry(nd, u)));
                }
            }
        }
        DijkstraField { src, dist, parent }
    }

    /// Vertex path from the field's source to `dst` (inclusive).
    pub fn path_to(&self, field: &DijkstraField, dst: u32) -> Option<Vec<u32>> {
        if !field.dist[dst as usize].is_finite() {
            return None;
        }
        let mut path = vec![dst];
        let mut v = dst;
        while v != field.src {
            v = field.parent[v as usize];
            path.push(v);
        }
        path.reverse();
        Some(path)
    }
}

#[derive(Debug, Clone)]
pub struct DijkstraField {
    pub src: u32,
    pub dist: Vec<f64>,
    pub parent: Vec<u32>,
}

/// Build a surface mesh with max edge length ≤ `h`.
pub fn build_mesh(spec: &SurfaceSpec, h: f64) -> Result<SurfaceMesh> {
    if !(1e-3..=0.5).contains(&h) {
        return Err(Error::InvalidInput(format!("mesh resolution h={h} outside [1e-3, 0.5]")));
    }
    let max_ax = spec.semiaxes().map(|a| a[0].max(a[1]).max(a[2])).unwrap_or(spec.scale());
    // Icosahedron edge at unit circumradius is ~1.0515; halves per subdivision.
    let mut depth = ((1.0515 * max_ax / h).log2().ceil() as i32).max(0) as u32;
    loop {
        if depth > 10 {
            return Err(Error::InvalidInput(format!("mesh at h={h} would need subdivision depth > 10")));
        }
        let (unit_verts, faces) = icosphere(depth);
        let vertices: Vec<Vec3> = unit_verts
            .iter()
            .map(|&u| {
                let seed = match spec.semiaxes() {
                    Some(ax) => Vec3::new(ax[0] * u.x, ax[1] * u.y, ax[2] * u.z),
                    None => spec.scale() * u,
                };
                project_to_surface(spec, seed)
            })
            .collect::<Result<_>>()?;
        let mut edge_set: Vec<(u32, u32)> = Vec::with_capacity(faces.len() * 3);
        for f in &faces {
            for (a, b) in [(f[0], f[1]), (f[1], f[2]), (f[2], f[0])] {
                edge_set.push((a.min(b), a.max(b)));
            }
        }
        edge_set.sort_unstable();
        edge_set.dedup();
        let mut max_edge = 0.0_f64;
        let edges: Vec<(u32, u32, f64)> = edge_set
            .into_iter()
            .map(|(a, b)| {
                let (pa, pb) = (vertices[a as usize], vertices[b as usize]);
                max_edge = max_edge.max((pa - pb).norm());
                Ok((a, b, intrinsic_segment_estimate(spec, pa, pb)?))
            })
            .collect::<Result<_>>()?;
        if max_edge > h {
            depth += 1;
            continue;
        }
        let (adj_offsets, adj_targets) = build_adjacency(vertices.len(), &edges);
        let mesh = SurfaceMesh {
            vertices,
            edges,
            h,
            distortion: unit_sphere_distortion(depth),
            subdivision_depth: depth,
            adj_offsets,
            adj_targets,
        };
        if !is_connected(&mesh) {
            return Err(Error::ResolutionTooCoarse);
        }
        return Ok(mesh);
    }
}

/// Intrinsic distance between nearby surface points, estimated by the
/// circular-arc model `s = (2/κₙ)·asin(κₙℓ/2)` with κₙ the normal curvature
/// along the chord direction at the projected midpoint. Exact on spheres,
/// O(ℓ⁵) on general surfaces.
pub fn intrinsic_segment_estimate(spec: &SurfaceSpec, a: Vec3, b: Vec3) -> Result<f64> {
    let chord = b - a;
    let len = chord.norm();
    if len < 1e-15 * spec.scale() {
        return Ok(0.0);
    }
    let mid = project_to_surface(spec, 0.5 * (a + b))?;
    let dir = tangent_project(spec, mid, chord)?;
    let dn = dir.norm();
    if dn < 1e-12 * len {
        return Ok(len);
    }
    let kn = spec.normal_curvature(mid, dir / dn).abs();
    let half = 0.5 * kn * len;
    if half >= 1.0 || half < 1e-8 {
        // chord too long for the arc model or surface locally flat
        return Ok(len * (1.0 + kn * kn * len * len / 24.0));
    }
    Ok(2.0 / kn * half.asin())
}

fn build_adjacency(n: usize, edges: &[(u32, u32, f64)]) -> (Vec<u32>, Vec<(u32, f64)>) {
    let mut degree = vec![0u32; n];
    for &(a, b, _) in edges {
        degree[a as usize] += 1;
        degree[b as usize] += 1;
    }
    let mut offsets = vec![0u32; n + 1];
    for i in 0..n {
        offsets[i + 1] = offsets[i] + degree[i];
    }
    let mut targets = vec![(0u32, 0.0f64); offsets[n] as usize];
    let mut cursor: Vec<u32> = offsets[..n].to_vec();
    for &(a, b, w) in edges {
        targets[cursor[a as usize] as usize] = (b, w);
        cursor[a as usize] += 1;
        targets[cursor[b as usize] as usize] = (a, w);
        cursor[b as usize] += 1;
    }
    (offsets, targets)
}

fn is_connected(mesh: &SurfaceMesh) -> bool {
    let n = mesh.vertices.len();
    let mut seen = vec![false; n];
    let mut stack = vec![0u32];
    seen[0] = true;
    let mut count = 1usize;
    while let Some(v) = stack.pop() {
        for &(u, _) in mesh.neighbors(v) {
            if !seen[u as usize] {
                seen[u as usize] = true;
                count += 1;
                stack.push(u);
            }
        }
    }
    count == n
}

/// Unit icosphere at the given subdivision depth: vertices on the unit sphere
/// plus triangle faces. Midpoints are cached so shared vertices stay shared.
fn icosphere(depth: u32) -> (Vec<Vec3>, Vec<[u32; 3]>) {
    let phi = (1.0 + 5.0_f64.sqrt()) / 2.0;
    let raw = [
        (-1.0, phi, 0.0), (1.0, phi, 0.0), (-1.0, -phi, 0.0), (1.0, -phi, 0.0),
        (0.0, -1.0, phi), (0.0, 1.0, phi), (0.0, -1.0, -phi), (0.0, 1.0, -phi),
        (phi, 0.0, -1.0), (phi, 0.0, 1.0), (-phi, 0.0, -1.0), (-phi, 0.0, 1.0),
    ];
    let mut verts: Vec<Vec3> = raw.iter().map(|&(x, y, z)| Vec3::new(x, y, z).normalize()).collect();
    let mut faces: Vec<[u32; 3]> = vec![
        [0, 11, 5], [0, 5, 1], [0, 1, 7], [0, 7, 10], [0, 10, 11],
        [1, 5, 9], [5, 11, 4], [11, 10, 2], [10, 7, 6], [7, 1, 8],
        [3, 9, 4], [3, 4, 2], [3, 2, 6], [3, 6, 8], [3, 8, 9],
        [4, 9, 5], [2, 4, 11], [6, 2, 10], [8, 6, 7], [9, 8, 1],
    ];
    for _ in 0..depth {
        let mut midpoint: HashMap<(u32, u32), u32> = HashMap::new();
        let mut next = Vec::with_capacity(faces.len() * 4);
        for f in &faces {
            let mut mid = [0u32; 3];
            for (i, (a, b)) in [(f[0], f[1]), (f[1], f[2]), (f[2], f[0])].into_iter().enumerate() {
                let key = (a.min(b), a.max(b));
                mid[i] = *midpoint.entry(key).or_insert_with(|| {
                    let m = (verts[a as usize] + verts[b as usize]).normalize();
                    verts.push(m);
                    (verts.len() - 1) as u32
                });
            }
            next.push([f[0], mid[0], mid[2]]);
            next.push([f[1], mid[1], mid[0]]);
            next.push([f[2], mid[2], mid[1]]);
            next.push([mid[0], mid[1], mid[2]]);
        }
        faces = next;
    }
    (verts, faces)
}

/// Measured stretch of icosphere graph distance against exact great-circle
/// distance on the unit sphere, cached per subdivision depth.
fn unit_sphere_distortion(depth: u32) -> f64 {
    static CACHE: OnceLock<Mutex<HashMap<u32, f64>>> = OnceLock::new();
    let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
    if let Some(&d) = cache.lock().unwrap().get(&depth) {
        return d;
    }
    let (verts, faces) = icosphere(depth);
    let mut edge_set: Vec<(u32, u32)> = Vec::with_capacity(faces.len() * 3);
    for f in &faces {
        for (a, b) in [(f[0], f[1]), (f[1], f[2]), (f[2], f[0])] {
            edge_set.push((a.min(b), a.max(b)));
        }
    }
    edge_set.sort_unstable();
    edge_set.dedup();
    let edges: Vec<(u32, u32, f64)> = edge_set
        .into_iter()
        .map(|(a, b)| {
            // exact great-circle arc for the unit-sphere reference graph
            let chord = (verts[a as usize] - verts[b as usize]).norm();
            (a, b, 2.0 * (0.5 * chord).asin())
        })
        .collect();
    let (adj_offsets, adj_targets) = build_adjacency(verts.len(), &edges);
    let mesh = SurfaceMesh {
        vertices: verts,
        edges,
        h: 0.0,
        distortion: 0.0,
        subdivision_depth: depth,
        adj_offsets,
        adj_targets,
    };
    let n = mesh.vertices.len() as u32;
    let sources = 12.min(n);
    let mut worst: f64 = 0.0;
    for k in 0..sources {
        let src = k * (n / sources);
        let field = mesh.dijkstra(src);
        let p = mesh.vertices[src as usize];
        for j in 0..16u32 {
            let dst = ((k + 1 + j) * (n / 17)).min(n - 1);
            if dst == src {
                continue;
            }
            let exact = p.dot(&mesh.vertices[dst as usize]).clamp(-1.0, 1.0).acos();
            if exact < 0.4 {
                continue;
            }
            let graph = field.dist[dst as usize];
            if graph.is_finite() {
                worst = worst.max(graph / exact - 1.0);
            }
        }
    }
    // pad the sampled maximum: unsampled directions can stretch a bit more
    let d = (worst * 1.25 + 5e-3).max(1e-3);
    cache.lock().unwrap().insert(depth, d);
    d
}

#[derive(Debug, Deserialize)]
struct RawCatalogEntry {
    name: String,
    kind: String,
    params: serde_json::Value,
}

/// Load a surface catalog: a JSON array of `{name, kind, params}` entries.
pub fn load_catalog(path: &std::path::Path) -> Result<Vec<(String, SurfaceSpec)>> {
    let text = std::fs::read_to_string(path)?;
    let raw: Vec<RawCatalogEntry> = serde_json::from_str(&text)?;
    raw.into_iter()
        .map(|e| {
            let nums = || -> Result<Vec<f64>> {
                serde_json::from_value(e.params.clone()).map_err(Error::from)
            };
            let spec = match e.kind.as_str() {
                "sphere" => {
                    let p = nums()?;
                    SurfaceSpec::sphere(*p.first().ok_or_else(|| Error::InvalidInput("sphere needs [r]".into()))?)
                }
                "oblate" => {
                    let p = nums()?;
                    SurfaceSpec::oblate(*p.first().ok_or_else(|| Error::InvalidInput("oblate needs [c]".into()))?)
                }
                "triaxial" => {
                    let p = nums()?;
                    if p.len() != 3 {
                        return Err(Error::InvalidInput("triaxial needs [a,b,c]".into()));
                    }
                    SurfaceSpec::triaxial(p[0], p[1], p[2])
                }
                "custom" => {
                    let rows: Vec<[f64; 4]> = serde_json::from_value(e.params.clone())?;
                    let monomials = rows
                        .iter()
                        .map(|r| Monomial { powers: [r[0] as u32, r[1] as u32, r[2] as u32], coeff: r[3] })
                        .collect();
                    SurfaceSpec::custom(monomials, 1.0)
                }
                other => Err(Error::InvalidInput(format!("unknown surface kind `{other}` in catalog"))),
            }?;
            Ok((e.name, spec))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn sphere1() -> SurfaceSpec {
        SurfaceSpec::sphere(1.0).unwrap()
    }

    #[test]
    fn project_radial_on_sphere() {
        let s = sphere1();
        let p = project_to_surface(&s, Vec3::new(2.0, 0.0, 0.0)).unwrap();
        assert_relative_eq!(p.x, 1.0, epsilon = 1e-12);
        assert!(p.y.abs() < 1e-14 && p.z.abs() < 1e-14);
    }

    #[test]
    fn project_axis_points_on_ellipsoids() {
        let ob = SurfaceSpec::oblate(0.8).unwrap();
        let p = project_to_surface(&ob, Vec3::new(0.0, 0.0, 2.0)).unwrap();
        assert_relative_eq!(p.z, 0.8, epsilon = 1e-12);

        let tri = SurfaceSpec::triaxial(1.0, 1.05, 1.1).unwrap();
        let p = project_to_surface(&tri, Vec3::new(0.0, 0.0, 1.2)).unwrap();
        assert_relative_eq!(p.z, 1.1, epsilon = 1e-12);
    }

    #[test]
    fn projection_is_idempotent_and_parallel() {
        let tri = SurfaceSpec::triaxial(1.0, 1.05, 1.1).unwrap();
        let x = Vec3::new(0.4, -0.7, 0.9);
        let p = project_to_surface(&tri, x).unwrap();
        let p2 = project_to_surface(&tri, p).unwrap();
        assert!((p - p2).norm() < 1e-12);
        // x − p parallel to the normal at p
        let n = tri.unit_normal(p).unwrap();
        let d = x - p;
        let transverse = (d - n * d.dot(&n)).norm();
        assert!(transverse < 1e-9 * d.norm(), "transverse {transverse:.3e}");
    }

    #[test]
    fn project_rejects_center() {
        let s = sphere1();
        assert!(project_to_surface(&s, Vec3::zeros()).is_err());
    }

    #[test]
    fn tangent_projection_examples() {
        let s = sphere1();
        let v = tangent_project(&s, Vec3::new(1.0, 0.0, 0.0), Vec3::new(1.0, 1.0, 0.0)).unwrap();
        assert!((v - Vec3::new(0.0, 1.0, 0.0)).norm() < 1e-14);
        let v = tangent_project(&s, Vec3::new(0.0, 0.0, 1.0), Vec3::new(0.0, 1.0, 0.0)).unwrap();
        assert!((v - Vec3::new(0.0, 1.0, 0.0)).norm() < 1e-14);
        let ob = SurfaceSpec::oblate(0.8).unwrap();
        let v = tangent_project(&ob, Vec3::new(0.0, 0.0, 0.8), Vec3::new(0.0, 0.0, 1.0)).unwrap();
        assert!(v.norm() < 1e-14);
    }

    #[test]
    fn tangent_projection_is_idempotent_and_contractive() {
        let ob = SurfaceSpec::oblate(0.8).unwrap();
        let x = project_to_surface(&ob, Vec3::new(0.3, 0.5, 0.4)).unwrap();
        let v = Vec3::new(0.2, -1.3, 0.7);
        let t1 = tangent_project(&ob, x, v).unwrap();
        let t2 = tangent_project(&ob, x, t1).unwrap();
        assert!((t1 - t2).norm() < 1e-14);
        assert!(t1.norm() <= v.norm() + 1e-15);
        // orthogonal to the gradient within 1e-14 relative
        let g = ob.grad(x);
        assert!(t1.dot(&g).abs() < 1e-14 * t1.norm() * g.norm() + 1e-300);
    }

    #[test]
    fn derivatives_match_finite_differences() {
        let specs = [
            sphere1(),
            SurfaceSpec::oblate(0.8).unwrap(),
            SurfaceSpec::triaxial(1.0, 1.05, 1.1).unwrap(),
            SurfaceSpec::custom(
                vec![
                    Monomial { powers: [2, 0, 0], coeff: 1.0 },
                    Monomial { powers: [0, 2, 0], coeff: 1.0 },
                    Monomial { powers: [0, 0, 2], coeff: 1.5 },
                    Monomial { powers: [2, 0, 2], coeff: 0.3 },
                    Monomial { powers: [0, 0, 0], coeff: -1.0 },
                ],
                1.0,
            )
            .unwrap(),
        ];
        let p = Vec3::new(0.4, 0.5, 0.3);
        let e = 1e-5;
        for s in &specs {
            let g = s.grad(p);
            for i in 0..3 {
                let mut hi = p;
                let mut lo = p;
                hi[i] += e;
                lo[i] -= e;
                let fd = (s.phi(hi) - s.phi(lo)) / (2.0 * e);
                assert_relative_eq!(g[i], fd, epsilon = 1e-8, max_relative = 1e-8);
            }
            let h = s.hess(p);
            for i in 0..3 {
                let mut hi = p;
                let mut lo = p;
                hi[i] += e;
                lo[i] -= e;
                let fd = (s.grad(hi) - s.grad(lo)) / (2.0 * e);
                for j in 0..3 {
                    assert_relative_eq!(h[(j, i)], fd[j], epsilon = 1e-8, max_relative = 1e-8);
                }
            }
        }
    }

    #[test]
    fn gauss_curvature_on_round_spheres() {
        for r in [1.0, 2.0] {
            let s = SurfaceSpec::sphere(r).unwrap();
            for dir in [Vec3::new(1.0, 0.0, 0.0), Vec3::new(0.3, -0.8, 0.52).normalize()] {
                let k = s.gauss_curvature(r * dir).unwrap();
                assert_relative_eq!(k, 1.0 / (r * r), epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn gauss_curvature_oblate_extremes() {
        let ob = SurfaceSpec::oblate(0.8).unwrap();
        // flattened poles, curved equator
        assert_relative_eq!(ob.gauss_curvature(Vec3::new(0.0, 0.0, 0.8)).unwrap(), 0.64, epsilon = 1e-12);
        assert_relative_eq!(ob.gauss_curvature(Vec3::new(1.0, 0.0, 0.0)).unwrap(), 1.0 / 0.64, epsilon = 1e-12);
    }

    #[test]
    fn mesh_projects_and_connects() {
        let ob = SurfaceSpec::oblate(0.8).unwrap();
        let mesh = build_mesh(&ob, 0.1).unwrap();
        for v in &mesh.vertices {
            let phi = v.x * v.x + v.y * v.y + (v.z / 0.8) * (v.z / 0.8) - 1.0;
            assert!(phi.abs() < 1e-10, "vertex off surface: {phi:.3e}");
        }
        let field = mesh.dijkstra(0);
        assert!(field.dist.iter().all(|d| d.is_finite()));
        for &(_, _, w) in &mesh.edges {
            assert!(w <= 0.1 * (1.0 + 1e-3));
        }
    }

    #[test]
    fn mesh_vertex_count_scales_with_resolution() {
        let s = sphere1();
        let mesh = build_mesh(&s, 0.1).unwrap();
        // order of magnitude: area / h² vertices
        let expect = 4.0 * std::f64::consts::PI / (0.1 * 0.1);
        assert!(mesh.vertex_count() as f64 > expect);
        assert!((mesh.vertex_count() as f64) < 100.0 * expect);
    }

    #[test]
    fn triaxial_mesh_connected_at_fine_resolution() {
        let tri = SurfaceSpec::triaxial(1.0, 1.05, 1.1).unwrap();
        let mesh = build_mesh(&tri, 0.05).unwrap();
        let field = mesh.dijkstra(17);
        assert!(field.dist.iter().all(|d| d.is_finite()));
    }

    #[test]
    fn selector_round_trip() {
        for sel in ["sphere:1", "oblate:0.8", "triaxial:1,1.05,1.1"] {
            let s = SurfaceSpec::parse_selector(sel).unwrap();
            assert_eq!(s.selector(), sel);
        }
        assert!(SurfaceSpec::parse_selector("torus:1").is_err());
        assert!(SurfaceSpec::parse_selector("oblate:1.5").is_err());
    }

    #[test]
    fn custom_symmetry_detection() {
        let sym = SurfaceSpec::custom(
            vec![
                Monomial { powers: [2, 0, 0], coeff: 1.0 },
                Monomial { powers: [0, 4, 0], coeff: 0.5 },
                Monomial { powers: [0, 0, 0], coeff: -1.0 },
            ],
            1.0,
        )
        .unwrap();
        assert!(sym.symmetric_about(0) && sym.symmetric_about(1) && sym.symmetric_about(2));
        let asym = SurfaceSpec::custom(
            vec![
                Monomial { powers: [2, 0, 0], coeff: 1.0 },
                Monomial { powers: [1, 0, 0], coeff: 0.1 },
                Monomial { powers: [0, 0, 0], coeff: -1.0 },
            ],
            1.0,
        )
        .unwrap();
        assert!(!asym.symmetric_about(0));
        assert!(asym.symmetric_about(1));
    }
}
