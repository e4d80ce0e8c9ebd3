//! Adaptive quadrature used for section-ellipse perimeters.

/// Adaptive Simpson integration of `f` over `[a, b]` to absolute accuracy `eps`.
pub fn adaptive_simpson<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, eps: f64) -> f64 {
    fn simpson<F: Fn(f64) -> f64>(f: &F, a: f64, fa: f64, b: f64, fb: f64) -> (f64, f64, f64) {
        let m = 0.5 * (a + b);
        let fm = f(m);
        ((b - a) / 6.0 * (fa + 4.0 * fm + fb), m, fm)
    }
    fn recurse<F: Fn(f64) -> f64>(
        f: &F,
        a: f64,
        fa: f64,
        b: f64,
        fb: f64,
        whole: f64,
        m: f64,
        fm: f64,
        eps: f64,
        depth: u32,
    ) -> f64 {
        let (left, lm, flm) = simpson(f, a, fa, m, fm);
        let (right, rm, frm) = simpson(f, m, fm, b, fb);
        let delta = left + right - whole;
        if depth == 0 || delta.abs() <= 15.0 * eps {
            return left + right + delta / 15.0;
        }
        recurse(f, a, fa, m, fm, left, lm, flm, 0.5 * eps, depth - 1)
            + recurse(f, m, fm, b, fb, right, rm, frm, 0.5 * eps, depth - 1)
    }
    let fa = f(a);
    let fb = f(b);
    let (whole, m, fm) = simpson(&f, a, fa, b, fb);
    recurse(&f, a, fa, b, fb, whole, m, fm, eps, 48)
}

/// Perimeter of the ellipse with semiaxes `a`, `b`, to ~1e-12 relative.
pub fn ellipse_perimeter(a: f64, b: f64) -> f64 {
    let quarter = adaptive_simpson(
        |t| {
            let (s, c) = t.sin_cos();
            (a * a * s * s + b * b * c * c).sqrt()
        },
        0.0,
        std::f64::consts::FRAC_PI_2,
        1e-14 * (a + b),
    );
    4.0 * quarter
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use std::f64::consts::PI;

    #[test]
    fn circle_perimeter_is_exact() {
        assert_relative_eq!(ellipse_perimeter(1.0, 1.0), 2.0 * PI, epsilon = 1e-12);
        assert_relative_eq!(ellipse_perimeter(2.0, 2.0), 4.0 * PI, epsilon = 1e-12);
    }

    #[test]
    fn oblate_meridian_perimeter() {
        // independently computed with a fixed 1e5-panel Simpson rule
        assert_relative_eq!(ellipse_perimeter(1.0, 0.8), 5.672333577794898, epsilon = 1e-10);
    }

    #[test]
    fn polynomial_integration_is_exact() {
        let v = adaptive_simpson(|x| x * x * x - 2.0 * x + 1.0, 0.0, 2.0, 1e-14);
        assert_relative_eq!(v, 2.0, epsilon = 1e-12);
    }

    #[test]
    fn perimeter_symmetry() {
        assert_relative_eq!(ellipse_perimeter(1.0, 0.8), ellipse_perimeter(0.8, 1.0), epsilon = 1e-12);
    }
}
