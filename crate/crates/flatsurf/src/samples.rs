//! Seeded constructors for concrete surfaces: flat tori with a marked
//! segment, doubled convex polygons, and trapezoid doubles carrying two
//! slit trees. These are the corpora used by the tests, the benchmarks,
//! and the property suites.

use crate::error::SurfaceError;
use crate::geom::{corner_angle, cross, Complex, TAU};
use crate::surface::{AngleData, BoundaryPair, GluedSurface, SignedEdge, Tree, Triangle};
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp1, StandardNormal};

/// Deterministic generator for sample corpora.
pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// The unit square torus: two triangles over edges `1, i, -(1+i)`, one
/// regular marked point, no slits.
pub fn square_torus() -> GluedSurface {
    let data = AngleData::new(1, vec![TAU], vec![Tree::point(0)]).unwrap();
    let coords = vec![
        Complex::new(1.0, 0.0),
        Complex::new(0.0, 1.0),
        Complex::new(-1.0, -1.0),
    ];
    let triangles = vec![
        Triangle([
            SignedEdge::new(0, true),
            SignedEdge::new(1, true),
            SignedEdge::new(2, true),
        ]),
        Triangle([
            SignedEdge::new(0, false),
            SignedEdge::new(1, false),
            SignedEdge::new(2, false),
        ]),
    ];
    let edge_vertices = vec![(0, 0); 3];
    GluedSurface::new(data, coords, triangles, vec![], edge_vertices).unwrap()
}

/// Flat torus with a marked geodesic segment, built from the triple
/// `(Z, z, w)` with cylinder areas `Im(Z conj z) > 0` and `Im(z conj w) > 0`.
/// The slit surface is a hexagon `0, Z, Z+z, z, z+w, w` triangulated by the
/// fan from the origin; the two segment copies are edges 0 and 1.
pub fn marked_torus(z_seg: Complex, z_cyl: Complex, z_cross: Complex) -> Result<GluedSurface, SurfaceError> {
    let (zz, z, w) = (z_seg, z_cyl, z_cross);
    let eta1 = (zz * z.conj()).im;
    let eta2 = (z * w.conj()).im;
    if eta1 <= 0.0 || eta2 <= 0.0 {
        return Err(SurfaceError::BadData(format!(
            "triple outside the cylinder domain: eta1 {eta1:.3e}, eta2 {eta2:.3e}"
        )));
    }
    let data = AngleData::new(
        1,
        vec![TAU, TAU],
        vec![Tree {
            vertices: vec![0, 1],
            edges: vec![(0, 1)],
        }],
    )?;
    // Edges: 0 = segment copy (lower), 1 = segment copy (upper), 2 = cylinder
    // circle, 3 = crossing segment, 4..6 = fan diagonals.
    let coords = vec![zz, zz, z, w, zz + z, z, z + w];
    let triangles = vec![
        Triangle([
            SignedEdge::new(4, true),
            SignedEdge::new(2, false),
            SignedEdge::new(0, false),
        ]),
        Triangle([
            SignedEdge::new(5, true),
            SignedEdge::new(1, true),
            SignedEdge::new(4, false),
        ]),
        Triangle([
            SignedEdge::new(6, true),
            SignedEdge::new(3, false),
            SignedEdge::new(5, false),
        ]),
        Triangle([
            SignedEdge::new(3, true),
            SignedEdge::new(2, true),
            SignedEdge::new(6, false),
        ]),
    ];
    let pairs = vec![BoundaryPair {
        a: 0,
        sign_a: 1,
        b: 1,
        sign_b: -1,
        theta: 0.0,
    }];
    let edge_vertices = vec![(0, 1), (0, 1), (1, 1), (0, 1), (0, 1), (0, 0), (0, 1)];
    GluedSurface::new(data, coords, triangles, pairs, edge_vertices)
}

/// Double of a convex polygon (counterclockwise vertices), slit along the
/// path of sides `P0 P1, P1 P2, ..., P_{k-2} P_{k-1}`; the remaining side is
/// the shared interior edge. Each polygon vertex becomes a cone point of
/// twice its interior angle.
pub fn doubled_polygon(points: &[Complex]) -> Result<GluedSurface, SurfaceError> {
    let k = points.len();
    if k < 3 {
        return Err(SurfaceError::BadData("polygon needs at least 3 vertices".into()));
    }
    let side = |i: usize| points[(i + 1) % k] - points[i];
    for i in 0..k {
        if cross(side(i), side((i + 1) % k)) <= 0.0 {
            return Err(SurfaceError::BadData(
                "polygon must be strictly convex and counterclockwise".into(),
            ));
        }
    }
    let angles: Vec<f64> = (0..k)
        .map(|i| 2.0 * corner_angle(side((i + k - 1) % k), side(i)))
        .collect();
    let data = AngleData::new(
        0,
        angles,
        vec![Tree::path(&(0..k).collect::<Vec<_>>())],
    )?;

    // Reflection across the line through P_{k-1} and P0 develops the back
    // copy into the plane with the shared side fixed pointwise.
    let phi = (points[0] - points[k - 1]).arg();
    let mirror = |v: Complex| Complex::from_polar(1.0, 2.0 * phi) * v.conj();

    // Edge layout: 0..k-2 front slit copies, k-1..2k-3 back slit copies,
    // 2k-2 shared side, then front diagonals P0->Pj (j = 2..k-2), then back
    // diagonals.
    let front = |i: usize| i; // i in 0..k-1
    let back = |i: usize| (k - 1) + i;
    let shared = 2 * (k - 1);
    let n_diag = k.saturating_sub(3);
    let fdiag = |j: usize| shared + 1 + (j - 2); // j in 2..k-1
    let bdiag = |j: usize| shared + 1 + n_diag + (j - 2);

    let mut coords = vec![Complex::new(0.0, 0.0); 2 * (k - 1) + 1 + 2 * n_diag];
    let mut edge_vertices = vec![(0usize, 0usize); coords.len()];
    for i in 0..k - 1 {
        coords[front(i)] = side(i);
        coords[back(i)] = mirror(side(i));
        edge_vertices[front(i)] = (i, i + 1);
        edge_vertices[back(i)] = (i, i + 1);
    }
    coords[shared] = side(k - 1);
    edge_vertices[shared] = (k - 1, 0);
    for j in 2..k - 1 {
        coords[fdiag(j)] = points[j] - points[0];
        coords[bdiag(j)] = mirror(points[j] - points[0]);
        edge_vertices[fdiag(j)] = (0, j);
        edge_vertices[bdiag(j)] = (0, j);
    }

    // Fan triangulations from P0 on both copies.
    let mut triangles = Vec::new();
    for j in 1..k - 1 {
        let start = if j == 1 {
            SignedEdge::new(front(0), true)
        } else {
            SignedEdge::new(fdiag(j), true)
        };
        let end = if j + 1 == k - 1 {
            SignedEdge::new(shared, true)
        } else {
            SignedEdge::new(fdiag(j + 1), false)
        };
        triangles.push(Triangle([start, SignedEdge::new(front(j), true), end]));
    }
    for j in 1..k - 1 {
        // Back triangle (P0, sigma P_{j+1}, sigma P_j), counterclockwise in
        // the mirrored development.
        let start = if j + 1 == k - 1 {
            SignedEdge::new(shared, false)
        } else {
            SignedEdge::new(bdiag(j + 1), true)
        };
        let end = if j == 1 {
            SignedEdge::new(back(0), false)
        } else {
            SignedEdge::new(bdiag(j), false)
        };
        triangles.push(Triangle([start, SignedEdge::new(back(j), false), end]));
    }

    let pairs = (0..k - 1)
        .map(|i| {
            let theta = (2.0 * phi - 2.0 * side(i).arg()).rem_euclid(TAU);
            BoundaryPair {
                a: back(i),
                sign_a: 1,
                b: front(i),
                sign_b: -1,
                theta,
            }
        })
        .collect();

    GluedSurface::new(data, coords, triangles, pairs, edge_vertices)
}

/// Double of a trapezoid with parallel legs, slit along the two parallel
/// base sides: two slit trees, each a single edge. `base` is the lower base
/// length, `leg` the shared leg direction (positive imaginary part), and
/// `s`, `t` the leg multiples at the left and right vertices.
pub fn doubled_trapezoid(base: f64, leg: Complex, s: f64, t: f64) -> Result<GluedSurface, SurfaceError> {
    if base <= 0.0 || s <= 0.0 || t <= 0.0 || leg.im <= 0.0 {
        return Err(SurfaceError::BadData("trapezoid parameters must be positive".into()));
    }
    let p0 = Complex::new(0.0, 0.0);
    let p1 = Complex::new(base, 0.0);
    let p2 = p1 + leg * t;
    let p3 = p0 + leg * s;
    if cross(p2 - p1, p3 - p2) <= 0.0 || cross(p3 - p2, p0 - p3) <= 0.0 {
        return Err(SurfaceError::BadData("degenerate trapezoid".into()));
    }
    let pts = [p0, p1, p2, p3];
    let side = |i: usize| pts[(i + 1) % 4] - pts[i];
    let angles: Vec<f64> = (0..4)
        .map(|i| 2.0 * corner_angle(side((i + 3) % 4), side(i)))
        .collect();
    let data = AngleData::new(
        0,
        angles,
        vec![
            Tree {
                vertices: vec![0, 1],
                edges: vec![(0, 1)],
            },
            Tree {
                vertices: vec![2, 3],
                edges: vec![(2, 3)],
            },
        ],
    )?;

    // Back copy developed by reflection across the leg through P1, P2; both
    // legs are parallel, so the shared leg edges keep their vectors.
    let psi = leg.arg();
    let mirror = |v: Complex| Complex::from_polar(1.0, 2.0 * psi) * v.conj();

    // Edges: 0 front base, 1 back base, 2 front top, 3 back top, 4 right leg,
    // 5 left leg, 6 front diagonal P0->P2, 7 back diagonal.
    let coords = vec![
        side(0),
        mirror(side(0)),
        side(2),
        mirror(side(2)),
        side(1),
        side(3),
        p2 - p0,
        mirror(p2 - p0),
    ];
    let edge_vertices = vec![
        (0, 1),
        (0, 1),
        (2, 3),
        (2, 3),
        (1, 2),
        (3, 0),
        (0, 2),
        (0, 2),
    ];
    let triangles = vec![
        // Front: (P0,P1,P2) and (P0,P2,P3).
        Triangle([
            SignedEdge::new(0, true),
            SignedEdge::new(4, true),
            SignedEdge::new(6, false),
        ]),
        Triangle([
            SignedEdge::new(6, true),
            SignedEdge::new(2, true),
            SignedEdge::new(5, true),
        ]),
        // Back: (sigma P0, P2, P1) and (sigma P0, sigma P3, P2).
        Triangle([
            SignedEdge::new(7, true),
            SignedEdge::new(4, false),
            SignedEdge::new(1, false),
        ]),
        Triangle([
            SignedEdge::new(5, false),
            SignedEdge::new(3, false),
            SignedEdge::new(7, false),
        ]),
    ];
    let theta0 = (2.0 * psi - 2.0 * side(0).arg()).rem_euclid(TAU);
    let theta1 = (2.0 * psi - 2.0 * side(2).arg()).rem_euclid(TAU);
    let pairs = vec![
        BoundaryPair {
            a: 1,
            sign_a: 1,
            b: 0,
            sign_b: -1,
            theta: theta0,
        },
        BoundaryPair {
            a: 3,
            sign_a: 1,
            b: 2,
            sign_b: -1,
            theta: theta1,
        },
    ];
    GluedSurface::new(data, coords, triangles, pairs, edge_vertices)
}

/// Random triple `(Z, z, w)` in the normalized cylinder domain: Gaussian
/// segment, uniform real parts within the nesting constraints, exponential
/// cylinder areas.
pub fn random_torus_triple(rng: &mut ChaCha8Rng) -> (Complex, Complex, Complex) {
    loop {
        let a_re: f64 = StandardNormal.sample(rng);
        let a_im: f64 = StandardNormal.sample(rng);
        let zz = Complex::new(a_re, a_im);
        if zz.re.abs() < 1e-3 {
            continue;
        }
        let a: f64 = rng.gen_range(-zz.re.abs()..zz.re.abs());
        if a.abs() < 1e-3 {
            continue;
        }
        let b: f64 = rng.gen_range(-a.abs()..a.abs());
        let eta1: f64 = Exp1.sample(rng);
        let eta2: f64 = Exp1.sample(rng);
        // eta1 = B a - A x, eta2 = x b - a y.
        let x = (zz.im * a - eta1) / zz.re;
        let y = (x * b - eta2) / a;
        return (zz, Complex::new(a, x), Complex::new(b, y));
    }
}

/// Random marked torus from a random cylinder triple.
pub fn random_marked_torus(rng: &mut ChaCha8Rng) -> GluedSurface {
    loop {
        let (zz, z, w) = random_torus_triple(rng);
        if let Ok(s) = marked_torus(zz, z, w) {
            return s;
        }
    }
}

/// Random strictly convex polygon with `k` vertices on a jittered circle.
pub fn random_convex_polygon(rng: &mut ChaCha8Rng, k: usize) -> Vec<Complex> {
    loop {
        let mut angles: Vec<f64> = (0..k).map(|_| rng.gen_range(0.0..TAU)).collect();
        angles.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let min_gap = (0..k)
            .map(|i| {
                let d = angles[(i + 1) % k] - angles[i];
                if d < 0.0 {
                    d + TAU
                } else {
                    d
                }
            })
            .fold(f64::INFINITY, f64::min);
        if min_gap < 0.15 {
            continue;
        }
        let radius: f64 = rng.gen_range(0.5..2.0);
        let rot: f64 = rng.gen_range(0.0..TAU);
        return angles
            .iter()
            .map(|&a| Complex::from_polar(radius, a + rot))
            .collect();
    }
}

/// Random doubled convex polygon with `k` cone points.
pub fn random_doubled_polygon(rng: &mut ChaCha8Rng, k: usize) -> GluedSurface {
    loop {
        let pts = random_convex_polygon(rng, k);
        if let Ok(s) = doubled_polygon(&pts) {
            return s;
        }
    }
}

/// Random doubled trapezoid with two slit trees.
pub fn random_doubled_trapezoid(rng: &mut ChaCha8Rng) -> GluedSurface {
    loop {
        let base: f64 = rng.gen_range(0.5..2.0);
        let ang: f64 = rng.gen_range(0.35..std::f64::consts::PI - 0.35);
        let leg = Complex::from_polar(rng.gen_range(0.4..1.5), ang);
        let s: f64 = rng.gen_range(0.5..1.5);
        let t: f64 = rng.gen_range(0.5..1.5);
        // Keep the top side away from degeneracy.
        if (Complex::new(base, 0.0) + leg * t - leg * s).norm() < 0.2 {
            continue;
        }
        if let Ok(surf) = doubled_trapezoid(base, leg, s, t) {
            return surf;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn square_torus_is_valid() {
        let s = square_torus();
        assert!(s.validate().pass());
        assert_relative_eq!(s.total_area(), 1.0, epsilon = 1e-12);
        let ca = s.cone_angles();
        assert_eq!(ca.len(), 1);
        assert_relative_eq!(ca[0].1, TAU, epsilon = 1e-9);
    }

    #[test]
    fn marked_torus_from_reference_triple() {
        let s = marked_torus(
            Complex::new(1.0, 0.0),
            Complex::new(1.0, -1.0),
            Complex::new(0.0, -1.0),
        )
        .unwrap();
        assert!(s.validate().pass());
        assert_relative_eq!(s.total_area(), 2.0, epsilon = 1e-12);
        assert_relative_eq!(s.forest_length(), 1.0, epsilon = 1e-12);
        for (_, a) in s.cone_angles() {
            assert_relative_eq!(a, TAU, epsilon = 1e-9);
        }
    }

    #[test]
    fn doubled_equilateral_triangle() {
        let pts = [
            Complex::new(0.0, 0.0),
            Complex::new(1.0, 0.0),
            Complex::from_polar(1.0, TAU / 6.0),
        ];
        let s = doubled_polygon(&pts).unwrap();
        assert!(s.validate().pass());
        assert_relative_eq!(s.total_area(), 3f64.sqrt() / 2.0, epsilon = 1e-12);
        for (_, a) in s.cone_angles() {
            assert_relative_eq!(a, TAU / 3.0, epsilon = 1e-9);
        }
        // Slit identification angles follow the partial angle sums.
        assert_relative_eq!(
            s.pairs[0].theta,
            (TAU / 3.0f64).rem_euclid(TAU),
            epsilon = 1e-9
        );
        assert_relative_eq!(
            s.pairs[1].theta,
            (2.0 * TAU / 3.0f64).rem_euclid(TAU),
            epsilon = 1e-9
        );
    }

    #[test]
    fn doubled_square_has_four_flat_points() {
        let pts = [
            Complex::new(0.0, 0.0),
            Complex::new(1.0, 0.0),
            Complex::new(1.0, 1.0),
            Complex::new(0.0, 1.0),
        ];
        let s = doubled_polygon(&pts).unwrap();
        assert!(s.validate().pass());
        assert_relative_eq!(s.total_area(), 2.0, epsilon = 1e-12);
        for (_, a) in s.cone_angles() {
            assert_relative_eq!(a, TAU / 2.0, epsilon = 1e-9);
        }
    }

    #[test]
    fn doubled_trapezoid_is_valid() {
        let s = doubled_trapezoid(1.0, Complex::new(0.2, 0.9), 0.8, 1.1).unwrap();
        assert!(s.validate().pass());
        let total: f64 = s.cone_angles().iter().map(|&(_, a)| a).sum();
        assert_relative_eq!(total, 2.0 * TAU, epsilon = 1e-9);
    }

    #[test]
    fn random_generators_produce_valid_surfaces() {
        let mut r = rng(7);
        for _ in 0..25 {
            assert!(random_marked_torus(&mut r).validate().pass());
        }
        for k in 3..=5 {
            for _ in 0..25 {
                assert!(random_doubled_polygon(&mut r, k).validate().pass());
            }
        }
        for _ in 0..25 {
            assert!(random_doubled_trapezoid(&mut r).validate().pass());
        }
    }
}
