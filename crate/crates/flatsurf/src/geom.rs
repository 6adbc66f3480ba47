//! Small planar-geometry helpers shared by the whole crate.

pub type Complex = num_complex::Complex64;

pub const TAU: f64 = std::f64::consts::TAU;

/// Cross product of two plane vectors, `Im(conj(a) * b)`.
///
/// Positive when `b` points counterclockwise from `a`.
pub fn cross(a: Complex, b: Complex) -> f64 {
    a.re * b.im - a.im * b.re
}

/// Signed area of the triangle with counterclockwise side vectors `u, v`
/// (the third side is `-u - v`).
pub fn signed_area(u: Complex, v: Complex) -> f64 {
    0.5 * cross(u, v)
}

/// Interior angle at a corner with incoming side `u` and outgoing side `w`,
/// in `(0, 2pi)`.
pub fn corner_angle(incoming: Complex, outgoing: Complex) -> f64 {
    let a = (-incoming / outgoing).arg();
    if a <= 0.0 {
        a + TAU
    } else {
        a
    }
}

/// Distance from `angle` to the nearest multiple of `modulus`.
pub fn dist_to_multiples(angle: f64, modulus: f64) -> f64 {
    let r = angle.rem_euclid(modulus);
    r.min(modulus - r)
}

/// Absolute tolerance for residual checks, scaled by the largest coordinate
/// modulus of the surface under test.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Tol {
    /// Base relative tolerance.
    pub base: f64,
    /// Scale, normally `max |z(e)|` over the surface, floored at 1.
    pub scale: f64,
}

impl Tol {
    pub const DEFAULT_BASE: f64 = 1e-9;

    pub fn new(scale: f64) -> Self {
        Tol {
            base: Self::DEFAULT_BASE,
            scale: scale.max(1.0),
        }
    }

    pub fn for_coords<'a>(coords: impl IntoIterator<Item = &'a Complex>) -> Self {
        let m = coords
            .into_iter()
            .map(|z| z.norm())
            .fold(0.0_f64, f64::max);
        Tol::new(m)
    }

    /// The absolute threshold.
    pub fn abs(&self) -> f64 {
        self.base * self.scale
    }

    pub fn is_zero(&self, x: f64) -> bool {
        x.abs() <= self.abs()
    }

    pub fn with_base(self, base: f64) -> Self {
        Tol { base, ..self }
    }
}

impl Default for Tol {
    fn default() -> Self {
        Tol::new(1.0)
    }
}

/// Union-find over `0..n`, used to identify triangle corners into cone points.
#[derive(Debug, Clone)]
pub struct UnionFind {
    parent: Vec<usize>,
}

impl UnionFind {
    pub fn new(n: usize) -> Self {
        UnionFind {
            parent: (0..n).collect(),
        }
    }

    pub fn find(&mut self, x: usize) -> usize {
        if self.parent[x] != x {
            let root = self.find(self.parent[x]);
            self.parent[x] = root;
        }
        self.parent[x]
    }

    pub fn union(&mut self, a: usize, b: usize) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra != rb {
            self.parent[ra.max(rb)] = ra.min(rb);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn corner_angle_of_right_triangle() {
        // Triangle 0, 1, i: angle at the origin between sides (0->1) and (i->0).
        let a = corner_angle(Complex::new(0.0, -1.0), Complex::new(1.0, 0.0));
        assert!((a - std::f64::consts::FRAC_PI_2).abs() < 1e-12);
        let b = corner_angle(Complex::new(1.0, 0.0), Complex::new(-1.0, 1.0));
        assert!((b - std::f64::consts::FRAC_PI_4).abs() < 1e-12);
    }

    #[test]
    fn union_find_merges() {
        let mut uf = UnionFind::new(4);
        uf.union(0, 2);
        uf.union(2, 3);
        assert_eq!(uf.find(3), 0);
        assert_eq!(uf.find(1), 1);
    }
}
