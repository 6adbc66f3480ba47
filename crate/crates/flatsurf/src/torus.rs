//! The explicit marked-torus model: build a flat torus with a marked
//! geodesic segment from a triple of complex numbers, evaluate its energy,
//! decompose it into two cylinders along a closed geodesic found by the
//! vertical-flow alignment sweep, and expose the exact value of the model
//! integral.

use crate::error::TorusError;
use crate::flow;
use crate::geom::{cross, Complex};
use crate::mesh::{CrossPolicy, Mesh};
use crate::surface::GluedSurface;

/// A point of the cylinder domain: the marked segment `seg`, a circle
/// vector `cyl`, and the connecting segment `crossing` of the second
/// cylinder.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TorusTriple {
    pub seg: Complex,
    pub cyl: Complex,
    pub crossing: Complex,
}

impl TorusTriple {
    pub fn new(seg: Complex, cyl: Complex, crossing: Complex) -> Self {
        TorusTriple { seg, cyl, crossing }
    }

    /// Area of the first cylinder, `Im(seg * conj(cyl))`.
    pub fn eta1(&self) -> f64 {
        (self.seg * self.cyl.conj()).im
    }

    /// Area of the second cylinder, `Im(cyl * conj(crossing))`.
    pub fn eta2(&self) -> f64 {
        (self.cyl * self.crossing.conj()).im
    }

    /// Both cylinder areas positive.
    pub fn in_domain(&self) -> bool {
        self.eta1() > 0.0 && self.eta2() > 0.0
    }

    /// Nested real parts `|Re seg| >= |Re cyl| >= |Re crossing|`.
    pub fn in_normalized_domain(&self) -> bool {
        self.in_domain()
            && self.seg.re.abs() >= self.cyl.re.abs()
            && self.cyl.re.abs() >= self.crossing.re.abs()
    }

    /// The energy `exp(-|seg|^2 - eta1 - eta2)`.
    pub fn energy(&self) -> f64 {
        (-self.seg.norm_sqr() - self.eta1() - self.eta2()).exp()
    }
}

/// Energy of a triple; equals `exp(-area - length(segment)^2)` of the built
/// surface when the triple is in the domain.
pub fn energy(t: &TorusTriple) -> f64 {
    t.energy()
}

/// Build the marked torus of a triple: two parallelograms glued into a
/// torus, the segment slit open.
pub fn rho(t: &TorusTriple) -> Result<GluedSurface, TorusError> {
    if !t.in_domain() {
        return Err(TorusError::NotInD {
            eta1: t.eta1(),
            eta2: t.eta2(),
        });
    }
    crate::samples::marked_torus(t.seg, t.cyl, t.crossing)
        .map_err(|e| TorusError::Flow(crate::error::FlowError::Surface(e)))
}

/// The exact value of the model integral over the normalized cylinder
/// domain: `4 pi`.
pub fn analytic_reference() -> f64 {
    4.0 * std::f64::consts::PI
}

/// Result of cutting a marked torus into two cylinders along the closed
/// geodesics through the segment endpoints.
#[derive(Debug, Clone)]
pub struct CylinderDecomposition {
    /// Vector of the closed geodesic through each segment endpoint (the two
    /// circles are parallel translates of each other).
    pub circle: Complex,
    /// First-contact flow time of the alignment sweep.
    pub time: f64,
    /// Cylinder areas, the one containing the segment first.
    pub areas: (f64, f64),
    /// Connecting segment of the second cylinder, reduced so its horizontal
    /// length does not exceed the circle's.
    pub crossing: Complex,
    /// The recovered triple `(segment, circle, crossing)`.
    pub triple: TorusTriple,
}

/// The translation lattice of a closed translation surface, reduced to a
/// short basis, computed from the holonomy of the gluing loops.
fn holonomy_lattice(surface: &GluedSurface) -> Result<(Complex, Complex), TorusError> {
    let mesh = Mesh::new(surface, CrossPolicy::Closed);
    let nt = surface.triangles.len();
    let mut placed: Vec<Option<Complex>> = vec![None; nt];
    let mut translations: Vec<Complex> = Vec::new();
    let mut queue = std::collections::VecDeque::new();
    placed[0] = Some(Complex::new(0.0, 0.0));
    queue.push_back(0usize);
    while let Some(t) = queue.pop_front() {
        let shift = placed[t].unwrap();
        for side in 0..3 {
            if let Some(nb) = mesh.neighbor(t, side) {
                if (nb.iso.rot - Complex::new(1.0, 0.0)).norm() > 1e-9 {
                    return Err(bad("holonomy lattice needs translation transitions"));
                }
                let there = shift + nb.iso.shift;
                match placed[nb.tri] {
                    None => {
                        placed[nb.tri] = Some(there);
                        queue.push_back(nb.tri);
                    }
                    Some(existing) => {
                        let tau = there - existing;
                        if tau.norm() > 1e-9 {
                            translations.push(tau);
                        }
                    }
                }
            }
        }
    }
    translations.sort_by(|a, b| a.norm().partial_cmp(&b.norm()).unwrap());
    let mut u1 = *translations
        .first()
        .ok_or_else(|| bad("no lattice translations found"))?;
    let mut u2 = *translations
        .iter()
        .find(|v| cross(u1, **v).abs() > 1e-9 * u1.norm() * v.norm())
        .ok_or_else(|| bad("lattice is degenerate"))?;
    loop {
        let k = ((u2.re * u1.re + u2.im * u1.im) / u1.norm_sqr()).round();
        u2 -= u1 * k;
        if u2.norm() < u1.norm() {
            std::mem::swap(&mut u1, &mut u2);
        } else {
            break;
        }
    }
    for tau in &translations {
        let (a, b) = lattice_coords(u1, u2, *tau);
        if (a - a.round()).abs() > 1e-6 || (b - b.round()).abs() > 1e-6 {
            return Err(bad("holonomy translations do not close into a lattice"));
        }
    }
    Ok((u1, u2))
}

fn bad(msg: &str) -> TorusError {
    TorusError::Flow(crate::error::FlowError::AssertionFailure(msg.into()))
}

fn lattice_coords(u1: Complex, u2: Complex, v: Complex) -> (f64, f64) {
    let det = cross(u1, u2);
    (cross(v, u2) / det, cross(u1, v) / det)
}

/// Decompose a marked torus into two cylinders along the direction `dir`:
/// sweep the segment in that direction until it realigns with itself, read
/// off the closed geodesic through the contact endpoint, and complete the
/// crossing segment from the holonomy lattice. Vectors are reported in the
/// original frame.
pub fn cylinder_decompose(
    surface: &GluedSurface,
    segment_edge: usize,
    dir: Complex,
) -> Result<CylinderDecomposition, TorusError> {
    let seg = surface.coords[segment_edge];
    let d = dir / dir.norm();
    if cross(d, seg).abs() < 1e-12 * seg.norm() {
        return Err(TorusError::ParallelDirection);
    }
    // Rotate so the requested direction becomes vertical.
    let rot = Complex::new(0.0, 1.0) / d;
    let rotated = GluedSurface::new(
        surface.data.clone(),
        surface.coords.iter().map(|z| z * rot).collect(),
        surface.triangles.clone(),
        surface.pairs.clone(),
        surface.edge_vertices.clone(),
    )
    .map_err(|e| TorusError::Flow(crate::error::FlowError::Surface(e)))?;

    let (time, _label, gamma_rot) = flow::first_alignment(&rotated, segment_edge)?;
    let gamma = gamma_rot / rot;

    // Orient the circle so the segment-side cylinder has positive area.
    let eta1_raw = (seg * gamma.conj()).im;
    if eta1_raw.abs() < 1e-12 * seg.norm() * gamma.norm() {
        return Err(TorusError::Flow(crate::error::FlowError::SpecialPosition(
            "alignment circle is parallel to the segment".into(),
        )));
    }
    let circle = if eta1_raw > 0.0 { gamma } else { -gamma };
    let eta1 = (seg * circle.conj()).im;

    // Complete the crossing segment from the lattice.
    let (u1, u2) = holonomy_lattice(surface)?;
    let (af, bf) = lattice_coords(u1, u2, circle);
    let (a, b) = (af.round() as i64, bf.round() as i64);
    if (af - a as f64).abs() > 1e-6 || (bf - b as f64).abs() > 1e-6 {
        return Err(bad("alignment circle is not a lattice vector"));
    }
    if gcd(a.unsigned_abs(), b.unsigned_abs()) != 1 {
        return Err(bad("alignment circle is not primitive"));
    }
    // Bezout completion: x a + y b = 1, mu = -y u1 + x u2.
    let (x, y) = bezout(a, b);
    let mu = u1 * (-y as f64) + u2 * (x as f64);
    let area = surface.total_area();
    let eta2_target = area - eta1;
    let eta2_of = |w: Complex| (circle * w.conj()).im;
    let w_plus = seg - mu;
    let w_minus = seg + mu;
    let w_base = if (eta2_of(w_plus) - eta2_target).abs() < (eta2_of(w_minus) - eta2_target).abs()
    {
        w_plus
    } else {
        w_minus
    };
    if (eta2_of(w_base) - eta2_target).abs() > 1e-6 * (1.0 + area) {
        return Err(bad("cylinder areas do not add up to the surface area"));
    }
    // Reduce modulo the circle to shorten the horizontal length.
    let k = if circle.re.abs() > 1e-12 {
        (w_base.re / circle.re).round()
    } else {
        0.0
    };
    let crossing = w_base - circle * k;
    let triple = TorusTriple::new(seg, circle, crossing);
    Ok(CylinderDecomposition {
        circle,
        time,
        areas: (eta1, eta2_of(crossing)),
        crossing,
        triple,
    })
}

fn gcd(a: u64, b: u64) -> u64 {
    if b == 0 {
        a.max(1)
    } else {
        gcd(b, a % b)
    }
}

/// Extended Euclid: `(x, y)` with `x a + y b = gcd(a, b)`.
fn bezout(a: i64, b: i64) -> (i64, i64) {
    if b == 0 {
        (a.signum(), 0)
    } else {
        let (x, y) = bezout(b, a % b);
        (y, x - (a / b) * y)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn energy_of_reference_triple() {
        let t = TorusTriple::new(
            Complex::new(1.0, 0.0),
            Complex::new(1.0, -1.0),
            Complex::new(0.0, -1.0),
        );
        assert_relative_eq!(t.eta1(), 1.0, epsilon = 1e-12);
        assert_relative_eq!(t.eta2(), 1.0, epsilon = 1e-12);
        assert_relative_eq!(t.energy(), (-3.0f64).exp(), epsilon = 1e-12);
        let s = rho(&t).unwrap();
        assert_relative_eq!(s.total_area(), 2.0, epsilon = 1e-12);
        assert_relative_eq!(s.forest_length(), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn energy_scaling_is_quadratic() {
        let t = TorusTriple::new(
            Complex::new(1.1, 0.3),
            Complex::new(0.8, -0.7),
            Complex::new(0.2, -0.9),
        );
        let s = 1.7;
        let ts = TorusTriple::new(t.seg * s, t.cyl * s, t.crossing * s);
        let expo = -t.energy().ln();
        let expo_s = -ts.energy().ln();
        assert_relative_eq!(expo_s, s * s * expo, epsilon = 1e-9);
    }

    #[test]
    fn rho_rejects_degenerate_triples() {
        let t = TorusTriple::new(
            Complex::new(0.0, 0.0),
            Complex::new(1.0, -1.0),
            Complex::new(0.0, -1.0),
        );
        assert!(matches!(rho(&t), Err(TorusError::NotInD { .. })));
    }

    #[test]
    fn reference_value() {
        assert_relative_eq!(analytic_reference(), 12.566370614359172, epsilon = 1e-12);
    }

    #[test]
    fn decompose_recovers_cylinder_data() {
        let t = TorusTriple::new(
            Complex::new(1.03, 0.21),
            Complex::new(0.73, -0.61),
            Complex::new(0.17, -0.83),
        );
        let s = rho(&t).unwrap();
        let dec = cylinder_decompose(&s, 0, Complex::new(0.0, 1.0)).unwrap();
        // Canonical triples round-trip exactly.
        let t2 = dec.triple;
        assert!(t2.in_domain());
        let s2 = rho(&t2).unwrap();
        let dec2 = cylinder_decompose(&s2, 0, Complex::new(0.0, 1.0)).unwrap();
        assert_relative_eq!(dec2.triple.eta1(), t2.eta1(), epsilon = 1e-9);
        assert_relative_eq!(dec2.triple.eta2(), t2.eta2(), epsilon = 1e-9);
        assert_relative_eq!(dec2.triple.seg.norm(), t2.seg.norm(), epsilon = 1e-9);
        assert_relative_eq!(dec.areas.0 + dec.areas.1, s.total_area(), epsilon = 1e-9);
    }

    #[test]
    fn decompose_rejects_parallel_direction() {
        let t = TorusTriple::new(
            Complex::new(1.03, 0.21),
            Complex::new(0.73, -0.61),
            Complex::new(0.17, -0.83),
        );
        let s = rho(&t).unwrap();
        let err = cylinder_decompose(&s, 0, Complex::new(1.03, 0.21));
        assert!(matches!(err, Err(TorusError::ParallelDirection)));
    }
}
