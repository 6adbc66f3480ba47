// Stress: cylinder decomposition round trip on random canonical triples.
use flatsurf::geom::Complex;
use flatsurf::{samples, torus};

#[test]
fn stress_roundtrip() {
    let mut r = samples::rng(99);
    let mut worst = 0.0f64;
    let mut canonical_changed = 0usize;
    for _ in 0..1000 {
        let (z1, z2, z3) = samples::random_torus_triple(&mut r);
        let raw = torus::TorusTriple::new(z1, z2, z3);
        let s = match torus::rho(&raw) { Ok(s) => s, Err(_) => continue };
        // Canonicalize once through the decomposition.
        let t = match torus::cylinder_decompose(&s, 0, Complex::new(0.0, 1.0)) {
            Ok(d) => d.triple,
            Err(_) => continue, // special positions rejected
        };
        if (t.eta1() - raw.eta1()).abs() > 1e-9 || (t.eta2() - raw.eta2()).abs() > 1e-9 {
            canonical_changed += 1;
        }
        let s2 = torus::rho(&t).unwrap();
        let d2 = match torus::cylinder_decompose(&s2, 0, Complex::new(0.0, 1.0)) {
            Ok(d) => d, Err(_) => continue };
        let t2 = d2.triple;
        worst = worst
            .max((t2.eta1() - t.eta1()).abs())
            .max((t2.eta2() - t.eta2()).abs())
            .max((t2.seg.norm() - t.seg.norm()).abs());
    }
    eprintln!("worst roundtrip error {worst:.3e}; raw triples with different canonical form: {canonical_changed}");
    assert!(worst < 1e-9);
}
