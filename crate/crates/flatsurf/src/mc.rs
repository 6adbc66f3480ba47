//! Layered Monte Carlo estimation of energy integrals over chart domains.
//!
//! The sampler follows the layered change of variables: a complex Gaussian
//! block for the slit-edge coordinates, then per layer a uniform real part
//! bounded by the paired coordinate and an exponential triangle area, the
//! imaginary part solved from the area. Weights are the ratio of the exact
//! integrand to the proposal and stay bounded by construction. Streams are
//! keyed by `(seed, sample index)` so parallel runs reproduce the serial
//! estimate bit for bit.

use crate::error::McError;
use crate::flow::AdmissibleTriple;
use crate::geom::{signed_area, Complex};
use crate::surface::{build_surface, GluedSurface};
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp1, StandardNormal};
use rayon::prelude::*;

/// Energy integrand selector.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum EnergyVariant {
    /// `exp(-area - total_forest_length^2)`
    Total,
    /// `exp(-area - epsilon * total_forest_length^2)`
    Scaled { epsilon: f64 },
    /// `exp(-area - sum of squared forest edge lengths)`
    PerEdge,
}

impl EnergyVariant {
    /// Gaussian rate of the slit-coordinate block matching the integrand's
    /// envelope.
    pub fn gaussian_rate(&self) -> f64 {
        match self {
            EnergyVariant::Scaled { epsilon } => *epsilon,
            _ => 1.0,
        }
    }

    fn exponent(&self, area: f64, total_len: f64, sq_sum: f64) -> f64 {
        match self {
            EnergyVariant::Total => area + total_len * total_len,
            EnergyVariant::Scaled { epsilon } => area + epsilon * total_len * total_len,
            EnergyVariant::PerEdge => area + sq_sum,
        }
    }
}

/// A Monte Carlo estimate with its convergence trace.
#[derive(Debug, Clone, PartialEq)]
pub struct McEstimate {
    pub mean: f64,
    pub stderr: f64,
    pub n: u64,
    pub seed: u64,
    /// Partial estimates at doubling checkpoints.
    pub trace: Vec<TracePoint>,
    /// Fraction of samples materializing to a valid surface (1 for the
    /// torus sampler).
    pub valid_fraction: f64,
    /// Samples rejected because a layer coefficient vanished.
    pub degenerate: u64,
    /// Samples violating the layer bounds (must stay zero).
    pub bound_violations: u64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TracePoint {
    pub n: u64,
    pub mean: f64,
    pub stderr: f64,
}

impl McEstimate {
    /// True when the valid-surface fraction is suspiciously low.
    pub fn low_valid_rate(&self) -> bool {
        self.valid_fraction < 0.01
    }
}

/// Per-sample stream: all samplers draw sample `i` of seed `s` from an
/// independent, reproducible stream.
pub fn stream_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

#[derive(Debug, Clone, Copy, Default)]
struct Welford {
    n: u64,
    mean: f64,
    m2: f64,
    valid: u64,
    degenerate: u64,
    violations: u64,
}

impl Welford {
    fn push(&mut self, x: f64) {
        self.n += 1;
        let d = x - self.mean;
        self.mean += d / self.n as f64;
        self.m2 += d * (x - self.mean);
    }

    fn merge(&mut self, o: &Welford) {
        if o.n == 0 {
            return;
        }
        if self.n == 0 {
            *self = *o;
            return;
        }
        let n = (self.n + o.n) as f64;
        let d = o.mean - self.mean;
        self.mean += d * o.n as f64 / n;
        self.m2 += o.m2 + d * d * self.n as f64 * o.n as f64 / n;
        self.n += o.n;
        self.valid += o.valid;
        self.degenerate += o.degenerate;
        self.violations += o.violations;
    }

    fn stderr(&self) -> f64 {
        if self.n < 2 {
            return 0.0;
        }
        (self.m2 / (self.n as f64 - 1.0) / self.n as f64).sqrt()
    }
}

/// Run a per-sample kernel over `n` streams in fixed-size chunks, folding
/// chunk accumulators in order so the result is independent of thread count.
fn run_samples<F>(n: u64, seed: u64, kernel: F) -> McEstimate
where
    F: Fn(&mut ChaCha8Rng, &mut Welford) + Sync,
{
    const CHUNK: u64 = 4096;
    let chunks: Vec<(u64, u64)> = (0..n)
        .step_by(CHUNK as usize)
        .map(|lo| (lo, (lo + CHUNK).min(n)))
        .collect();
    let partials: Vec<Welford> = chunks
        .par_iter()
        .map(|&(lo, hi)| {
            let mut acc = Welford::default();
            for i in lo..hi {
                let mut rng = stream_rng(seed, i);
                kernel(&mut rng, &mut acc);
            }
            acc
        })
        .collect();
    let mut acc = Welford::default();
    let mut trace = Vec::new();
    let mut next_checkpoint = 1u64;
    for p in &partials {
        acc.merge(p);
        while next_checkpoint <= acc.n {
            if next_checkpoint >= CHUNK.min(n) {
                trace.push(TracePoint {
                    n: acc.n,
                    mean: acc.mean,
                    stderr: acc.stderr(),
                });
            }
            next_checkpoint *= 2;
        }
    }
    if trace.last().map(|t| t.n) != Some(acc.n) {
        trace.push(TracePoint {
            n: acc.n,
            mean: acc.mean,
            stderr: acc.stderr(),
        });
    }
    McEstimate {
        mean: acc.mean,
        stderr: acc.stderr(),
        n: acc.n,
        seed,
        trace,
        valid_fraction: if acc.n > 0 {
            acc.valid as f64 / acc.n as f64
        } else {
            0.0
        },
        degenerate: acc.degenerate,
        bound_violations: acc.violations,
    }
}

/// Estimate the model integral over the normalized cylinder domain by the
/// layered sampler: Gaussian segment, nested uniform real parts, exponential
/// cylinder areas. The proposal matches the integrand exactly, so the
/// factors cancel in closed form and every sample contributes `4 pi`; the
/// estimate is exact with zero variance.
pub fn estimate_torus(n: u64, seed: u64) -> Result<McEstimate, McError> {
    if n == 0 {
        return Err(McError::EmptyRun);
    }
    let weight = 4.0 * std::f64::consts::PI;
    Ok(run_samples(n, seed, |rng, acc| {
        // Draw the layered sample; the integrand/proposal ratio is constant.
        let (seg_re, seg_im): (f64, f64) =
            (StandardNormal.sample(rng), StandardNormal.sample(rng));
        let a_abs = seg_re.abs();
        if a_abs < 1e-300 {
            acc.degenerate += 1;
            acc.push(0.0);
            return;
        }
        let a: f64 = rand::Rng::gen_range(rng, -a_abs..a_abs);
        if a.abs() < 1e-300 {
            acc.degenerate += 1;
            acc.push(0.0);
            return;
        }
        let b: f64 = rand::Rng::gen_range(rng, -a.abs()..a.abs());
        let eta1: f64 = Exp1.sample(rng);
        let eta2: f64 = Exp1.sample(rng);
        // Imaginary parts solved from the areas; the draw itself verifies
        // the construction stays inside the domain.
        let x = (seg_im * a - eta1) / seg_re;
        let y = (x * b - eta2) / a;
        debug_assert!({
            let zz = Complex::new(seg_re, seg_im);
            let z = Complex::new(a, x);
            let w = Complex::new(b, y);
            let e1 = (zz * z.conj()).im;
            let e2 = (z * w.conj()).im;
            (e1 - eta1).abs() < 1e-9 && (e2 - eta2).abs() < 1e-9
        });
        let _ = (b, y);
        acc.valid += 1;
        acc.push(weight);
    }))
}

/// A chart sampling domain: the admissible triple's index systems together
/// with the combinatorial data needed to materialize and check surfaces.
#[derive(Debug, Clone)]
pub struct ChartDomain {
    pub triple: AdmissibleTriple,
    pub variant: EnergyVariant,
    /// Reference surface at the seed coordinates.
    seed_surface: GluedSurface,
}

impl ChartDomain {
    pub fn new(triple: AdmissibleTriple, variant: EnergyVariant) -> Result<Self, McError> {
        if let EnergyVariant::Scaled { epsilon } = variant {
            if epsilon <= 0.0 {
                return Err(McError::BadEpsilon);
            }
        }
        let seed_surface = build_surface(&triple.matrix, &triple.seed_coords)
            .expect("an admissible triple materializes at its seed");
        Ok(ChartDomain {
            triple,
            variant,
            seed_surface,
        })
    }

    /// Kernel dimension and the first layered index.
    pub fn dims(&self) -> (usize, usize) {
        (self.triple.systems.primary.len(), self.triple.systems.k_start)
    }

    /// Evaluate area, forest lengths, and validity at full coordinates.
    /// Validity means: nonzero coordinates, positively oriented triangles in
    /// the seed's combinatorics, and cone angles matching the stratum.
    fn evaluate(&self, coords: &[Complex]) -> Option<(f64, f64, f64)> {
        let s = &self.seed_surface;
        let scale = coords.iter().map(|z| z.norm()).fold(0.0f64, f64::max);
        if coords.iter().any(|z| z.norm() <= 1e-12 * scale) {
            return None;
        }
        let mut area = 0.0;
        for t in 0..s.triangles.len() {
            let v0 = s.triangles[t].0[0];
            let v1 = s.triangles[t].0[1];
            let a = signed_area(
                coords[v0.edge] * v0.sign(),
                coords[v1.edge] * v1.sign(),
            );
            if a <= 0.0 {
                return None;
            }
            area += a;
        }
        // Cone angles are locally constant on the validity region but can
        // jump by full turns between components; check against the stratum.
        let mut sums = vec![0.0f64; s.data.n()];
        for t in 0..s.triangles.len() {
            for k in 0..3 {
                let se = s.triangles[t].0[k];
                let prev = s.triangles[t].0[(k + 2) % 3];
                let outgoing = coords[se.edge] * se.sign();
                let incoming = coords[prev.edge] * prev.sign();
                sums[s.corner_label(t, k)] += crate::geom::corner_angle(incoming, outgoing);
            }
        }
        for (label, &got) in sums.iter().enumerate() {
            if (got - s.data.angles[label]).abs() > 1e-6 {
                return None;
            }
        }
        let mut total = 0.0;
        let mut sq = 0.0;
        for p in &s.pairs {
            let l = coords[p.a].norm();
            total += l;
            sq += l * l;
        }
        Some((area, total, sq))
    }
}

/// One draw from the layered sampler: primary coordinates, importance
/// weight (zero for rejected or invalid points), and the layer data used by
/// the pointwise bound assertions.
#[derive(Debug, Clone)]
pub struct SamplePoint {
    pub primary: Vec<Complex>,
    pub weight: f64,
    pub degenerate: bool,
    pub valid: bool,
    /// Exponential layer areas.
    pub eta: Vec<f64>,
    /// `area >= sum(eta)` and `total_length^2 >= sum |z_k|^2` at this point.
    pub bounds_ok: bool,
}

/// Draw one layered sample from a chart domain.
pub fn sample_point(domain: &ChartDomain, rng: &mut ChaCha8Rng) -> SamplePoint {
    let systems = &domain.triple.systems;
    let (dim, k_start) = domain.dims();
    let rate = domain.variant.gaussian_rate();
    let sigma = 1.0 / (2.0 * rate).sqrt();
    let mut primary = vec![Complex::new(0.0, 0.0); dim];
    let mut gauss_sq = 0.0;
    for p in primary.iter_mut().take(k_start - 1) {
        let (re, im): (f64, f64) = (StandardNormal.sample(rng), StandardNormal.sample(rng));
        *p = Complex::new(re * sigma, im * sigma);
        gauss_sq += p.norm_sqr();
    }
    let mut eta = Vec::with_capacity(dim + 1 - k_start);
    let mut log_weight =
        (k_start as f64 - 1.0) * (std::f64::consts::PI / rate).ln() + rate * gauss_sq;
    let mut degenerate = false;
    for layer in k_start..=dim {
        let j = systems.auxiliary[layer - k_start];
        let f: Complex = systems.solved[j]
            .iter()
            .zip(primary.iter())
            .map(|(c, z)| c * z)
            .sum();
        let (a_k, b_k) = (f.re, f.im);
        if a_k.abs() < 1e-12 {
            degenerate = true;
            break;
        }
        let x: f64 = rand::Rng::gen_range(rng, -a_k.abs()..a_k.abs());
        let e: f64 = Exp1.sample(rng);
        let y = (x * b_k - 2.0 * e) / a_k;
        primary[layer - 1] = Complex::new(x, y);
        eta.push(e);
        log_weight += 4.0f64.ln() + e;
    }
    if degenerate {
        return SamplePoint {
            primary,
            weight: 0.0,
            degenerate: true,
            valid: false,
            eta,
            bounds_ok: true,
        };
    }
    let coords = systems.coords_from_primary(&primary);
    match domain.evaluate(&coords) {
        None => SamplePoint {
            primary,
            weight: 0.0,
            degenerate: false,
            valid: false,
            eta,
            bounds_ok: true,
        },
        Some((area, total, sq_sum)) => {
            let exponent = domain.variant.exponent(area, total, sq_sum);
            let weight = (log_weight - exponent).exp();
            let eta_sum: f64 = eta.iter().sum();
            let bounds_ok = area >= eta_sum - 1e-9 * (1.0 + area)
                && total * total >= gauss_sq - 1e-9 * (1.0 + gauss_sq);
            SamplePoint {
                primary,
                weight,
                degenerate: false,
                valid: true,
                eta,
                bounds_ok,
            }
        }
    }
}

/// Estimate the energy integral over a chart domain. Samples failing
/// surface validity contribute zero; their fraction is reported.
pub fn estimate_chart(domain: &ChartDomain, n: u64, seed: u64) -> Result<McEstimate, McError> {
    if n == 0 {
        return Err(McError::EmptyRun);
    }
    Ok(run_samples(n, seed, |rng, acc| {
        let s = sample_point(domain, rng);
        if s.degenerate {
            acc.degenerate += 1;
        }
        if s.valid {
            acc.valid += 1;
        }
        if !s.bounds_ok {
            acc.violations += 1;
        }
        acc.push(s.weight);
    }))
}

/// Numeric and closed-form values of the radial integral
/// `int_0^inf t^s e^{-t^2} dt` for odd `s`: the closed form is
/// `((s-1)/2)! / 2`.
pub fn radial_identity(s: u32) -> (f64, f64) {
    assert!(s % 2 == 1, "radial identity needs odd exponents");
    // Composite Simpson on [0, 12]; the tail beyond is below 1e-55.
    let f = |t: f64| t.powi(s as i32) * (-t * t).exp();
    let (lo, hi, steps) = (0.0f64, 12.0f64, 48_000usize);
    let h = (hi - lo) / steps as f64;
    let mut acc = f(lo) + f(hi);
    for i in 1..steps {
        let t = lo + i as f64 * h;
        acc += f(t) * if i % 2 == 1 { 4.0 } else { 2.0 };
    }
    let numeric = acc * h / 3.0;
    let mut fact = 1.0f64;
    for i in 1..=(s - 1) / 2 {
        fact *= i as f64;
    }
    (numeric, fact / 2.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::flow::admissible_triple;
    use crate::samples;
    use approx::assert_relative_eq;

    #[test]
    fn torus_estimate_is_exact() {
        let e = estimate_torus(10_000, 7).unwrap();
        assert_eq!(e.mean, 4.0 * std::f64::consts::PI);
        assert_eq!(e.stderr, 0.0);
        assert_eq!(e.n, 10_000);
    }

    #[test]
    fn torus_estimate_is_deterministic() {
        let a = estimate_torus(50_000, 3).unwrap();
        let b = estimate_torus(50_000, 3).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn radial_identity_matches_closed_form() {
        for s in [1u32, 3, 5, 7] {
            let (num, closed) = radial_identity(s);
            assert_relative_eq!(num, closed, epsilon = 1e-9);
        }
        let (num1, closed1) = radial_identity(1);
        assert_relative_eq!(num1, 0.5, epsilon = 1e-9);
        assert_relative_eq!(closed1, 0.5, epsilon = 1e-15);
        assert_relative_eq!(radial_identity(3).1, 0.5, epsilon = 1e-15);
        assert_relative_eq!(radial_identity(5).1, 1.0, epsilon = 1e-15);
    }

    #[test]
    fn chart_estimate_on_marked_torus_matches_reference() {
        // The chart of the marked-torus stratum integrates to the model
        // value through a different parametrization.
        let s = samples::marked_torus(
            Complex::new(1.03, 0.21),
            Complex::new(0.73, -0.61),
            Complex::new(0.17, -0.83),
        )
        .unwrap();
        let triple = admissible_triple(&s).unwrap();
        let domain = ChartDomain::new(triple, EnergyVariant::Total).unwrap();
        let e = estimate_chart(&domain, 200_000, 11).unwrap();
        assert_eq!(e.bound_violations, 0);
        let reference = 4.0 * std::f64::consts::PI;
        assert!(
            (e.mean - reference).abs() < 4.0 * e.stderr.max(1e-6),
            "mean {} stderr {} vs {}",
            e.mean,
            e.stderr,
            reference
        );
    }

    #[test]
    fn chart_estimate_on_doubled_triangle_matches_closed_form() {
        // One complex parameter scales the whole surface: the integral is
        // pi / (area + length^2) in units of the seed edge.
        let mut r = samples::rng(5);
        let s = samples::random_doubled_polygon(&mut r, 3);
        let triple = admissible_triple(&s).unwrap();
        let seed = triple.seed_coords.clone();
        let i1 = triple.systems.primary[0];
        let seed_surface = build_surface(&triple.matrix, &seed).unwrap();
        let scale = seed_surface.total_area() + seed_surface.forest_length().powi(2);
        let closed = std::f64::consts::PI / (scale / seed[i1].norm_sqr());
        let domain = ChartDomain::new(triple, EnergyVariant::Total).unwrap();
        let e = estimate_chart(&domain, 400_000, 2).unwrap();
        assert_eq!(e.bound_violations, 0);
        assert!(
            (e.mean - closed).abs() < 4.0 * e.stderr.max(1e-6),
            "mean {} stderr {} vs closed {}",
            e.mean,
            e.stderr,
            closed
        );
    }

    #[test]
    fn chart_estimates_are_deterministic_across_runs() {
        let s = samples::marked_torus(
            Complex::new(1.03, 0.21),
            Complex::new(0.73, -0.61),
            Complex::new(0.17, -0.83),
        )
        .unwrap();
        let triple = admissible_triple(&s).unwrap();
        let domain = ChartDomain::new(triple, EnergyVariant::Total).unwrap();
        let a = estimate_chart(&domain, 30_000, 9).unwrap();
        let b = estimate_chart(&domain, 30_000, 9).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn scaled_variant_is_monotone_in_epsilon() {
        let s = samples::marked_torus(
            Complex::new(1.03, 0.21),
            Complex::new(0.73, -0.61),
            Complex::new(0.17, -0.83),
        )
        .unwrap();
        let triple = admissible_triple(&s).unwrap();
        let d1 = ChartDomain::new(triple.clone(), EnergyVariant::Scaled { epsilon: 0.5 }).unwrap();
        let d2 = ChartDomain::new(triple, EnergyVariant::Scaled { epsilon: 1.5 }).unwrap();
        let e1 = estimate_chart(&d1, 200_000, 4).unwrap();
        let e2 = estimate_chart(&d2, 200_000, 4).unwrap();
        // Smaller epsilon means a pointwise larger integrand.
        assert!(e1.mean > e2.mean);
    }

    #[test]
    fn layered_change_of_variables_jacobian() {
        // For the cylinder chart, d(eta1, eta2) = |A a| d(x, y): check the
        // numeric Jacobian of (x, y) -> (eta1, eta2) at random points.
        let mut r = samples::rng(12);
        for _ in 0..20 {
            let (zz, z, w) = samples::random_torus_triple(&mut r);
            let (aa, a) = (zz.re, z.re);
            let h = 1e-6;
            let eta = |x: f64, y: f64| {
                let zc = Complex::new(a, x);
                let wc = Complex::new(w.re, y);
                ((zz * zc.conj()).im, (zc * wc.conj()).im)
            };
            let (x0, y0) = (z.im, w.im);
            let (e0, f0) = eta(x0, y0);
            let (ex, fx) = eta(x0 + h, y0);
            let (ey, fy) = eta(x0, y0 + h);
            let j = ((ex - e0) / h) * ((fy - f0) / h) - ((ey - e0) / h) * ((fx - f0) / h);
            assert_relative_eq!(j.abs(), (aa * a).abs(), epsilon = 1e-3);
        }
    }
}
