//! Kernels on finite spaces and their measured certificates.
//!
//! A [`KernelSpec`] names a builtin family; [`KernelMatrix`] caches its values
//! off the diagonal. [`certify`] measures the size constant, a modulus of
//! continuity, non-degeneracy in both orientations and the weak-type tail.

use std::collections::BTreeMap;

use num_complex::Complex64;
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::space::SpaceModel;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum KernelFamily {
    /// `σ(x, y) / V(x, y)` with `σ = ±1` from the order along a coordinate axis.
    PowerSign,
    /// `((x - y)/|x - y|)_j / V(x, y)` on embedded points.
    RieszLike,
    /// `1 / (x - y)` along a coordinate axis.
    HilbertGrid,
    /// A base family times `1 + a u(x, y)` with seeded `u ∈ [-1, 1]`.
    Perturbed,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KernelParams {
    /// Coordinate axis for `power-sign` orientation and `hilbert-grid`.
    #[serde(default)]
    pub axis: usize,
    /// Component `j` of `riesz-like`.
    #[serde(default)]
    pub component: usize,
    /// `power-sign` with `σ ≡ 1`.
    #[serde(default)]
    pub constant_sign: bool,
    /// Base family of `perturbed`; defaults to `power-sign`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub base: Option<KernelFamily>,
}

impl Default for KernelParams {
    fn default() -> Self {
        KernelParams {
            axis: 0,
            component: 0,
            constant_sign: false,
            base: None,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Perturbation {
    pub amplitude: f64,
    #[serde(default)]
    pub seed: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KernelSpec {
    pub family: KernelFamily,
    #[serde(default)]
    pub params: KernelParams,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub perturbation: Option<Perturbation>,
    /// Evaluate `K(y, x)` instead of `K(x, y)`.
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub transposed: bool,
}

impl KernelSpec {
    pub fn new(family: KernelFamily) -> Self {
        KernelSpec {
            family,
            params: KernelParams::default(),
            perturbation: None,
            transposed: false,
        }
    }

    pub fn with_params(mut self, params: KernelParams) -> Self {
        self.params = params;
        self
    }

    pub fn perturbed(base: KernelFamily, amplitude: f64, seed: u64) -> Self {
        KernelSpec {
            family: KernelFamily::Perturbed,
            params: KernelParams {
                base: Some(base),
                ..KernelParams::default()
            },
            perturbation: Some(Perturbation { amplitude, seed }),
            transposed: false,
        }
    }
}

/// The kernel `K*(x, y) = K(y, x)`.
pub fn adjoint(spec: &KernelSpec) -> KernelSpec {
    KernelSpec {
        transposed: !spec.transposed,
        ..spec.clone()
    }
}

fn coordinate(space: &SpaceModel, x: usize, axis: usize) -> Result<f64> {
    match space.coords() {
        Some(c) => c[x]
            .get(axis)
            .copied()
            .ok_or_else(|| Error::param("axis", format!("space has no coordinate {axis}"))),
        None => Ok(x as f64),
    }
}

fn unit_noise(seed: u64, n: usize, x: usize, y: usize) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_word_pos(2 * (x * n + y) as u128);
    let u = (rng.next_u64() >> 11) as f64 / (1u64 << 53) as f64;
    2.0 * u - 1.0
}

fn evaluate_family(family: KernelFamily, spec: &KernelSpec, space: &SpaceModel, x: usize, y: usize) -> Result<f64> {
    let p = &spec.params;
    match family {
        KernelFamily::PowerSign => {
            let sigma = if p.constant_sign {
                1.0
            } else {
                let (cx, cy) = (coordinate(space, x, p.axis)?, coordinate(space, y, p.axis)?);
                if cy > cx || (cy == cx && y > x) {
                    1.0
                } else {
                    -1.0
                }
            };
            Ok(sigma / space.volume(x, y)?)
        }
        KernelFamily::RieszLike => {
            let c = space
                .coords()
                .ok_or_else(|| Error::param("family", "riesz-like needs coordinates"))?;
            if p.component >= c[x].len() {
                return Err(Error::param("component", format!("space has no coordinate {}", p.component)));
            }
            let diff: Vec<f64> = c[x].iter().zip(&c[y]).map(|(a, b)| a - b).collect();
            let norm = diff.iter().map(|v| v * v).sum::<f64>().sqrt();
            if norm == 0.0 {
                return Err(Error::domain("riesz-like kernel at coincident coordinates"));
            }
            Ok(diff[p.component] / norm / space.volume(x, y)?)
        }
        KernelFamily::HilbertGrid => {
            let diff = coordinate(space, x, p.axis)? - coordinate(space, y, p.axis)?;
            if diff == 0.0 {
                return Err(Error::domain("hilbert-grid kernel at coincident coordinates"));
            }
            Ok(1.0 / diff)
        }
        KernelFamily::Perturbed => {
            let base = p.base.unwrap_or(KernelFamily::PowerSign);
            if base == KernelFamily::Perturbed {
                return Err(Error::param("base", "perturbed kernels need a builtin base"));
            }
            let amp = spec.perturbation.map_or(0.5, |q| q.amplitude);
            let seed = spec.perturbation.map_or(0, |q| q.seed);
            Ok(evaluate_family(base, spec, space, x, y)? * (1.0 + amp * unit_noise(seed, space.len(), x, y)))
        }
    }
}

/// `K(x, y)`; the diagonal is a domain error.
pub fn evaluate(spec: &KernelSpec, space: &SpaceModel, x: usize, y: usize) -> Result<Complex64> {
    if x == y {
        return Err(Error::domain("kernel evaluated on the diagonal"));
    }
    let (a, b) = if spec.transposed { (y, x) } else { (x, y) };
    let mut v = evaluate_family(spec.family, spec, space, a, b)?;
    if spec.family != KernelFamily::Perturbed {
        if let Some(pert) = spec.perturbation {
            v *= 1.0 + pert.amplitude * unit_noise(pert.seed, space.len(), a, b);
        }
    }
    Ok(Complex64::new(v, 0.0))
}

/// Kernel values for all pairs; the diagonal holds zero and is never read as a value.
#[derive(Clone, Debug, PartialEq)]
pub struct KernelMatrix {
    n: usize,
    values: Vec<Complex64>,
}

impl KernelMatrix {
    pub fn build(spec: &KernelSpec, space: &SpaceModel) -> Result<Self> {
        let n = space.len();
        let rows: Vec<Vec<Complex64>> = (0..n)
            .into_par_iter()
            .map(|x| {
                (0..n)
                    .map(|y| if x == y { Ok(Complex64::new(0.0, 0.0)) } else { evaluate(spec, space, x, y) })
                    .collect::<Result<Vec<_>>>()
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(KernelMatrix {
            n,
            values: rows.into_iter().flatten().collect(),
        })
    }

    /// A matrix from explicit values, row-major; the diagonal is ignored.
    pub fn from_values(n: usize, mut values: Vec<Complex64>) -> Result<Self> {
        if values.len() != n * n {
            return Err(Error::param("kernel", format!("{} values for {n} points", values.len())));
        }
        for i in 0..n {
            values[i * n + i] = Complex64::new(0.0, 0.0);
        }
        Ok(KernelMatrix { n, values })
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> Complex64 {
        self.values[x * self.n + y]
    }

    pub fn transpose(&self) -> KernelMatrix {
        let n = self.n;
        let mut values = vec![Complex64::new(0.0, 0.0); n * n];
        for x in 0..n {
            for y in 0..n {
                values[y * n + x] = self.values[x * n + y];
            }
        }
        KernelMatrix { n, values }
    }

    pub fn scale(&self, c: Complex64) -> KernelMatrix {
        KernelMatrix {
            n: self.n,
            values: self.values.iter().map(|v| v * c).collect(),
        }
    }

    pub fn is_real(&self) -> bool {
        self.values.iter().all(|v| v.im == 0.0)
    }
}

/// Constants `(c0, C̄)` such that every ball class `B(x, r)` has a point `y` with
/// `r ≤ d(x, y) < C̄ r` and `|K| ≥ 1 / (c0 µ(B(x, r)))`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct NonDegeneracy {
    pub c0: f64,
    pub c_bar: f64,
    /// Center and radius attaining `c0`.
    pub witness: Option<(usize, f64)>,
    pub balls_checked: usize,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct KernelCertificate {
    /// `max |K(x, y)| V(x, y)`.
    pub c_k: f64,
    pub c_k_witness: (usize, usize),
    /// Points `(t, ω(t))` of the nondecreasing envelope.
    pub envelope: Vec<(f64, f64)>,
    /// `∫ ω(t) dt / t` from the smallest sampled `t` to 1.
    pub dini_value: f64,
    /// `ω` at the smallest sampled `t`: the integral below the cutoff grows at
    /// most this much per unit of `ln(1/t)` if `ω` stays flat there.
    pub dini_tail_rate: f64,
    /// `max (ω(a + b) - ω(a) - ω(b))^+` over sampled `a, b`.
    pub subadditivity_defect: f64,
    /// Quantifier over `x` around each `y` reversed: `y` found around `x`.
    pub nondeg_y: NonDegeneracy,
    /// `x` found around each `y`.
    pub nondeg_x: NonDegeneracy,
    /// Smallest `C` with `µ{y ≠ x : |K(x, y)| > t} ≤ C / t` for all `x`, `t`.
    pub weak_type_c: f64,
    pub a0: f64,
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct CertifyOptions {
    /// Annulus ratio `C̄` for the non-degeneracy search.
    pub c_bar: f64,
}

impl Default for CertifyOptions {
    fn default() -> Self {
        CertifyOptions { c_bar: 4.0 }
    }
}

/// Measures every constant of a kernel on a space.
pub fn certify(spec: &KernelSpec, space: &SpaceModel, options: CertifyOptions) -> Result<KernelCertificate> {
    let k = KernelMatrix::build(spec, space)?;
    certify_matrix(&k, space, options)
}

pub fn certify_matrix(k: &KernelMatrix, space: &SpaceModel, options: CertifyOptions) -> Result<KernelCertificate> {
    let n = space.len();
    if n < 2 {
        return Err(Error::domain("kernel certificates need at least two points"));
    }
    if !(options.c_bar > 1.0) {
        return Err(Error::param("c_bar", "annulus ratio must exceed 1"));
    }
    let a0 = space.quasi_triangle_constant().a0;

    let mut c_k = 0.0;
    let mut c_k_witness = (0, 1);
    for x in 0..n {
        for y in 0..n {
            if x != y {
                let v = k.get(x, y).norm() * space.volume(x, y)?;
                if v > c_k {
                    c_k = v;
                    c_k_witness = (x, y);
                }
            }
        }
    }

    // smoothness samples, reduced to the maximum per distinct t
    let samples: Vec<BTreeMap<u64, f64>> = (0..n)
        .into_par_iter()
        .map(|x| {
            let mut local: BTreeMap<u64, f64> = BTreeMap::new();
            for y in 0..n {
                if y == x {
                    continue;
                }
                let dxy = space.d(x, y);
                let v = space.volume(x, y).expect("off-diagonal");
                for xp in 0..n {
                    if xp == x {
                        continue;
                    }
                    let dxx = space.d(x, xp);
                    if dxx >= dxy / (2.0 * a0) {
                        continue;
                    }
                    let t = dxx / dxy;
                    let val = v * ((k.get(x, y) - k.get(xp, y)).norm() + (k.get(y, x) - k.get(y, xp)).norm());
                    let e = local.entry(t.to_bits()).or_insert(0.0);
                    *e = e.max(val);
                }
            }
            local
        })
        .collect();
    let mut merged: BTreeMap<u64, f64> = BTreeMap::new();
    for m in samples {
        for (t, v) in m {
            let e = merged.entry(t).or_insert(0.0);
            *e = e.max(v);
        }
    }
    // positive finite floats order like their bit patterns
    let mut envelope = Vec::with_capacity(merged.len());
    let mut run: f64 = 0.0;
    for (t, v) in merged {
        run = run.max(v);
        envelope.push((f64::from_bits(t), run));
    }
    let (dini_value, dini_tail_rate) = dini(&envelope);
    let subadditivity_defect = subadditivity_defect(&envelope);

    let nondeg_y = non_degeneracy(k, space, options.c_bar, false);
    let nondeg_x = non_degeneracy(k, space, options.c_bar, true);
    let weak_type_c = weak_type_constant(k, space);

    Ok(KernelCertificate {
        c_k,
        c_k_witness,
        envelope,
        dini_value,
        dini_tail_rate,
        subadditivity_defect,
        nondeg_y,
        nondeg_x,
        weak_type_c,
        a0,
    })
}

fn dini(envelope: &[(f64, f64)]) -> (f64, f64) {
    if envelope.is_empty() {
        return (0.0, 0.0);
    }
    let mut total = 0.0;
    for w in envelope.windows(2) {
        let (t0, v0) = w[0];
        let (t1, v1) = w[1];
        total += 0.5 * (v0 / t0 + v1 / t1) * (t1 - t0);
    }
    // the envelope is flat from its last sample up to t = 1
    let (tl, vl) = *envelope.last().unwrap();
    total += vl * (1.0 / tl).ln();
    (total, envelope[0].1)
}

/// Step evaluation of the envelope: value at the largest sample `≤ t`.
pub fn envelope_at(envelope: &[(f64, f64)], t: f64) -> f64 {
    let i = envelope.partition_point(|&(s, _)| s <= t);
    if i == 0 {
        0.0
    } else {
        envelope[i - 1].1
    }
}

fn subadditivity_defect(envelope: &[(f64, f64)]) -> f64 {
    let tmax = envelope.last().map_or(0.0, |e| e.0);
    let mut worst: f64 = 0.0;
    for (i, &(a, wa)) in envelope.iter().enumerate() {
        for &(b, wb) in &envelope[i..] {
            if a + b > tmax {
                break;
            }
            worst = worst.max(envelope_at(envelope, a + b) - wa - wb);
        }
    }
    worst
}

fn non_degeneracy(k: &KernelMatrix, space: &SpaceModel, c_bar: f64, around_y: bool) -> NonDegeneracy {
    let n = space.len();
    let mut c0: f64 = 0.0;
    let mut witness = None;
    let mut checked = 0;
    for x in 0..n {
        let ends = space.shell_ends(x);
        for w in ends.windows(2) {
            // the ball class of shell w[0] admits radii up to the next distance
            let r = space.shell_distance(x, w[1]);
            let mu = space.prefix_measure(x, w[0]);
            let best = space.order(x)[w[0]..]
                .iter()
                .filter(|&&y| space.d(x, y) < c_bar * r)
                .map(|&y| if around_y { k.get(y, x) } else { k.get(x, y) }.norm())
                .fold(0.0, f64::max);
            checked += 1;
            let need = if best > 0.0 { 1.0 / (mu * best) } else { f64::INFINITY };
            if need > c0 {
                c0 = need;
                witness = Some((x, r));
            }
        }
    }
    NonDegeneracy {
        c0,
        c_bar,
        witness,
        balls_checked: checked,
    }
}

fn weak_type_constant(k: &KernelMatrix, space: &SpaceModel) -> f64 {
    let n = space.len();
    (0..n)
        .map(|x| {
            let mut vals: Vec<(f64, f64)> =
                (0..n).filter(|&y| y != x).map(|y| (k.get(x, y).norm(), space.mass(y))).collect();
            vals.sort_by(|a, b| b.0.total_cmp(&a.0));
            let mut acc = 0.0;
            let mut best: f64 = 0.0;
            for (i, &(v, m)) in vals.iter().enumerate() {
                acc += m;
                if i + 1 == vals.len() || vals[i + 1].0 != v {
                    best = best.max(v * acc);
                }
            }
            best
        })
        .fold(0.0, f64::max)
}

/// Whether `c_{K*} ≤ C_µ (2 A0)^Q c_K`, returning both sides.
pub fn adjoint_size_bound(cert: &KernelCertificate, adjoint_cert: &KernelCertificate, c_mu: f64, q: f64) -> (bool, f64, f64) {
    let bound = c_mu * (2.0 * cert.a0).powf(q) * cert.c_k;
    (adjoint_cert.c_k <= bound * (1.0 + 1e-12), adjoint_cert.c_k, bound)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::space::tests::line;

    #[test]
    fn hilbert_values() {
        let s = line(4);
        let h = KernelSpec::new(KernelFamily::HilbertGrid);
        assert_eq!(evaluate(&h, &s, 0, 1).unwrap().re, -1.0);
        assert!(evaluate(&h, &s, 2, 2).is_err());
        let k = KernelMatrix::build(&h, &s).unwrap();
        for x in 0..4 {
            for y in 0..4 {
                assert_eq!(k.get(x, y), -k.get(y, x));
            }
        }
        let kt = KernelMatrix::build(&adjoint(&h), &s).unwrap();
        assert_eq!(kt, k.scale(Complex64::new(-1.0, 0.0)));
        assert_eq!(adjoint(&adjoint(&h)), h);
    }

    #[test]
    fn power_sign_values() {
        let s = line(4);
        let k = KernelSpec::new(KernelFamily::PowerSign);
        assert_eq!(evaluate(&k, &s, 0, 3).unwrap().re, 1.0 / 3.0);
        assert_eq!(evaluate(&k, &s, 3, 0).unwrap().re, -1.0 / 3.0);
        let flat = k.with_params(KernelParams {
            constant_sign: true,
            ..Default::default()
        });
        let cert = certify(&flat, &s, CertifyOptions::default()).unwrap();
        assert_eq!(cert.c_k, 1.0);
    }

    #[test]
    fn hilbert_size_constant_by_pairs() {
        let s = line(4);
        let cert = certify(&KernelSpec::new(KernelFamily::HilbertGrid), &s, CertifyOptions::default()).unwrap();
        let mut brute: f64 = 0.0;
        for x in 0..4 {
            for y in 0..4 {
                if x != y {
                    brute = brute.max(s.volume(x, y).unwrap() / (x as f64 - y as f64).abs());
                }
            }
        }
        assert_eq!(cert.c_k, brute);
    }

    #[test]
    fn orientation_duality() {
        let s = line(9);
        let spec = KernelSpec::new(KernelFamily::PowerSign);
        let a = certify(&spec, &s, CertifyOptions::default()).unwrap();
        let b = certify(&adjoint(&spec), &s, CertifyOptions::default()).unwrap();
        assert_eq!(a.nondeg_x.c0, b.nondeg_y.c0);
        assert_eq!(a.nondeg_y.c0, b.nondeg_x.c0);
    }

    #[test]
    fn weak_type_holds_at_every_level() {
        let s = line(12);
        let spec = KernelSpec::new(KernelFamily::HilbertGrid);
        let cert = certify(&spec, &s, CertifyOptions::default()).unwrap();
        let k = KernelMatrix::build(&spec, &s).unwrap();
        for x in 0..12 {
            for y in 0..12 {
                if x == y {
                    continue;
                }
                let t = k.get(x, y).norm();
                let tail: f64 = (0..12).filter(|&z| z != x && k.get(x, z).norm() > t).map(|z| s.mass(z)).sum();
                assert!(tail <= cert.weak_type_c / t + 1e-12);
            }
        }
    }

    #[test]
    fn envelope_is_monotone_and_small_near_zero() {
        let s = line(32);
        let cert = certify(&KernelSpec::new(KernelFamily::HilbertGrid), &s, CertifyOptions::default()).unwrap();
        assert!(cert.envelope.windows(2).all(|w| w[0].1 <= w[1].1 && w[0].0 < w[1].0));
        let (t0, w0) = cert.envelope[0];
        let (_, wl) = *cert.envelope.last().unwrap();
        assert!(t0 < 0.05 && w0 < wl);
        assert!(cert.dini_value.is_finite());
    }

    #[test]
    fn spec_document() {
        let text = r#"{"family":"perturbed","params":{"base":"hilbert-grid"},"perturbation":{"amplitude":0.25,"seed":3}}"#;
        let spec: KernelSpec = serde_json::from_str(text).unwrap();
        let s = line(5);
        let base = KernelSpec::new(KernelFamily::HilbertGrid);
        for (x, y) in [(0, 1), (3, 1), (4, 0)] {
            let r = evaluate(&spec, &s, x, y).unwrap().re / evaluate(&base, &s, x, y).unwrap().re;
            assert!((0.75..=1.25).contains(&r));
        }
        let plain: KernelSpec = serde_json::from_str(r#"{"family":"hilbert-grid"}"#).unwrap();
        assert_eq!(plain, base);
    }
}
