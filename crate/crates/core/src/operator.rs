//! Singular integral operators as dense matrices, commutators and weighted
//! operator norms.
//!
//! `T f(x) = Σ_{y ≠ x} K(x, y) f(y) µ(y)`; the diagonal is zero.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernel::{KernelMatrix, KernelSpec};
use crate::space::SpaceModel;
use crate::weights::conjugate;

const ZERO: Complex64 = Complex64 { re: 0.0, im: 0.0 };

/// The operator with matrix `M[x][y] = K(x, y) µ(y)`.
#[derive(Clone, Debug)]
pub struct OperatorMatrix {
    kernel: KernelMatrix,
    masses: Vec<f64>,
    spec: Option<KernelSpec>,
}

impl OperatorMatrix {
    pub fn new(spec: &KernelSpec, space: &SpaceModel) -> Result<Self> {
        Ok(OperatorMatrix {
            kernel: KernelMatrix::build(spec, space)?,
            masses: space.masses().to_vec(),
            spec: Some(spec.clone()),
        })
    }

    pub fn from_kernel(kernel: KernelMatrix, space: &SpaceModel) -> Result<Self> {
        if kernel.len() != space.len() {
            return Err(Error::param("kernel", "kernel size differs from space size"));
        }
        Ok(OperatorMatrix {
            kernel,
            masses: space.masses().to_vec(),
            spec: None,
        })
    }

    pub fn len(&self) -> usize {
        self.masses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.masses.is_empty()
    }

    pub fn kernel(&self) -> &KernelMatrix {
        &self.kernel
    }

    pub fn spec(&self) -> Option<&KernelSpec> {
        self.spec.as_ref()
    }

    /// The operator with kernel `K*(x, y) = K(y, x)`.
    pub fn adjoint(&self) -> OperatorMatrix {
        OperatorMatrix {
            kernel: self.kernel.transpose(),
            masses: self.masses.clone(),
            spec: self.spec.as_ref().map(crate::kernel::adjoint),
        }
    }

    pub fn entry(&self, x: usize, y: usize) -> Complex64 {
        self.kernel.get(x, y) * self.masses[y]
    }

    pub fn matrix(&self) -> DMatrix<Complex64> {
        let n = self.len();
        DMatrix::from_fn(n, n, |x, y| self.entry(x, y))
    }

    /// `T f`.
    pub fn apply(&self, f: &[Complex64]) -> Vec<Complex64> {
        let n = self.len();
        assert_eq!(f.len(), n, "function length");
        (0..n)
            .into_par_iter()
            .map(|x| {
                (0..n)
                    .filter(|&y| y != x)
                    .map(|y| self.kernel.get(x, y) * f[y] * self.masses[y])
                    .sum()
            })
            .collect()
    }

    /// `T* g(x) = Σ_{y ≠ x} K(y, x) g(y) µ(y)`.
    pub fn adjoint_apply(&self, g: &[Complex64]) -> Vec<Complex64> {
        let n = self.len();
        assert_eq!(g.len(), n, "function length");
        (0..n)
            .into_par_iter()
            .map(|x| {
                (0..n)
                    .filter(|&y| y != x)
                    .map(|y| self.kernel.get(y, x) * g[y] * self.masses[y])
                    .sum()
            })
            .collect()
    }

    /// `[b, T] f = b T f - T(b f)`.
    pub fn commutator_apply(&self, b: &[Complex64], f: &[Complex64]) -> Vec<Complex64> {
        let tf = self.apply(f);
        let bf: Vec<Complex64> = b.iter().zip(f).map(|(u, v)| u * v).collect();
        let tbf = self.apply(&bf);
        (0..self.len()).map(|x| b[x] * tf[x] - tbf[x]).collect()
    }

    /// Matrix of `[b, T]`: `(b(x) - b(y)) K(x, y) µ(y)`.
    pub fn commutator_matrix(&self, b: &[Complex64]) -> DMatrix<Complex64> {
        let n = self.len();
        DMatrix::from_fn(n, n, |x, y| if x == y { ZERO } else { (b[x] - b[y]) * self.entry(x, y) })
    }

    /// Bilinear pairing `⟨f, g⟩ = Σ f g µ`.
    pub fn pairing(&self, f: &[Complex64], g: &[Complex64]) -> Complex64 {
        pairing(&self.masses, f, g)
    }
}

/// Bilinear pairing `Σ f g µ`.
pub fn pairing(masses: &[f64], f: &[Complex64], g: &[Complex64]) -> Complex64 {
    f.iter().zip(g).zip(masses).map(|((a, b), m)| a * b * *m).sum()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NormMethod {
    SvdExact,
    BruteOracle,
    MultistartAscent,
}

impl std::str::FromStr for NormMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "svd-exact" => Ok(NormMethod::SvdExact),
            "brute-oracle" => Ok(NormMethod::BruteOracle),
            "multistart-ascent" => Ok(NormMethod::MultistartAscent),
            other => Err(Error::param("method", format!("unknown norm method `{other}`"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NormOptions {
    pub starts: usize,
    pub iterations: usize,
    pub seed: u64,
    /// Point budget of the brute-force grid.
    pub grid_budget: usize,
    /// Grid points handed to local polish.
    pub polish: usize,
}

impl Default for NormOptions {
    fn default() -> Self {
        NormOptions {
            starts: 64,
            iterations: 500,
            seed: 0,
            grid_budget: 400_000,
            polish: 16,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct NormEstimate {
    pub method: NormMethod,
    pub lower: f64,
    /// Certified upper bound; `None` when the method cannot certify one.
    pub upper: Option<f64>,
    /// A function with `‖f‖_{p,λ1} = 1` attaining `lower`.
    pub witness: Vec<Complex64>,
    pub p: f64,
    pub q: f64,
    pub lambda1: Option<Vec<f64>>,
    pub lambda2: Option<Vec<f64>>,
    pub options: NormOptions,
    /// Brute oracle only: grid resolution per face coordinate and points scanned.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grid: Option<(usize, usize)>,
}

impl NormEstimate {
    /// The upper bound if certified, else the lower bound.
    pub fn value(&self) -> f64 {
        self.upper.unwrap_or(self.lower)
    }
}

/// Estimates `‖M‖_{L^p_{λ1} → L^q_{λ2}}` for a matrix acting as `(Mf)(x) = Σ_y M[x][y] f(y)`.
///
/// Weights default to 1. Point masses enter through the norms.
#[allow(clippy::too_many_arguments)]
pub fn operator_norm(
    space: &SpaceModel,
    m: &DMatrix<Complex64>,
    p: f64,
    lambda1: Option<&[f64]>,
    q: f64,
    lambda2: Option<&[f64]>,
    method: NormMethod,
    options: NormOptions,
) -> Result<NormEstimate> {
    let n = space.len();
    if m.nrows() != n || m.ncols() != n {
        return Err(Error::param("matrix", format!("expected {n}x{n}, got {}x{}", m.nrows(), m.ncols())));
    }
    for (name, e) in [("p", p), ("q", q)] {
        if !(e >= 1.0 && e.is_finite()) {
            return Err(Error::param(name, format!("need 1 <= {name} < inf, got {e}")));
        }
    }
    for w in [lambda1, lambda2].into_iter().flatten() {
        if w.len() != n || w.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
            return Err(Error::param("weights", "weights must be positive with one value per point"));
        }
    }
    // G = D2 M D1^{-1}, D_i = diag(λ_i µ^{1/p_i})
    let d1: Vec<f64> = (0..n).map(|i| lambda1.map_or(1.0, |w| w[i]) * space.mass(i).powf(1.0 / p)).collect();
    let d2: Vec<f64> = (0..n).map(|i| lambda2.map_or(1.0, |w| w[i]) * space.mass(i).powf(1.0 / q)).collect();
    let g = DMatrix::from_fn(n, n, |i, j| m[(i, j)] * d2[i] / d1[j]);
    let unweight = |u: &DVector<Complex64>| -> Vec<Complex64> {
        let nu = lp(u.as_slice(), p);
        (0..n).map(|i| if nu > 0.0 { u[i] / d1[i] / nu } else { ZERO }).collect()
    };

    let mut est = NormEstimate {
        method,
        lower: 0.0,
        upper: None,
        witness: vec![ZERO; n],
        p,
        q,
        lambda1: lambda1.map(<[f64]>::to_vec),
        lambda2: lambda2.map(<[f64]>::to_vec),
        options,
        grid: None,
    };
    match method {
        NormMethod::SvdExact => {
            if p != 2.0 || q != 2.0 {
                return Err(Error::Capability(format!(
                    "svd-exact needs p = q = 2, got p = {p}, q = {q}; use multistart-ascent"
                )));
            }
            let svd = g.clone().svd(false, true);
            let (k, s) = svd
                .singular_values
                .iter()
                .enumerate()
                .fold((0, 0.0), |a, (i, &v)| if v > a.1 { (i, v) } else { a });
            est.lower = s;
            est.upper = Some(s);
            if s > 0.0 {
                let vt = svd.v_t.expect("requested");
                let v = DVector::from_iterator(n, vt.row(k).iter().map(|z| z.conj()));
                est.witness = unweight(&v);
            }
        }
        NormMethod::MultistartAscent => {
            let (val, u) = multistart(&g, p, q, options);
            est.lower = val;
            est.witness = unweight(&u);
        }
        NormMethod::BruteOracle => {
            if n > 6 {
                return Err(Error::Capability(format!(
                    "brute-oracle handles n <= 6, got n = {n}; use svd-exact or multistart-ascent"
                )));
            }
            let b = brute(&g, p, q, options);
            est.lower = b.lower;
            est.upper = b.upper;
            est.witness = unweight(&b.argmax);
            est.grid = Some((b.steps, b.points));
        }
    }
    Ok(est)
}

fn lp(v: &[Complex64], p: f64) -> f64 {
    v.iter().map(|z| z.norm().powf(p)).sum::<f64>().powf(1.0 / p)
}

/// `|z|^{r-2} z`, zero at zero.
fn duality_map(v: &DVector<Complex64>, r: f64) -> DVector<Complex64> {
    v.map(|z| {
        let a = z.norm();
        if a == 0.0 {
            ZERO
        } else {
            z * a.powf(r - 2.0)
        }
    })
}

fn ratio(g: &DMatrix<Complex64>, u: &DVector<Complex64>, p: f64, q: f64) -> f64 {
    let nu = lp(u.as_slice(), p);
    if nu == 0.0 {
        return 0.0;
    }
    lp((g * u).as_slice(), q) / nu
}

fn normalise(u: DVector<Complex64>, p: f64) -> DVector<Complex64> {
    let nu = lp(u.as_slice(), p);
    if nu > 0.0 {
        u / Complex64::new(nu, 0.0)
    } else {
        u
    }
}

/// Monotone ascent of `‖G u‖_q / ‖u‖_p`: the nonlinear power step when it
/// improves, else a gradient step with halving; stops when neither improves.
fn ascend(g: &DMatrix<Complex64>, p: f64, q: f64, start: DVector<Complex64>, iterations: usize) -> (f64, DVector<Complex64>) {
    let pc = if p > 1.0 { conjugate(p) } else { f64::INFINITY };
    let gh = g.adjoint();
    let mut u = normalise(start, p);
    let mut val = ratio(g, &u, p, q);
    let mut step = 1.0;
    for _ in 0..iterations {
        let y = g * &u;
        let z = &gh * duality_map(&y, q);
        if z.iter().all(|c| *c == ZERO) {
            break;
        }
        if pc.is_finite() {
            let cand = normalise(duality_map(&z, pc), p);
            let v = ratio(g, &cand, p, q);
            if v > val * (1.0 + 1e-15) {
                u = cand;
                val = v;
                continue;
            }
        }
        // gradient of ln ‖Gu‖_q - ln ‖u‖_p up to a positive factor
        let yq = lp(y.as_slice(), q).powf(q);
        let grad = z / Complex64::new(yq, 0.0) - duality_map(&u, p) / Complex64::new(lp(u.as_slice(), p).powf(p), 0.0);
        let gn = grad.norm();
        if gn < 1e-14 {
            break;
        }
        let mut improved = false;
        while step > 1e-12 {
            let cand = normalise(&u + &grad * Complex64::new(step / gn, 0.0), p);
            let v = ratio(g, &cand, p, q);
            if v > val * (1.0 + 1e-15) {
                u = cand;
                val = v;
                improved = true;
                step = (step * 2.0).min(1.0);
                break;
            }
            step *= 0.5;
        }
        if !improved {
            break;
        }
    }
    (val, u)
}

fn multistart(g: &DMatrix<Complex64>, p: f64, q: f64, options: NormOptions) -> (f64, DVector<Complex64>) {
    let n = g.ncols();
    let real = g.iter().all(|z| z.im == 0.0);
    let results: Vec<(f64, DVector<Complex64>)> = (0..options.starts.max(1))
        .into_par_iter()
        .map(|s| {
            let mut rng = ChaCha8Rng::seed_from_u64(options.seed.wrapping_add(s as u64));
            let start = DVector::from_fn(n, |_, _| {
                let im = if real { 0.0 } else { rng.sample::<f64, _>(StandardNormal) };
                Complex64::new(rng.sample::<f64, _>(StandardNormal), im)
            });
            // the first start follows the heaviest column, a cheap good guess
            let start = if s == 0 {
                let j = (0..n)
                    .max_by(|&a, &b| g.column(a).norm().total_cmp(&g.column(b).norm()))
                    .unwrap_or(0);
                DVector::from_fn(n, |i, _| if i == j { Complex64::new(1.0, 0.0) } else { ZERO })
            } else {
                start
            };
            ascend(g, p, q, start, options.iterations)
        })
        .collect();
    results
        .into_iter()
        .fold((0.0, DVector::from_element(n, ZERO)), |a, b| if b.0 > a.0 { b } else { a })
}

struct Brute {
    lower: f64,
    upper: Option<f64>,
    argmax: DVector<Complex64>,
    steps: usize,
    points: usize,
}

/// Scans the surface of the cube `[-1, 1]^D` (real coordinates of the input)
/// on a uniform grid, then polishes the best points by ascent.
///
/// Every unit direction has a maximiser `w` with `‖w‖_∞ = 1` lying on some face
/// `w_i = 1`; its nearest grid point `g` on that face has `‖w - g‖_p ≤ ε`, which gives
/// `‖G‖ ≤ F_max (1 + ε) / (1 - ε)` whenever `ε < 1`.
fn brute(g: &DMatrix<Complex64>, p: f64, q: f64, options: NormOptions) -> Brute {
    let n = g.ncols();
    // real matrices attain the 2 -> 2 norm at real vectors
    let real = g.iter().all(|z| z.im == 0.0) && p == 2.0 && q == 2.0;
    let dim = if real { n } else { 2 * n };
    let per_face = (options.grid_budget / dim).max(1) as f64;
    let mut steps = if dim == 1 { 1 } else { (per_face.powf(1.0 / (dim - 1) as f64).floor() as usize).saturating_sub(1).max(1) };
    while dim > 1 && dim * (steps + 1).pow(dim as u32 - 1) > options.grid_budget.max(dim * 4) && steps > 1 {
        steps -= 1;
    }
    let h = 2.0 / steps as f64;
    let to_vec = |coords: &[f64]| -> DVector<Complex64> {
        if real {
            DVector::from_fn(n, |i, _| Complex64::new(coords[i], 0.0))
        } else {
            DVector::from_fn(n, |i, _| Complex64::new(coords[2 * i], coords[2 * i + 1]))
        }
    };

    let free = dim - 1;
    let per = (steps + 1).pow(free as u32);
    let mut scored: Vec<(f64, usize, usize)> = (0..dim)
        .into_par_iter()
        .flat_map_iter(|face| (0..per).map(move |k| (face, k)))
        .map(|(face, k)| {
            let c = face_point(face, k, dim, steps, h);
            (ratio(g, &to_vec(&c), p, q), face, k)
        })
        .collect();
    let points = scored.len();
    scored.sort_by(|a, b| b.0.total_cmp(&a.0));
    let f_max = scored.first().map_or(0.0, |s| s.0);

    let per_coord = if real { h / 2.0 } else { h / 2.0 * std::f64::consts::SQRT_2 };
    let eps = per_coord * (n as f64).powf(1.0 / p);
    let upper = if eps < 1.0 { Some(f_max * (1.0 + eps) / (1.0 - eps)) } else { None };

    let polished: Vec<(f64, DVector<Complex64>)> = scored
        .iter()
        .take(options.polish.max(1))
        .collect::<Vec<_>>()
        .into_par_iter()
        .map(|&(_, face, k)| {
            let start = to_vec(&face_point(face, k, dim, steps, h));
            ascend(g, p, q, start, 4 * options.iterations)
        })
        .collect();
    let (lower, argmax) = polished
        .into_iter()
        .fold((0.0, DVector::from_element(n, ZERO)), |a, b| if b.0 > a.0 { b } else { a });
    Brute {
        lower: lower.max(f_max),
        upper: upper.map(|u| u.max(lower)),
        argmax,
        steps,
        points,
    }
}

fn face_point(face: usize, mut k: usize, dim: usize, steps: usize, h: f64) -> Vec<f64> {
    let mut c = vec![0.0; dim];
    for (i, slot) in c.iter_mut().enumerate() {
        if i == face {
            *slot = 1.0;
        } else {
            *slot = -1.0 + h * (k % (steps + 1)) as f64;
            k /= steps + 1;
        }
    }
    c
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::generate::random_symbol;
    use crate::kernel::KernelFamily;
    use crate::space::tests::line;

    fn c(v: f64) -> Complex64 {
        Complex64::new(v, 0.0)
    }

    fn hilbert4() -> (SpaceModel, OperatorMatrix) {
        let s = line(4);
        let t = OperatorMatrix::new(&KernelSpec::new(KernelFamily::HilbertGrid), &s).unwrap();
        (s, t)
    }

    #[test]
    fn single_column() {
        let (_, t) = hilbert4();
        let tf = t.apply(&[c(0.0), c(0.0), c(0.0), c(1.0)]);
        assert_eq!(tf, vec![c(-1.0 / 3.0), c(-0.5), c(-1.0), c(0.0)]);
    }

    #[test]
    fn commutator_by_hand() {
        let (_, t) = hilbert4();
        let b = [c(0.0), c(1.0), c(0.0), c(0.0)];
        let f = [c(1.0), c(0.0), c(0.0), c(0.0)];
        // b T f - T(b f), with b f = 0
        let out = t.commutator_apply(&b, &f);
        assert_eq!(out, vec![c(0.0), c(1.0), c(0.0), c(0.0)]);
        let m = t.commutator_matrix(&b);
        for x in 0..4 {
            let direct: Complex64 = (0..4).map(|y| m[(x, y)] * f[y]).sum();
            assert_eq!(direct, out[x]);
        }
    }

    #[test]
    fn adjoint_identity() {
        let s = line(7);
        let t = OperatorMatrix::new(&KernelSpec::new(KernelFamily::PowerSign), &s).unwrap();
        let f = random_symbol(7, true, 1);
        let g = random_symbol(7, true, 2);
        let lhs = t.pairing(&t.apply(&f), &g);
        let rhs = t.pairing(&f, &t.adjoint_apply(&g));
        assert!((lhs - rhs).norm() < 1e-13);
        assert_eq!(t.adjoint().apply(&g), t.adjoint_apply(&g));
    }

    #[test]
    fn zero_matrix_norms() {
        let s = line(3);
        let z = DMatrix::from_element(3, 3, ZERO);
        for m in [NormMethod::SvdExact, NormMethod::BruteOracle, NormMethod::MultistartAscent] {
            let e = operator_norm(&s, &z, 2.0, None, 2.0, None, m, NormOptions::default()).unwrap();
            assert_eq!(e.lower, 0.0);
            assert!(e.upper.unwrap_or(0.0) == 0.0);
        }
    }

    #[test]
    fn oracles_agree_on_four_points() {
        let (s, t) = hilbert4();
        let m = t.matrix();
        let o = NormOptions::default();
        let svd = operator_norm(&s, &m, 2.0, None, 2.0, None, NormMethod::SvdExact, o).unwrap();
        let br = operator_norm(&s, &m, 2.0, None, 2.0, None, NormMethod::BruteOracle, o).unwrap();
        let up = br.upper.unwrap();
        assert!(br.lower <= svd.lower * (1.0 + 1e-9) && svd.lower <= up * (1.0 + 1e-9));
        assert!((br.lower - svd.lower).abs() <= 1e-6 * svd.lower);
        let asc = operator_norm(&s, &m, 2.0, None, 2.0, None, NormMethod::MultistartAscent, o).unwrap();
        assert!((asc.lower - svd.lower).abs() <= 1e-9 * svd.lower);
        // the witness realises the value
        let mf: Vec<Complex64> = (0..4).map(|x| (0..4).map(|y| m[(x, y)] * asc.witness[y]).sum()).collect();
        let r = crate::weights::weighted_lp_norm(&s, &mf, None, 2.0)
            / crate::weights::weighted_lp_norm(&s, &asc.witness, None, 2.0);
        assert!((r - asc.lower).abs() < 1e-9);
    }

    #[test]
    fn homogeneity_and_capabilities() {
        let (s, t) = hilbert4();
        let m = t.matrix();
        let o = NormOptions::default();
        let a = operator_norm(&s, &m, 2.0, None, 2.0, None, NormMethod::SvdExact, o).unwrap();
        let scaled = &m * Complex64::new(0.0, -3.0);
        let b = operator_norm(&s, &scaled, 2.0, None, 2.0, None, NormMethod::SvdExact, o).unwrap();
        assert!((b.lower - 3.0 * a.lower).abs() < 1e-12);
        let err = operator_norm(&s, &m, 2.0, None, 3.0, None, NormMethod::SvdExact, o).unwrap_err();
        assert!(err.is_capability());
        let big = line(8);
        let t8 = OperatorMatrix::new(&KernelSpec::new(KernelFamily::HilbertGrid), &big).unwrap();
        let err = operator_norm(&big, &t8.matrix(), 2.0, None, 2.0, None, NormMethod::BruteOracle, o).unwrap_err();
        assert!(err.is_capability());
    }

    #[test]
    fn general_exponents_bracket() {
        let (s, t) = hilbert4();
        let m = t.matrix();
        let o = NormOptions::default();
        let asc = operator_norm(&s, &m, 2.0, None, 4.0, None, NormMethod::MultistartAscent, o).unwrap();
        let br = operator_norm(&s, &m, 2.0, None, 4.0, None, NormMethod::BruteOracle, o).unwrap();
        assert!(asc.upper.is_none());
        assert!(asc.lower > 0.0 && (asc.lower - br.lower).abs() <= 1e-6 * br.lower);
    }
}
