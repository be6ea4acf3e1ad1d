//! Lower bounds: oscillation of `b` on a ball controlled by commutator pairings.
//!
//! Two routes. The median route (real `b`) pairs a ball with a companion ball
//! on which the kernel keeps its sign. The factorisation route (any `b`) pairs
//! a ball with a companion where the kernel is nearly constant, then writes a
//! mean-zero function on the ball as `Σ (g_i T h_i - h_i T* g_i)` plus a small
//! error.

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernel::{certify_matrix, CertifyOptions, KernelCertificate, KernelMatrix};
use crate::operator::{pairing, OperatorMatrix};
use crate::space::{Ball, SpaceModel};
use crate::weights::{bloom_tuple, bmo_fractional_norm, conjugate, mean, mean_deviation, weight_mass, WeightProfile};

const ZERO: Complex64 = Complex64 { re: 0.0, im: 0.0 };

fn sup(f: &[Complex64]) -> f64 {
    f.iter().fold(0.0, |a: f64, z| a.max(z.norm()))
}

fn real_values(b: &[Complex64], set: &[usize]) -> Result<Vec<f64>> {
    set.iter()
        .map(|&i| {
            if b[i].im != 0.0 {
                Err(Error::domain(format!("median needs a real function; b has imaginary part at point {i}")))
            } else {
                Ok(b[i].re)
            }
        })
        .collect()
}

/// The smallest attained value `m` of `b` on `set` with `µ{b > m} ≤ µ/2` and `µ{b < m} ≤ µ/2`.
pub fn median_value(space: &SpaceModel, b: &[Complex64], set: &[usize]) -> Result<f64> {
    if set.is_empty() {
        return Err(Error::domain("median over an empty set"));
    }
    let vals = real_values(b, set)?;
    let mut pairs: Vec<(f64, f64)> = vals.iter().zip(set).map(|(&v, &i)| (v, space.mass(i))).collect();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    let half = 0.5 * space.measure(set) * (1.0 + 1e-12);
    for &(m, _) in &pairs {
        let above: f64 = pairs.iter().filter(|p| p.0 > m).map(|p| p.1).sum();
        let below: f64 = pairs.iter().filter(|p| p.0 < m).map(|p| p.1).sum();
        if above <= half && below <= half {
            return Ok(m);
        }
    }
    unreachable!("some attained value is a median")
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct MedianDecomposition {
    pub base: Vec<usize>,
    pub companion: Vec<usize>,
    /// Median of `b` over the companion.
    pub alpha: f64,
    /// `E1 = {b ≥ α}` and `E2 = {b ≤ α}` inside the base.
    pub e: [Vec<usize>; 2],
    /// `F1 = {b ≤ α}` and `F2 = {b ≥ α}` inside the companion.
    pub f: [Vec<usize>; 2],
    /// Indicators of `F1`, `F2`.
    pub tests: [Vec<Complex64>; 2],
}

/// Splits the base and companion at the companion median and checks, over all
/// pairs, that `b(x) - b(y)` keeps its sign on `E_i × F_i` and that
/// `|b(x) - α| ≤ |b(x) - b(y)|` there.
pub fn median_decomposition(space: &SpaceModel, b: &[Complex64], base: &[usize], companion: &[usize]) -> Result<MedianDecomposition> {
    real_values(b, base)?;
    let alpha = median_value(space, b, companion)?;
    let pick = |set: &[usize], keep: &dyn Fn(f64) -> bool| -> Vec<usize> {
        set.iter().copied().filter(|&i| keep(b[i].re)).collect()
    };
    let e = [pick(base, &|v| v >= alpha), pick(base, &|v| v <= alpha)];
    let f = [pick(companion, &|v| v <= alpha), pick(companion, &|v| v >= alpha)];

    let covers = |parts: &[Vec<usize>; 2], whole: &[usize]| whole.iter().all(|i| parts[0].contains(i) || parts[1].contains(i));
    if !covers(&e, base) || !covers(&f, companion) {
        return Err(Error::Internal("median sets do not cover their balls".into()));
    }
    let half = 0.5 * space.measure(companion);
    for fi in &f {
        if space.measure(fi) < half * (1.0 - 1e-12) {
            return Err(Error::Internal(format!("median half {fi:?} carries less than half the companion")));
        }
    }
    for i in 0..2 {
        let mut sign = 0.0f64;
        for &x in &e[i] {
            for &y in &f[i] {
                let diff = b[x].re - b[y].re;
                if diff != 0.0 {
                    if sign != 0.0 && sign * diff < 0.0 {
                        return Err(Error::Internal(format!("b(x) - b(y) changes sign on E{0} x F{0}", i + 1)));
                    }
                    sign = diff.signum();
                }
                if (b[x].re - alpha).abs() > diff.abs() {
                    return Err(Error::Internal(format!("|b(x) - α| > |b(x) - b(y)| at ({x}, {y})")));
                }
            }
        }
    }
    let n = space.len();
    let indicator = |set: &[usize]| {
        let mut v = vec![ZERO; n];
        for &i in set {
            v[i] = Complex64::new(1.0, 0.0);
        }
        v
    };
    Ok(MedianDecomposition {
        base: base.to_vec(),
        companion: companion.to_vec(),
        alpha,
        tests: [indicator(&f[0]), indicator(&f[1])],
        e,
        f,
    })
}

/// A companion for the median route: a ball of the same radius at distance
/// at least three radii on which the kernel is real with one sign.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct MedianCompanion {
    pub base: Ball,
    pub companion: Ball,
    /// `min |K|` over base × companion.
    pub kernel_min: f64,
    /// Center distance over radius.
    pub spread: f64,
}

/// Searches every center for a median companion of `base`, minimising
/// `λ1^p(B̃)^{1/p} / (µ(B̃) min |K|)`; ties go to the lower index.
pub fn find_median_companion(space: &SpaceModel, k: &KernelMatrix, base: Ball, l1p: &[f64]) -> Result<MedianCompanion> {
    let bm = space.members(&base);
    let r = base.radius;
    let mut best: Option<(f64, MedianCompanion)> = None;
    for y in 0..space.len() {
        if space.d(base.center, y) < 3.0 * r {
            continue;
        }
        let cand = space.make_ball(y, r);
        let cm = space.members(&cand);
        if cm.iter().any(|z| bm.contains(z)) {
            continue;
        }
        let mut sign = 0.0f64;
        let mut kmin = f64::INFINITY;
        let mut ok = true;
        'scan: for &x in bm {
            for &z in cm {
                let v = k.get(x, z);
                if v.im != 0.0 || v.re == 0.0 || (sign != 0.0 && sign * v.re < 0.0) {
                    ok = false;
                    break 'scan;
                }
                sign = v.re.signum();
                kmin = kmin.min(v.re.abs());
            }
        }
        if !ok {
            continue;
        }
        let lam: f64 = cm.iter().map(|&i| l1p[i] * space.mass(i)).sum();
        let cost = lam / (space.ball_measure(&cand) * kmin);
        if best.as_ref().map_or(true, |b| cost < b.0) {
            best = Some((
                cost,
                MedianCompanion {
                    base,
                    companion: cand,
                    kernel_min: kmin,
                    spread: space.d(base.center, y) / r,
                },
            ));
        }
    }
    best.map(|b| b.1).ok_or_else(|| {
        Error::Capability(format!(
            "no same-sign companion at distance >= 3r for the ball around {} of radius {r}",
            base.center
        ))
    })
}

/// Sextuple data beyond the kernel: `ξ`, `A`, `ε`, the base ball `B(y0, r)`
/// and the companion `B(x0, r)`. The kernel is read as `K(x, y)` with `x` in the
/// companion and `y` in the base.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct Sextuple {
    pub xi: f64,
    pub a: f64,
    pub eps: f64,
    pub base: Ball,
    pub companion: Ball,
}

/// Quantities every admissibility condition is built from.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct SextupleGeometry {
    pub separation: f64,
    pub center_distance: f64,
    pub k0: Complex64,
    /// `µ(B(y0, A r))`.
    pub mu_a: f64,
    pub mu_base: f64,
    pub mu_companion: f64,
    /// `max_{x ∈ B̃} ∫_B |K(x, y) - K(x0, y0)| dµ(y)`.
    pub integral_base: f64,
    /// `max_{y ∈ B} ∫_{B̃} |K(x, y) - K(x0, y0)| dµ(x)`.
    pub integral_companion: f64,
}

pub fn sextuple_geometry(space: &SpaceModel, k: &KernelMatrix, base: Ball, companion: Ball, a: f64) -> Result<SextupleGeometry> {
    let (y0, x0) = (base.center, companion.center);
    let bm = space.members(&base);
    let cm = space.members(&companion);
    if bm.is_empty() || cm.is_empty() {
        return Err(Error::domain("empty ball in sextuple"));
    }
    if x0 == y0 {
        return Err(Error::domain("sextuple balls share their center"));
    }
    let k0 = k.get(x0, y0);
    let over = |outer: &[usize], inner: &[usize], swap: bool| -> f64 {
        outer
            .iter()
            .map(|&o| {
                inner
                    .iter()
                    .map(|&i| {
                        let v = if swap { k.get(i, o) } else { k.get(o, i) };
                        (v - k0).norm() * space.mass(i)
                    })
                    .sum::<f64>()
            })
            .fold(0.0, f64::max)
    };
    let separation = space.set_distance(bm, cm)?;
    Ok(SextupleGeometry {
        separation,
        center_distance: space.d(x0, y0),
        k0,
        mu_a: space.ball_mass(y0, a * base.radius),
        mu_base: space.ball_measure(&base),
        mu_companion: space.ball_measure(&companion),
        integral_base: if separation > 0.0 { over(cm, bm, false) } else { f64::INFINITY },
        integral_companion: if separation > 0.0 { over(bm, cm, true) } else { f64::INFINITY },
    })
}

impl SextupleGeometry {
    /// Largest ratio of the two integral conditions to `µ(B)/µ_A`, `µ(B̃)/µ_A`; equals `ξ ε` at the edge.
    pub fn integral_ratio(&self) -> f64 {
        (self.integral_base * self.mu_a / self.mu_base).max(self.integral_companion * self.mu_a / self.mu_companion)
    }

    /// Smallest `ξ` meeting the center and kernel conditions.
    pub fn xi_floor(&self, a: f64, r: f64) -> f64 {
        let km = self.k0.norm() * self.mu_a;
        let kernel = if km > 0.0 { km.max(1.0 / km) } else { f64::INFINITY };
        1f64.max(self.center_distance / (a * r)).max(kernel)
    }

    /// Smallest `ξ` making every condition hold at the given `ε`.
    pub fn xi_for(&self, a: f64, r: f64, eps: f64) -> f64 {
        let ir = self.integral_ratio();
        let integral = if ir == 0.0 {
            0.0
        } else if eps > 0.0 {
            ir / eps
        } else {
            f64::INFINITY
        };
        self.xi_floor(a, r).max(integral)
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct Condition {
    pub name: &'static str,
    pub lhs: f64,
    pub rhs: f64,
    pub holds: bool,
}

#[derive(Clone, Debug, Serialize)]
pub struct AdmissibleReport {
    pub passed: bool,
    pub conditions: Vec<Condition>,
    /// First failing condition.
    pub failed: Option<&'static str>,
}

const ADMISSIBLE_TOL: f64 = 1e-12;

/// Evaluates the separation, center-distance, kernel-size and two integral
/// conditions of an admissible sextuple; each row holds when `lhs ≤ rhs`.
pub fn check_admissible(space: &SpaceModel, k: &KernelMatrix, s: &Sextuple) -> Result<AdmissibleReport> {
    let g = sextuple_geometry(space, k, s.base, s.companion, s.a)?;
    let r = s.base.radius;
    let ar = s.a * r;
    let k0 = g.k0.norm();
    let rows = [
        ("separation", r, g.separation),
        ("center-lower", ar, g.center_distance),
        ("center-upper", g.center_distance, s.xi * ar),
        ("kernel-upper", k0, s.xi / g.mu_a),
        ("kernel-lower", 1.0 / g.mu_a, s.xi * k0),
        ("integral-base", g.integral_base, s.xi * s.eps * g.mu_base / g.mu_a),
        ("integral-companion", g.integral_companion, s.xi * s.eps * g.mu_companion / g.mu_a),
    ];
    let conditions: Vec<Condition> = rows
        .iter()
        .map(|&(name, lhs, rhs)| Condition {
            name,
            lhs,
            rhs,
            holds: lhs <= rhs * (1.0 + ADMISSIBLE_TOL) + 1e-300,
        })
        .collect();
    let failed = conditions.iter().find(|c| !c.holds).map(|c| c.name);
    Ok(AdmissibleReport {
        passed: failed.is_none(),
        conditions,
        failed,
    })
}

/// Space constants entering the dual sextuple.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct SpaceConstants {
    pub a0: f64,
    pub c_mu: f64,
    /// `Q = log2 C_µ`.
    pub q: f64,
}

impl SpaceConstants {
    pub fn of(space: &SpaceModel) -> Self {
        let d = space.doubling_profile();
        SpaceConstants {
            a0: space.quasi_triangle_constant().a0,
            c_mu: d.c_mu,
            q: d.q,
        }
    }
}

/// `ξ* = ξ C_µ (A0 (1 + ξ))^Q`.
pub fn dual_xi(xi: f64, c: SpaceConstants) -> f64 {
    xi * c.c_mu * (c.a0 * (1.0 + xi)).powf(c.q)
}

/// `(K*, ξ*, A, ε, B̃, B)` from an admissible `(K, ξ, A, ε, B, B̃)`, rechecked.
pub fn dualize_admissible(
    space: &SpaceModel,
    k: &KernelMatrix,
    s: &Sextuple,
    constants: SpaceConstants,
) -> Result<(KernelMatrix, Sextuple)> {
    let first = check_admissible(space, k, s)?;
    if !first.passed {
        return Err(Error::domain(format!(
            "sextuple is not admissible: {} fails",
            first.failed.unwrap_or("?")
        )));
    }
    let kt = k.transpose();
    let dual = Sextuple {
        xi: dual_xi(s.xi, constants),
        a: s.a,
        eps: s.eps,
        base: s.companion,
        companion: s.base,
    };
    let second = check_admissible(space, &kt, &dual)?;
    if !second.passed {
        return Err(Error::Internal(format!(
            "dual sextuple fails {} with the formula constant",
            second.failed.unwrap_or("?")
        )));
    }
    Ok((kt, dual))
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CompanionBall {
    pub base: Ball,
    pub companion: Ball,
    pub a: f64,
    /// Center of the base.
    pub y0: usize,
    /// Center of the companion, found in the annulus `A r ≤ d(x0, y0) < C̄ A r`.
    pub x0: usize,
    pub geometry: SextupleGeometry,
    /// Smallest `ξ` meeting the center and kernel conditions at this instance.
    pub xi: f64,
    /// Smallest `ε` making the sextuple admissible with `xi`.
    pub eps: f64,
    /// `ξ` assembled from certificate constants, when a certificate was given.
    pub xi_formula: Option<f64>,
    /// `ε` measured against `xi_formula`.
    pub eps_formula: Option<f64>,
}

impl CompanionBall {
    pub fn sextuple(&self) -> Sextuple {
        Sextuple {
            xi: self.xi,
            a: self.a,
            eps: self.eps,
            base: self.base,
            companion: self.companion,
        }
    }
}

/// `max(C̄, c0, c_K C_µ (2 A0)^Q)` from the certificate of the kernel read as `K(x, y)`.
pub fn formula_xi(cert: &KernelCertificate, c_bar: f64, constants: SpaceConstants) -> f64 {
    let upper = cert.c_k * constants.c_mu * (2.0 * constants.a0).powf(constants.q);
    c_bar.max(cert.nondeg_x.c0).max(upper).max(1.0)
}

/// Finds the companion `B(x0, r)` of `base = B(y0, r)` by maximising
/// `|K(x0, y0)| µ(B(y0, A r))` over the annulus (lowest index on ties).
pub fn find_companion_ball(
    space: &SpaceModel,
    k: &KernelMatrix,
    cert: Option<&KernelCertificate>,
    base: Ball,
    a: f64,
    c_bar: f64,
    constants: SpaceConstants,
) -> Result<CompanionBall> {
    let a_min = 2.0 * constants.a0 * constants.a0 + constants.a0;
    if a < a_min * (1.0 - 1e-12) {
        return Err(Error::Precondition(format!("need A >= 2 A0^2 + A0 = {a_min}, got {a}")));
    }
    let y0 = base.center;
    let r = base.radius;
    let mu_a = space.ball_mass(y0, a * r);
    let mut best: Option<(f64, usize)> = None;
    for &x in space.order(y0) {
        let d = space.d(x, y0);
        if d < a * r {
            continue;
        }
        if d >= c_bar * a * r {
            break;
        }
        let v = k.get(x, y0).norm() * mu_a;
        if best.map_or(true, |b| v > b.0 || (v == b.0 && x < b.1)) {
            best = Some((v, x));
        }
    }
    let (_, x0) = best.ok_or_else(|| {
        Error::Capability(format!(
            "annulus [{}, {}) around point {y0} is empty; use a smaller A or a larger space",
            a * r,
            c_bar * a * r
        ))
    })?;
    let companion = space.make_ball(x0, r);
    let geometry = sextuple_geometry(space, k, base, companion, a)?;
    if geometry.separation < r * (1.0 - 1e-12) {
        return Err(Error::Internal(format!(
            "companion at distance {} < r = {r} despite A >= 2 A0^2 + A0",
            geometry.separation
        )));
    }
    let xi = geometry.xi_floor(a, r);
    let eps = geometry.integral_ratio() / xi;
    let xi_formula = cert.map(|c| formula_xi(c, c_bar, constants));
    Ok(CompanionBall {
        base,
        companion,
        a,
        y0,
        x0,
        eps_formula: xi_formula.map(|x| geometry.integral_ratio() / x),
        geometry,
        xi,
        eps,
        xi_formula,
    })
}

/// The uniform `ε_A` at one value of `A`: the largest measured `ε` over balls
/// whose annulus is nonempty.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct EpsilonLevel {
    pub a: f64,
    /// Against each instance's own `ξ`.
    pub eps: f64,
    /// Against the certificate `ξ`.
    pub eps_formula: f64,
    /// Balls with a companion at this `A`.
    pub balls: usize,
}

/// `ε_A` for `A = A_min, 2 A_min, ...` (`levels` values) using the first
/// representation of every distinct ball.
pub fn epsilon_profile(
    space: &SpaceModel,
    k: &KernelMatrix,
    cert: &KernelCertificate,
    levels: usize,
    c_bar: f64,
    constants: SpaceConstants,
) -> Result<Vec<EpsilonLevel>> {
    let a_min = 2.0 * constants.a0 * constants.a0 + constants.a0;
    let bases: Vec<Ball> = space.distinct_balls().iter().map(|d| d.representations[0]).collect();
    (0..levels)
        .map(|j| {
            let a = a_min * 2f64.powi(j as i32);
            let mut level = EpsilonLevel {
                a,
                eps: 0.0,
                eps_formula: 0.0,
                balls: 0,
            };
            for &base in &bases {
                match find_companion_ball(space, k, Some(cert), base, a, c_bar, constants) {
                    Ok(cb) => {
                        level.eps = level.eps.max(cb.eps);
                        level.eps_formula = level.eps_formula.max(cb.eps_formula.unwrap_or(0.0));
                        level.balls += 1;
                    }
                    Err(e) if e.is_capability() => {}
                    Err(e) => return Err(e),
                }
            }
            Ok(level)
        })
        .collect()
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SingleStep {
    pub h: Vec<Complex64>,
    pub f_tilde: Vec<Complex64>,
    /// `‖g‖ ‖h‖ / ((µ_A / µ(B̃)) ‖f‖)`; the proof gives at most `2 c ξ`.
    pub product_constant: f64,
    /// `‖f̃‖ / (ε (µ(B)/µ(B̃)) ‖f‖)`.
    pub error_constant: f64,
    /// `2 c² ξ⁴ (1 + ε) + c ξ²`, the constant the proof yields for `error_constant`.
    pub error_constant_bound: f64,
    pub identity_residual: f64,
}

fn relative_gap(a: f64, scale: f64) -> f64 {
    if scale > 0.0 {
        a / scale
    } else {
        a
    }
}

/// One factorisation step: `f = g T h - h T* g + f̃` with `h = -f / T* g` on the base.
///
/// `op` carries the sextuple's kernel.
pub fn awf_single(
    space: &SpaceModel,
    op: &OperatorMatrix,
    s: &Sextuple,
    f: &[Complex64],
    g: &[f64],
    c: f64,
) -> Result<SingleStep> {
    let n = space.len();
    let bm = space.members(&s.base);
    let cm = space.members(&s.companion);
    let fsup = sup(f);
    if (0..n).any(|i| f[i] != ZERO && !bm.contains(&i)) {
        return Err(Error::Precondition("f is not supported in the base ball".into()));
    }
    let fmass: Complex64 = (0..n).map(|i| f[i] * space.mass(i)).sum();
    if fmass.norm() > 1e-12 * (fsup * space.measure(bm)).max(1e-300) {
        return Err(Error::Precondition(format!("f has mass {fmass}, expected 0")));
    }
    if (0..n).any(|i| g[i] < 0.0 || (g[i] != 0.0 && !cm.contains(&i))) {
        return Err(Error::Precondition("g must be nonnegative and supported in the companion".into()));
    }
    let gsup = g.iter().fold(0.0, |a: f64, &v| a.max(v));
    let gint: f64 = (0..n).map(|i| g[i] * space.mass(i)).sum();
    let mu_c = space.ball_measure(&s.companion);
    if !(gsup > 0.0) || gsup > c / mu_c * gint * (1.0 + 1e-12) {
        return Err(Error::Precondition("g fails 0 < ‖g‖ <= (c / µ(B̃)) ∫ g".into()));
    }
    if s.eps > 1.0 / (2.0 * c * s.xi * s.xi) * (1.0 + 1e-12) {
        return Err(Error::Precondition(format!(
            "ε = {} exceeds 1/(2 c ξ²) = {}; increase A",
            s.eps,
            1.0 / (2.0 * c * s.xi * s.xi)
        )));
    }
    let geo = sextuple_geometry(space, op.kernel(), s.base, s.companion, s.a)?;
    let gc: Vec<Complex64> = g.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    let tsg = op.adjoint_apply(&gc);
    let floor = mu_c / geo.mu_a * gsup / (2.0 * c * s.xi);
    for &y in bm {
        if tsg[y].norm() < floor * (1.0 - 1e-12) {
            return Err(Error::Precondition(format!(
                "|T* g| = {} < {floor} at point {y}; ε too large or A too small",
                tsg[y].norm()
            )));
        }
    }
    let mut h = vec![ZERO; n];
    for &y in bm {
        h[y] = -f[y] / tsg[y];
    }
    let th = op.apply(&h);
    let f_tilde: Vec<Complex64> = (0..n).map(|x| -gc[x] * th[x]).collect();
    let expanded: Vec<Complex64> = (0..n).map(|x| f[x] - gc[x] * th[x] + h[x] * tsg[x]).collect();
    let identity_residual = relative_gap(sup(&f_tilde.iter().zip(&expanded).map(|(a, b)| a - b).collect::<Vec<_>>()), fsup);
    if identity_residual > 1e-9 {
        return Err(Error::Internal(format!("f̃ differs from -g T h by {identity_residual} (relative)")));
    }
    if (0..n).any(|x| g[x] == 0.0 && f_tilde[x].norm() > 1e-12 * fsup.max(1e-300)) {
        return Err(Error::Internal("f̃ leaves the support of g".into()));
    }
    let mass: Complex64 = (0..n).map(|x| f_tilde[x] * space.mass(x)).sum();
    let scale = (sup(&f_tilde) + fsup) * space.total_mass();
    if mass.norm() > 1e-10 * scale.max(1e-300) {
        return Err(Error::Internal(format!("f̃ has mass {mass}")));
    }
    let hsup = sup(&h);
    let mu_b = space.ball_measure(&s.base);
    let (product_constant, error_constant) = if fsup > 0.0 {
        let pc = gsup * hsup / (geo.mu_a / mu_c * fsup);
        let denom = s.eps * mu_b / mu_c * fsup;
        let ec = if denom > 0.0 {
            sup(&f_tilde) / denom
        } else if sup(&f_tilde) <= 1e-12 * fsup {
            0.0
        } else {
            f64::INFINITY
        };
        (pc, ec)
    } else {
        (0.0, 0.0)
    };
    let error_constant_bound = 2.0 * c * c * s.xi.powi(4) * (1.0 + s.eps) + c * s.xi * s.xi;
    Ok(SingleStep {
        h,
        f_tilde,
        product_constant,
        error_constant,
        error_constant_bound,
        identity_residual,
    })
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct AwfDecomposition {
    pub g: [Vec<Complex64>; 2],
    pub h: [Vec<Complex64>; 2],
    pub error: Vec<Complex64>,
    pub sextuple: Sextuple,
    /// The dual sextuple with its own measured `ξ`.
    pub dual: Sextuple,
    /// `ξ C_µ (A0 (1 + ξ))^Q`.
    pub xi_star: f64,
    pub a_power_q: f64,
    /// `max_i ‖g_i‖ ‖h_i‖ / (A^Q ‖f‖)`.
    pub product_constant: f64,
    /// `‖f̃̃‖ / (ε ‖f‖)`; zero when both vanish.
    pub error_constant: f64,
    pub identity_residual: f64,
    pub first: SingleStep,
    pub second: SingleStep,
}

/// Smallness threshold for `ε`: `min(1/(2 c ξ²), 1/(2 c ξ'²))` with the measured dual `ξ'`.
pub fn awf_threshold(c: f64, xi: f64, xi_dual: f64) -> f64 {
    1.0 / (2.0 * c * xi.max(xi_dual).powi(2))
}

/// The dual of `s` with the smallest `ξ` that keeps it admissible at the same `ε`.
pub fn measured_dual(space: &SpaceModel, k: &KernelMatrix, s: &Sextuple) -> Result<Sextuple> {
    let kt = k.transpose();
    let g = sextuple_geometry(space, &kt, s.companion, s.base, s.a)?;
    Ok(Sextuple {
        xi: g.xi_for(s.a, s.companion.radius, s.eps),
        a: s.a,
        eps: s.eps,
        base: s.companion,
        companion: s.base,
    })
}

/// Two factorisation steps: `f = Σ_i (g_i T h_i - h_i T* g_i) + f̃̃` with
/// `g1 = χ_Ẽ`, `h2 = χ_E` and `f̃̃` mean-zero on `E`.
#[allow(clippy::too_many_arguments)]
pub fn awf_double(
    space: &SpaceModel,
    op: &OperatorMatrix,
    s: &Sextuple,
    f: &[Complex64],
    e: &[usize],
    e_tilde: &[usize],
    c: f64,
    constants: SpaceConstants,
) -> Result<AwfDecomposition> {
    let n = space.len();
    let bm = space.members(&s.base);
    let cm = space.members(&s.companion);
    if e.iter().any(|i| !bm.contains(i)) || e_tilde.iter().any(|i| !cm.contains(i)) {
        return Err(Error::Precondition("E and Ẽ must lie in the base and companion balls".into()));
    }
    if space.ball_measure(&s.base) > c * space.measure(e) * (1.0 + 1e-12)
        || space.ball_measure(&s.companion) > c * space.measure(e_tilde) * (1.0 + 1e-12)
    {
        return Err(Error::Precondition("need µ(B) <= c µ(E) and µ(B̃) <= c µ(Ẽ)".into()));
    }
    if (0..n).any(|i| f[i] != ZERO && !e.contains(&i)) {
        return Err(Error::Precondition("f is not supported in E".into()));
    }
    let dual = measured_dual(space, op.kernel(), s)?;
    let threshold = awf_threshold(c, s.xi, dual.xi);
    if s.eps > threshold * (1.0 + 1e-12) {
        return Err(Error::Precondition(format!(
            "ε = {} exceeds the threshold {threshold}; increase A",
            s.eps
        )));
    }
    let indicator = |set: &[usize]| {
        let mut v = vec![0.0; n];
        for &i in set {
            v[i] = 1.0;
        }
        v
    };
    let g1 = indicator(e_tilde);
    let first = awf_single(space, op, s, f, &g1, c)?;
    let adj = op.adjoint();
    let chi_e = indicator(e);
    // f̃ has zero mass up to rounding at the scale of f; remove that residue on Ẽ
    let mut carried = first.f_tilde.clone();
    let drift = mean(space, &carried, e_tilde);
    if drift.norm() <= 1e-12 * sup(f) {
        for &i in e_tilde {
            carried[i] -= drift;
        }
    }
    let second = awf_single(space, &adj, &dual, &carried, &chi_e, c)?;

    let to_c = |v: &[f64]| v.iter().map(|&x| Complex64::new(x, 0.0)).collect::<Vec<_>>();
    let g = [to_c(&g1), second.h.iter().map(|z| -z).collect::<Vec<_>>()];
    let h = [first.h.clone(), to_c(&chi_e)];
    let error = second.f_tilde.clone();

    let mut rebuilt = error.clone();
    for i in 0..2 {
        let th = op.apply(&h[i]);
        let tsg = op.adjoint_apply(&g[i]);
        for x in 0..n {
            rebuilt[x] += g[i][x] * th[x] - h[i][x] * tsg[x];
        }
    }
    let fsup = sup(f);
    let identity_residual = relative_gap(sup(&rebuilt.iter().zip(f).map(|(a, b)| a - b).collect::<Vec<_>>()), fsup);
    if identity_residual > 1e-9 {
        return Err(Error::Internal(format!("factorisation residual {identity_residual} (relative)")));
    }
    if (0..n).any(|x| !e.contains(&x) && error[x] != ZERO) {
        return Err(Error::Internal("f̃̃ leaves E".into()));
    }
    let a_power_q = s.a.powf(constants.q);
    let (product_constant, error_constant) = if fsup > 0.0 {
        let pc = (0..2).map(|i| sup(&g[i]) * sup(&h[i])).fold(0.0, f64::max) / (a_power_q * fsup);
        let es = sup(&error);
        let ec = if s.eps > 0.0 {
            es / (s.eps * fsup)
        } else if es <= 1e-12 * fsup {
            0.0
        } else {
            f64::INFINITY
        };
        (pc, ec)
    } else {
        (0.0, 0.0)
    };
    Ok(AwfDecomposition {
        g,
        h,
        error,
        sextuple: *s,
        dual,
        xi_star: dual_xi(s.xi, constants),
        a_power_q,
        product_constant,
        error_constant,
        identity_residual,
        first,
        second,
    })
}

/// Which non-degeneracy the kernel is assumed to satisfy.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Orientation {
    /// Partner `y` found around each `x`: `|K(x, y)| ≥ 1/(c0 µ(B(x, r)))`.
    Std,
    /// Partner `x` found around each `y`: `|K(x, y)| ≥ 1/(c0 µ(B(y, r)))`.
    Opp,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LowerOptions {
    pub c_bar: f64,
    pub c: f64,
    /// Doublings of `A` tried after `2 A0² + A0`.
    pub max_doublings: usize,
    /// Ball representations tried before a ball is skipped.
    pub max_representations: usize,
}

impl Default for LowerOptions {
    fn default() -> Self {
        LowerOptions {
            c_bar: 4.0,
            c: 1.0,
            max_doublings: 8,
            max_representations: 8,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct OscillationReport {
    pub orientation: Orientation,
    pub companion: CompanionBall,
    /// `∫_E |b - ⟨b⟩_E| dµ`.
    pub oscillation: f64,
    /// The two pairings with `[b, T]`, in the orientation's pattern.
    pub pairings: [f64; 2],
    /// `|∫_E b f̃̃ dµ|`.
    pub error_term: f64,
    /// `‖f̃̃‖_∞`; absorption needs it at most 1/4.
    pub error_sup: f64,
    /// `oscillation / (pairings[0] + pairings[1])`; at most 4 after absorption.
    pub constant: f64,
    pub xi_dual: f64,
    pub xi_star: f64,
    /// Sup norms of the non-indicator factors `h1`, `g2`.
    pub factor_sups: [f64; 2],
    pub awf_error_constant: f64,
    pub identity_residual: f64,
}

/// `α` with `|α| = 1/2` and `|b - ⟨b⟩_E| = 2 (b - ⟨b⟩_E) α` on `E`.
pub fn dual_phase(space: &SpaceModel, b: &[Complex64], e: &[usize]) -> Vec<Complex64> {
    let avg = mean(space, b, e);
    let real = e.iter().all(|&i| b[i].im == 0.0);
    let mut alpha = vec![ZERO; space.len()];
    for &i in e {
        let z = b[i] - avg;
        alpha[i] = if real {
            Complex64::new(if z.re >= 0.0 { 0.5 } else { -0.5 }, 0.0)
        } else if z.norm() == 0.0 {
            Complex64::new(0.5, 0.0)
        } else {
            z.conj() / (2.0 * z.norm())
        };
    }
    alpha
}

/// Bounds `∫_E |b - ⟨b⟩_E|` by commutator pairings for `E = B`, `Ẽ = B̃`,
/// doubling `A` until the factorisation thresholds and the absorption condition hold.
pub fn bound_oscillation(
    space: &SpaceModel,
    op: &OperatorMatrix,
    b: &[Complex64],
    base: Ball,
    orientation: Orientation,
    cert: Option<&KernelCertificate>,
    options: LowerOptions,
    constants: SpaceConstants,
) -> Result<OscillationReport> {
    let machine = match orientation {
        Orientation::Opp => op.clone(),
        Orientation::Std => op.adjoint(),
    };
    let k = machine.kernel();
    let a_min = 2.0 * constants.a0 * constants.a0 + constants.a0;
    let mut last = None;
    for step in 0..=options.max_doublings {
        let a = a_min * 2f64.powi(step as i32);
        let comp = match find_companion_ball(space, k, cert, base, a, options.c_bar, constants) {
            Ok(c) => c,
            Err(e) if e.is_capability() => {
                return Err(last.unwrap_or(e));
            }
            Err(e) => return Err(e),
        };
        match oscillation_at(space, op, &machine, b, &comp, orientation, options, constants) {
            Ok(r) => return Ok(r),
            Err(e @ Error::Precondition(_)) => last = Some(Error::Capability(format!("at A = {a}: {e}"))),
            Err(e) => return Err(e),
        }
    }
    Err(last.unwrap_or_else(|| Error::Capability("A schedule exhausted".into())))
}

#[allow(clippy::too_many_arguments)]
fn oscillation_at(
    space: &SpaceModel,
    op: &OperatorMatrix,
    machine: &OperatorMatrix,
    b: &[Complex64],
    comp: &CompanionBall,
    orientation: Orientation,
    options: LowerOptions,
    constants: SpaceConstants,
) -> Result<OscillationReport> {
    let s = comp.sextuple();
    let e: Vec<usize> = space.members(&s.base).to_vec();
    let e_tilde: Vec<usize> = space.members(&s.companion).to_vec();
    let oscillation = mean_deviation(space, b, &e);
    let alpha = dual_phase(space, b, &e);
    let a_avg = mean(space, &alpha, &e);
    let mut f = vec![ZERO; space.len()];
    for &i in &e {
        f[i] = alpha[i] - a_avg;
    }
    let dual_form = 2.0 * pairing(space.masses(), b, &f).norm();
    let floor = sup(b) * space.measure(&e);
    if (dual_form - oscillation).abs() > 1e-9 * oscillation.max(1e-300) + 1e-14 * floor {
        return Err(Error::Internal(format!("dual form {dual_form} differs from oscillation {oscillation}")));
    }
    let awf = awf_double(space, machine, &s, &f, &e, &e_tilde, options.c, constants)?;
    let error_sup = sup(&awf.error);
    if error_sup > 0.25 * (1.0 + 1e-12) {
        return Err(Error::Precondition(format!("‖f̃̃‖ = {error_sup} > 1/4 blocks absorption")));
    }
    let mut pairings = [0.0; 2];
    let scale = sup(b) * (sup(&op.apply(&awf.h[0])) + sup(&op.adjoint_apply(&awf.g[1])) + 1.0) * space.total_mass();
    for i in 0..2 {
        let through_machine = pairing(space.masses(), &awf.g[i], &machine.commutator_apply(b, &awf.h[i]));
        let value = match orientation {
            Orientation::Opp => through_machine,
            Orientation::Std => {
                // ⟨g, [b, T*] h⟩ = -⟨h, [b, T] g⟩
                let direct = -pairing(space.masses(), &awf.h[i], &op.commutator_apply(b, &awf.g[i]));
                if (direct - through_machine).norm() > 1e-9 * scale.max(1e-300) {
                    return Err(Error::Internal(format!(
                        "adjoint pairing mismatch: {through_machine} vs {direct}"
                    )));
                }
                direct
            }
        };
        pairings[i] = value.norm();
    }
    let error_term = pairing(space.masses(), b, &awf.error).norm();
    let total = pairings[0] + pairings[1];
    let constant = if oscillation == 0.0 {
        0.0
    } else if total > 0.0 {
        oscillation / total
    } else {
        f64::INFINITY
    };
    if constant > 4.0 * (1.0 + 1e-9) {
        return Err(Error::Internal(format!("absorbed bound fails: constant {constant} > 4")));
    }
    Ok(OscillationReport {
        orientation,
        companion: comp.clone(),
        oscillation,
        pairings,
        error_term,
        error_sup,
        constant,
        xi_dual: awf.dual.xi,
        xi_star: awf.xi_star,
        factor_sups: [sup(&awf.h[0]), sup(&awf.g[1])],
        awf_error_constant: awf.error_constant,
        identity_residual: awf.identity_residual,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LowerMethod {
    Median,
    Awf,
}

impl std::str::FromStr for LowerMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "median" => Ok(LowerMethod::Median),
            "awf" => Ok(LowerMethod::Awf),
            other => Err(Error::param("method", format!("unknown lower-bound method `{other}`"))),
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct BallRow {
    /// Sorted members of the distinct ball.
    pub size: usize,
    pub center: usize,
    pub radius: f64,
    pub companion_center: Option<usize>,
    pub a: Option<f64>,
    pub eps: Option<f64>,
    pub xi: Option<f64>,
    pub xi_dual: Option<f64>,
    pub xi_star: Option<f64>,
    /// `∫_B |b - ⟨b⟩_B| dµ`.
    pub oscillation: f64,
    /// `C_B` in `∫_B |b - ⟨b⟩_B| ≤ C_B Θ λ1^p(B)^{1/p} λ2^{-q'}(B)^{1/q'}`.
    pub constant: Option<f64>,
    /// `(λ1^p(B̃)/λ1^p(B))^{1/p}`.
    pub transfer: Option<f64>,
    /// `[λ1]_{A_{p,p}} µ(B*)/µ(B)` with `B*` a ball around the base center holding both balls.
    pub transfer_bound: Option<f64>,
    pub holds: bool,
    /// Capability error that stopped every representation. A row with neither a
    /// skip nor a companion is a ball on which `b` is constant.
    pub skip: Option<String>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct LowerReport {
    pub method: LowerMethod,
    pub p: f64,
    pub q: f64,
    pub theta: f64,
    pub bmo_norm: f64,
    pub char_lambda1: f64,
    pub char_lambda2: f64,
    /// `‖b‖_{BMO_ν^α} / (Θ [λ1]² [λ2])`.
    pub final_ratio: f64,
    pub max_constant: f64,
    pub balls: usize,
    pub skipped: usize,
    /// Balls on which `b` is constant; never skipped.
    pub trivial: usize,
    pub skip_rate: f64,
    pub all_hold: bool,
    pub rows: Vec<BallRow>,
}

/// Runs the lower-bound chain on every distinct ball.
///
/// `theta` must bound `‖[b, T]‖_{L^p_{λ1} → L^q_{λ2}}`. The factorisation route
/// assumes the `Std` orientation, so it runs on `T*` and converts the pairings.
#[allow(clippy::too_many_arguments)]
pub fn lower_bound_bmo(
    space: &SpaceModel,
    op: &OperatorMatrix,
    b: &[Complex64],
    p: f64,
    q: f64,
    l1: &[f64],
    l2: &[f64],
    theta: f64,
    method: LowerMethod,
    options: LowerOptions,
) -> Result<LowerReport> {
    let t = bloom_tuple(l1, l2, p, q, 1.0)?;
    if !(theta >= 0.0 && theta.is_finite()) {
        return Err(Error::param("theta", format!("need a finite bound, got {theta}")));
    }
    let char1 = WeightProfile::new(l1.to_vec())?.app(space, p)?.value;
    let char2 = WeightProfile::new(l2.to_vec())?.app(space, q)?.value;
    let bmo = bmo_fractional_norm(space, b, &t.nu, t.alpha_over_q).value;
    let constants = SpaceConstants::of(space);
    let cert = match method {
        LowerMethod::Awf => Some(certify_matrix(&op.kernel().transpose(), space, CertifyOptions { c_bar: options.c_bar })?),
        LowerMethod::Median => None,
    };
    if method == LowerMethod::Median {
        real_values(b, &(0..space.len()).collect::<Vec<_>>())?;
    }
    let l1p: Vec<f64> = l1.iter().map(|v| v.powf(p)).collect();
    let qc = conjugate(q);
    let balls = space.distinct_balls();

    let rows: Vec<Result<BallRow>> = balls
        .par_iter()
        .map(|db| {
            let members = &db.members;
            let oscillation = mean_deviation(space, b, members);
            let norm_b = weight_mass(space, l1, p, members).powf(1.0 / p) * weight_mass(space, l2, -qc, members).powf(1.0 / qc);
            let lam_b = weight_mass(space, l1, p, members);
            let mut skip = None;
            let first = members[0];
            if members.iter().all(|&i| b[i] == b[first]) {
                // zero oscillation: the per-ball inequality holds with any constant
                let rep = db.representations[0];
                return Ok(BallRow {
                    size: members.len(),
                    center: rep.center,
                    radius: rep.radius,
                    companion_center: None,
                    a: None,
                    eps: None,
                    xi: None,
                    xi_dual: None,
                    xi_star: None,
                    oscillation: 0.0,
                    constant: None,
                    transfer: None,
                    transfer_bound: None,
                    holds: true,
                    skip: None,
                });
            }
            for rep in db.representations.iter().take(options.max_representations.max(1)) {
                let attempt: Result<(BallRow, Ball)> = match method {
                    LowerMethod::Awf => {
                        bound_oscillation(space, op, b, *rep, Orientation::Std, cert.as_ref(), options, constants).map(|r| {
                            let comp = r.companion.companion;
                            let transfer = (space.members(&comp).iter().map(|&i| l1p[i] * space.mass(i)).sum::<f64>() / lam_b).powf(1.0 / p);
                            let constant = 4.0 * (r.factor_sups[0] + r.factor_sups[1]) * transfer;
                            (
                                BallRow {
                                    size: members.len(),
                                    center: rep.center,
                                    radius: rep.radius,
                                    companion_center: Some(comp.center),
                                    a: Some(r.companion.a),
                                    eps: Some(r.companion.eps),
                                    xi: Some(r.companion.xi),
                                    xi_dual: Some(r.xi_dual),
                                    xi_star: Some(r.xi_star),
                                    oscillation,
                                    constant: Some(constant),
                                    transfer: Some(transfer),
                                    transfer_bound: None,
                                    holds: true,
                                    skip: None,
                                },
                                comp,
                            )
                        })
                    }
                    LowerMethod::Median => find_median_companion(space, op.kernel(), *rep, &l1p).and_then(|mc| {
                        let comp = mc.companion;
                        let dec = median_decomposition(space, b, space.members(rep), space.members(&comp))?;
                        let s: f64 = dec
                            .f
                            .iter()
                            .map(|fi| (fi.iter().map(|&i| l1p[i] * space.mass(i)).sum::<f64>() / lam_b).powf(1.0 / p))
                            .sum();
                        let constant = 4.0 / (space.ball_measure(&comp) * mc.kernel_min) * s;
                        let transfer = (space.members(&comp).iter().map(|&i| l1p[i] * space.mass(i)).sum::<f64>() / lam_b).powf(1.0 / p);
                        Ok((
                            BallRow {
                                size: members.len(),
                                center: rep.center,
                                radius: rep.radius,
                                companion_center: Some(comp.center),
                                a: Some(mc.spread),
                                eps: None,
                                xi: None,
                                xi_dual: None,
                                xi_star: None,
                                oscillation,
                                constant: Some(constant),
                                transfer: Some(transfer),
                                transfer_bound: None,
                                holds: true,
                                skip: None,
                            },
                            comp,
                        ))
                    }),
                };
                match attempt {
                    Ok((mut row, comp)) => {
                        let reach = space
                            .members(&comp)
                            .iter()
                            .chain(members)
                            .map(|&i| space.d(rep.center, i))
                            .fold(0.0, f64::max);
                        let star = space.closed_ball(rep.center, reach);
                        let bound = char1 * space.ball_measure(&star) / space.measure(members);
                        row.transfer_bound = Some(bound);
                        let transfer_ok = row.transfer.unwrap() <= bound * (1.0 + 1e-9);
                        let chain_ok = oscillation <= row.constant.unwrap() * theta * norm_b * (1.0 + 1e-9) + 1e-12 * oscillation.max(1e-300);
                        row.holds = transfer_ok && chain_ok;
                        return Ok(row);
                    }
                    Err(e) if e.is_capability() => skip = Some(e.to_string()),
                    Err(e) => return Err(e),
                }
            }
            let rep = db.representations[0];
            Ok(BallRow {
                size: members.len(),
                center: rep.center,
                radius: rep.radius,
                companion_center: None,
                a: None,
                eps: None,
                xi: None,
                xi_dual: None,
                xi_star: None,
                oscillation,
                constant: None,
                transfer: None,
                transfer_bound: None,
                holds: true,
                skip,
            })
        })
        .collect();
    let rows = rows.into_iter().collect::<Result<Vec<_>>>()?;
    let skipped = rows.iter().filter(|r| r.skip.is_some()).count();
    let denom = theta * char1 * char1 * char2;
    let final_ratio = if bmo == 0.0 {
        0.0
    } else if denom > 0.0 {
        bmo / denom
    } else {
        f64::INFINITY
    };
    Ok(LowerReport {
        method,
        p,
        q,
        theta,
        bmo_norm: bmo,
        char_lambda1: char1,
        char_lambda2: char2,
        final_ratio,
        max_constant: rows.iter().filter_map(|r| r.constant).fold(0.0, f64::max),
        balls: rows.len(),
        skipped,
        trivial: rows.iter().filter(|r| r.skip.is_none() && r.companion_center.is_none()).count(),
        skip_rate: skipped as f64 / rows.len().max(1) as f64,
        all_hold: rows.iter().all(|r| r.holds),
        rows,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::generate::{generate_space, random_symbol, SpaceGenerator};
    use crate::kernel::{KernelFamily, KernelSpec};
    use crate::space::tests::line;

    fn reals(v: &[f64]) -> Vec<Complex64> {
        v.iter().map(|&x| Complex64::new(x, 0.0)).collect()
    }

    /// Every threshold among attained values, checked by counting.
    fn brute_lower_median(vals: &[f64]) -> f64 {
        let half = vals.len() as f64 / 2.0;
        let mut sorted = vals.to_vec();
        sorted.sort_by(f64::total_cmp);
        *sorted
            .iter()
            .find(|&&m| {
                vals.iter().filter(|&&v| v > m).count() as f64 <= half && vals.iter().filter(|&&v| v < m).count() as f64 <= half
            })
            .unwrap()
    }

    #[test]
    fn medians() {
        let s = line(4);
        let all = [0, 1, 2, 3];
        assert_eq!(median_value(&s, &reals(&[0.0, 1.0, 2.0, 3.0]), &all).unwrap(), 1.0);
        assert_eq!(median_value(&s, &reals(&[7.0; 4]), &all).unwrap(), 7.0);
        let s3 = line(3);
        assert_eq!(median_value(&s3, &reals(&[0.0, 0.0, 5.0]), &[0, 1, 2]).unwrap(), 0.0);
        assert!(median_value(&s, &[Complex64::new(0.0, 1.0); 4], &all).is_err());
        for seed in 0..20 {
            let b = random_symbol(9, false, seed);
            let vals: Vec<f64> = b.iter().map(|z| (z.re * 3.0).round()).collect();
            let m = median_value(&line(9), &reals(&vals), &(0..9).collect::<Vec<_>>()).unwrap();
            assert_eq!(m, brute_lower_median(&vals));
        }
    }

    #[test]
    fn median_split_of_two_halves() {
        let s = line(4);
        let b = reals(&[0.0, 0.0, 1.0, 1.0]);
        let d = median_decomposition(&s, &b, &[0, 1], &[2, 3]).unwrap();
        assert_eq!(d.alpha, 1.0);
        assert_eq!(d.e, [vec![], vec![0, 1]]);
        assert_eq!(d.f, [vec![2, 3], vec![2, 3]]);
        let flat = median_decomposition(&s, &reals(&[2.0; 4]), &[0, 1], &[2, 3]).unwrap();
        assert_eq!(flat.e, [vec![0, 1], vec![0, 1]]);
        assert_eq!(flat.f, [vec![2, 3], vec![2, 3]]);
    }

    fn grid_setup(n: usize, family: KernelFamily) -> (SpaceModel, OperatorMatrix, SpaceConstants) {
        let s = generate_space(&SpaceGenerator::Grid1d { size: n }).unwrap();
        let op = OperatorMatrix::new(&KernelSpec::new(family), &s).unwrap();
        let c = SpaceConstants::of(&s);
        (s, op, c)
    }

    #[test]
    fn companion_is_admissible_and_dualises() {
        let (s, op, c) = grid_setup(64, KernelFamily::PowerSign);
        let cert = certify_matrix(op.kernel(), &s, CertifyOptions::default()).unwrap();
        let base = s.make_ball(5, 1.5);
        let comp = find_companion_ball(&s, op.kernel(), Some(&cert), base, 4.0, 4.0, c).unwrap();
        assert!(comp.geometry.separation >= base.radius);
        let sx = comp.sextuple();
        assert!(check_admissible(&s, op.kernel(), &sx).unwrap().passed);
        let halved = Sextuple { eps: sx.eps / 2.0, ..sx };
        let r = check_admissible(&s, op.kernel(), &halved).unwrap();
        assert!(!r.passed);
        assert!(r.failed.unwrap().starts_with("integral"));
        let (kt, dual) = dualize_admissible(&s, op.kernel(), &sx, c).unwrap();
        assert_eq!(dual.xi, sx.xi * c.c_mu * (c.a0 * (1.0 + sx.xi)).powf(c.q));
        assert!(check_admissible(&s, &kt, &dual).unwrap().passed);
        // the same search twice gives the same ball
        let again = find_companion_ball(&s, op.kernel(), Some(&cert), base, 4.0, 4.0, c).unwrap();
        assert_eq!(again.x0, comp.x0);
    }

    #[test]
    fn empty_annulus_is_a_capability_error() {
        let (s, op, c) = grid_setup(8, KernelFamily::HilbertGrid);
        let base = s.make_ball(4, 2.5);
        let err = find_companion_ball(&s, op.kernel(), None, base, 3.0, 4.0, c).unwrap_err();
        assert!(err.is_capability());
        let err = find_companion_ball(&s, op.kernel(), None, base, 1.0, 4.0, c).unwrap_err();
        assert!(matches!(err, Error::Precondition(_)));
    }

    #[test]
    fn single_step_zero_function() {
        let (s, op, c) = grid_setup(64, KernelFamily::HilbertGrid);
        let base = s.make_ball(3, 1.5);
        let comp = find_companion_ball(&s, op.kernel(), None, base, 24.0, 4.0, c).unwrap();
        let sx = comp.sextuple();
        let g: Vec<f64> = (0..64).map(|i| f64::from(u8::from(s.members(&sx.companion).contains(&i)))).collect();
        let out = awf_single(&s, &op, &sx, &vec![ZERO; 64], &g, 1.0).unwrap();
        assert!(out.h.iter().chain(&out.f_tilde).all(|z| *z == ZERO));
    }

    #[test]
    fn oscillation_bound_complex_symbol() {
        let (s, op, c) = grid_setup(64, KernelFamily::PowerSign);
        let mut b = vec![ZERO; 64];
        for (i, v) in b.iter_mut().enumerate() {
            if (8..24).contains(&i) {
                *v = Complex64::new(0.0, 1.0);
            }
        }
        let base = s.make_ball(10, 3.5);
        let r = bound_oscillation(&s, &op, &b, base, Orientation::Std, None, LowerOptions::default(), c).unwrap();
        assert!(r.oscillation > 0.0 && r.constant <= 4.0);
        assert!(r.identity_residual <= 1e-9);
        // homogeneity in b
        let b3: Vec<Complex64> = b.iter().map(|z| z * 3.0).collect();
        let r3 = bound_oscillation(&s, &op, &b3, base, Orientation::Std, None, LowerOptions::default(), c).unwrap();
        assert!((r3.oscillation - 3.0 * r.oscillation).abs() < 1e-9 * r.oscillation);
        for i in 0..2 {
            assert!((r3.pairings[i] - 3.0 * r.pairings[i]).abs() < 1e-9 * (r.pairings[i] + 1e-12));
        }
        let flat = bound_oscillation(&s, &op, &vec![Complex64::new(2.0, 0.0); 64], base, Orientation::Opp, None, LowerOptions::default(), c).unwrap();
        assert_eq!(flat.oscillation, 0.0);
        assert!(flat.pairings.iter().all(|&v| v < 1e-12));
    }
}
