//! Muckenhoupt characteristics, Bloom weights and BMO functionals.
//!
//! Every supremum over balls runs over all balls of the space (see
//! [`SpaceModel::balls`]), so the values are exact.

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dyadic::{CubeId, DyadicSystem, SparseFamily};
use crate::error::{Error, Result};
use crate::space::{Ball, SpaceModel};

/// `µ`-average of `f` over a non-empty set.
pub fn mean(space: &SpaceModel, f: &[Complex64], set: &[usize]) -> Complex64 {
    debug_assert!(!set.is_empty());
    let mut acc = Complex64::new(0.0, 0.0);
    let mut m = 0.0;
    for &i in set {
        acc += f[i] * space.mass(i);
        m += space.mass(i);
    }
    acc / m
}

pub(crate) fn osc(space: &SpaceModel, b: &[Complex64], set: &[usize]) -> f64 {
    mean_deviation(space, b, set) / space.measure(set)
}

/// `∫_P |b - ⟨b⟩_P| dµ`.
pub fn mean_deviation(space: &SpaceModel, b: &[Complex64], set: &[usize]) -> f64 {
    let avg = mean(space, b, set);
    set.iter().map(|&i| (b[i] - avg).norm() * space.mass(i)).sum()
}

/// Mean oscillation `Ω(b, P) = µ(P)^{-1} ∫_P |b - ⟨b⟩_P| dµ`.
pub fn oscillation(space: &SpaceModel, b: &[Complex64], set: &[usize]) -> Result<f64> {
    if set.is_empty() {
        return Err(Error::domain("oscillation over an empty set"));
    }
    Ok(osc(space, b, set))
}

/// Hölder conjugate.
pub fn conjugate(p: f64) -> f64 {
    p / (p - 1.0)
}

/// A positive weight.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WeightProfile {
    values: Vec<f64>,
}

impl WeightProfile {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if let Some(i) = values.iter().position(|&w| !(w.is_finite() && w > 0.0)) {
            return Err(Error::domain(format!("weight at point {i} is {}", values[i])));
        }
        Ok(WeightProfile { values })
    }

    pub fn constant(n: usize, c: f64) -> Self {
        WeightProfile { values: vec![c; n] }
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// `w^e` pointwise.
    pub fn pow(&self, e: f64) -> WeightProfile {
        WeightProfile {
            values: self.values.iter().map(|w| w.powf(e)).collect(),
        }
    }

    /// `[w]_{A_p}`.
    pub fn ap(&self, space: &SpaceModel, p: f64) -> Result<Characteristic> {
        ap_characteristic(space, &self.values, p)
    }

    /// `[w]_{A_{p,p}} = [w^p]_{A_p}^{1/p}`.
    pub fn app(&self, space: &SpaceModel, p: f64) -> Result<Characteristic> {
        let c = ap_characteristic(space, &self.pow(p).values, p)?;
        Ok(Characteristic {
            value: c.value.powf(1.0 / p),
            witness: c.witness,
        })
    }
}

/// A supremum over balls with the ball attaining it.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct Characteristic {
    pub value: f64,
    pub witness: Ball,
}

/// Supremum over all balls of `g(µ(B), [Σ_B w_k µ])` with the attaining ball.
pub fn sup_over_balls<G>(space: &SpaceModel, weights: &[&[f64]], g: G) -> (f64, Ball)
where
    G: Fn(f64, &[f64]) -> f64 + Sync,
{
    let k = weights.len();
    (0..space.len())
        .into_par_iter()
        .map(|x| {
            let ord = space.order(x);
            let mut sums = vec![0.0; k];
            let mut mu = 0.0;
            let mut best = (f64::NEG_INFINITY, space.make_ball(x, 0.0));
            let mut start = 0;
            let balls: Vec<Ball> = space.balls_at(x);
            for ball in balls {
                for &y in &ord[start..ball.len] {
                    mu += space.mass(y);
                    for (s, w) in sums.iter_mut().zip(weights) {
                        *s += w[y] * space.mass(y);
                    }
                }
                start = ball.len;
                let v = g(mu, &sums);
                if v > best.0 {
                    best = (v, ball);
                }
            }
            best
        })
        .collect::<Vec<_>>()
        .into_iter()
        .fold((f64::NEG_INFINITY, space.make_ball(0, 0.0)), |a, b| if b.0 > a.0 { b } else { a })
}

/// `[w]_{A_p} = sup_B (∫_B w)(∫_B w^{-1/(p-1)})^{p-1} / µ(B)^p`.
pub fn ap_characteristic(space: &SpaceModel, w: &[f64], p: f64) -> Result<Characteristic> {
    if !(p > 1.0 && p.is_finite()) {
        return Err(Error::param("p", format!("need 1 < p < inf, got {p}")));
    }
    WeightProfile::new(w.to_vec())?;
    let dual: Vec<f64> = w.iter().map(|v| v.powf(-1.0 / (p - 1.0))).collect();
    let (value, witness) = sup_over_balls(space, &[w, &dual], |mu, s| {
        s[0] * s[1].powf(p - 1.0) / mu.powf(p)
    });
    Ok(Characteristic { value, witness })
}

/// The Bloom weight and exponents attached to `(λ1, λ2, p, q)`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct BloomTuple {
    pub p: f64,
    pub q: f64,
    pub p_conj: f64,
    pub q_conj: f64,
    /// The dimension `Q` used for `α`.
    pub dimension: f64,
    pub alpha: f64,
    /// `α / Q = 1/p - 1/q`.
    pub alpha_over_q: f64,
    /// `ν = (λ1/λ2)^{1/(1/p + 1/q')}`.
    pub nu: Vec<f64>,
    /// `s = 1 + (1/p' + 1/q)/(1/p + 1/q')`.
    pub s: f64,
}

pub fn bloom_tuple(l1: &[f64], l2: &[f64], p: f64, q: f64, dimension: f64) -> Result<BloomTuple> {
    check_exponents(p, q)?;
    if !(dimension > 0.0 && dimension.is_finite()) {
        return Err(Error::param("dimension", format!("need Q > 0, got {dimension}")));
    }
    WeightProfile::new(l1.to_vec())?;
    WeightProfile::new(l2.to_vec())?;
    let (pc, qc) = (conjugate(p), conjugate(q));
    let e = 1.0 / (1.0 / p + 1.0 / qc);
    let nu = l1.iter().zip(l2).map(|(a, b)| (a / b).powf(e)).collect();
    let alpha_over_q = 1.0 / p - 1.0 / q;
    Ok(BloomTuple {
        p,
        q,
        p_conj: pc,
        q_conj: qc,
        dimension,
        alpha: dimension * alpha_over_q,
        alpha_over_q,
        nu,
        s: 1.0 + (1.0 / pc + 1.0 / q) / (1.0 / p + 1.0 / qc),
    })
}

/// Rejects exponents outside `1 < p <= q < inf`.
pub fn check_exponents(p: f64, q: f64) -> Result<()> {
    if !(p > 1.0 && q.is_finite()) {
        return Err(Error::param("exponents", format!("need 1 < p, q < inf, got p = {p}, q = {q}")));
    }
    if p > q {
        return Err(Error::param("exponents", format!("need p <= q, got p = {p} > q = {q}")));
    }
    Ok(())
}

/// `(Σ |f_i w_i|^p µ_i)^{1/p}`; `w = None` means `w ≡ 1`.
pub fn weighted_lp_norm(space: &SpaceModel, f: &[Complex64], w: Option<&[f64]>, p: f64) -> f64 {
    let s: f64 = (0..space.len())
        .map(|i| {
            let wi = w.map_or(1.0, |w| w[i]);
            (f[i].norm() * wi).powf(p) * space.mass(i)
        })
        .sum();
    s.powf(1.0 / p)
}

/// `sup_B w(B)^{-α/Q} w(B)^{-1} ∫_B |b - ⟨b⟩_B| dµ` with the attaining ball.
pub fn bmo_fractional_norm(space: &SpaceModel, b: &[Complex64], w: &[f64], alpha_over_q: f64) -> Characteristic {
    let (value, witness) = space
        .balls()
        .par_iter()
        .map(|ball| {
            let m = space.members(ball);
            let wb: f64 = m.iter().map(|&i| w[i] * space.mass(i)).sum();
            (mean_deviation(space, b, m) / wb.powf(1.0 + alpha_over_q), *ball)
        })
        .collect::<Vec<_>>()
        .into_iter()
        .fold((0.0, space.make_ball(0, 0.0)), |a, b| if b.0 > a.0 { b } else { a });
    Characteristic { value, witness }
}

/// `∫_P w^e dµ` over a set.
pub fn weight_mass(space: &SpaceModel, w: &[f64], e: f64, set: &[usize]) -> f64 {
    set.iter().map(|&i| w[i].powf(e) * space.mass(i)).sum()
}

/// `λ1^p(P)^{1/p} λ2^{-q'}(P)^{1/q'}`, the normaliser shared by the sparse BMO norm
/// and the fractional sparse operator.
pub fn bloom_normaliser(space: &SpaceModel, l1: &[f64], l2: &[f64], p: f64, q: f64, set: &[usize]) -> f64 {
    let qc = conjugate(q);
    weight_mass(space, l1, p, set).powf(1.0 / p) * weight_mass(space, l2, -qc, set).powf(1.0 / qc)
}

/// `sup_{Q ∈ S} ∫_Q |b - ⟨b⟩_Q| / (λ1^p(Q)^{1/p} λ2^{-q'}(Q)^{1/q'})` with the attaining cube.
#[allow(clippy::too_many_arguments)]
pub fn bmo_sparse_norm(
    space: &SpaceModel,
    system: &DyadicSystem,
    family: &SparseFamily,
    b: &[Complex64],
    l1: &[f64],
    l2: &[f64],
    p: f64,
    q: f64,
) -> (f64, Option<CubeId>) {
    let mut best = (0.0, None);
    for &id in &family.cubes {
        let m = &system.cube(id).members;
        let v = mean_deviation(space, b, m) / bloom_normaliser(space, l1, l2, p, q, m);
        if v > best.0 {
            best = (v, Some(id));
        }
    }
    best
}

/// `max_Q µ(B_Q) / µ(Q)` over the cubes of a family, where `B_Q` is the smallest
/// closed ball around the center of `Q` containing `Q`.
pub fn cube_ball_ratio(space: &SpaceModel, system: &DyadicSystem, cubes: &[CubeId]) -> f64 {
    cubes
        .iter()
        .map(|&id| {
            let c = system.cube(id);
            let ball = space.closed_ball(c.center, system.enclosing_radius(space, id));
            space.ball_measure(&ball) / space.measure(&c.members)
        })
        .fold(1.0, f64::max)
}

/// Constant `C` in `‖b‖_{BMO(S)} ≤ C ‖b‖_{BMO_ν^α}`:
/// `2 [λ1]_{A_{p,p}} [λ2]_{A_{q,q}} (max_Q µ(B_Q)/µ(Q))²`.
pub fn sparse_bmo_constant(
    space: &SpaceModel,
    system: &DyadicSystem,
    family: &SparseFamily,
    char1: f64,
    char2: f64,
) -> f64 {
    let k = cube_ball_ratio(space, system, &family.cubes);
    2.0 * char1 * char2 * k * k
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct BallViolation {
    pub ball: Ball,
    pub ratio: f64,
}

/// Outcome of the two-sided ball comparison between the Bloom weight and the
/// pair `(λ1, λ2)`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct BloomReport {
    pub char_lambda1: f64,
    pub char_lambda2: f64,
    /// `[ν]_{A_s}`.
    pub char_nu: f64,
    pub min_ratio: f64,
    pub max_ratio: f64,
    pub balls: usize,
    pub violations: Vec<BallViolation>,
    pub nu_bound_holds: bool,
    pub passed: bool,
}

/// For every ball checks
/// `1 ≤ λ1^p(B)^{1/p} λ2^{-q'}(B)^{1/q'} / ν(B)^{1+α/Q} ≤ [λ1]_{A_{p,p}} [λ2]_{A_{q,q}}`,
/// and `[ν]_{A_s}^{1/p + 1/q'} ≤ [λ1]_{A_{p,p}} [λ2]_{A_{q,q}}`, each with slack `tol`.
pub fn verify_bloom_bounds(
    space: &SpaceModel,
    l1: &[f64],
    l2: &[f64],
    p: f64,
    q: f64,
    tol: f64,
) -> Result<BloomReport> {
    // the comparison does not depend on Q, any positive value will do
    let t = bloom_tuple(l1, l2, p, q, 1.0)?;
    let c1 = WeightProfile::new(l1.to_vec())?.app(space, p)?.value;
    let c2 = WeightProfile::new(l2.to_vec())?.app(space, q)?.value;
    let bound = c1 * c2;
    let l1p: Vec<f64> = l1.iter().map(|v| v.powf(p)).collect();
    let l2q: Vec<f64> = l2.iter().map(|v| v.powf(-t.q_conj)).collect();
    let expo = 1.0 + t.alpha_over_q;
    let rows: Vec<(Ball, f64)> = space
        .balls()
        .par_iter()
        .map(|ball| {
            let m = space.members(ball);
            let a: f64 = m.iter().map(|&i| l1p[i] * space.mass(i)).sum();
            let b: f64 = m.iter().map(|&i| l2q[i] * space.mass(i)).sum();
            let v: f64 = m.iter().map(|&i| t.nu[i] * space.mass(i)).sum();
            (*ball, a.powf(1.0 / p) * b.powf(1.0 / t.q_conj) / v.powf(expo))
        })
        .collect();
    let mut min_ratio = f64::INFINITY;
    let mut max_ratio: f64 = 0.0;
    let mut violations = Vec::new();
    for &(ball, ratio) in &rows {
        min_ratio = min_ratio.min(ratio);
        max_ratio = max_ratio.max(ratio);
        if ratio < 1.0 - tol || ratio > bound + tol {
            violations.push(BallViolation { ball, ratio });
        }
    }
    let char_nu = ap_characteristic(space, &t.nu, t.s)?.value;
    let nu_bound_holds = char_nu.powf(1.0 / p + 1.0 / t.q_conj) <= bound + tol;
    Ok(BloomReport {
        char_lambda1: c1,
        char_lambda2: c2,
        char_nu,
        min_ratio,
        max_ratio,
        balls: rows.len(),
        passed: violations.is_empty() && nu_bound_holds,
        violations,
        nu_bound_holds,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::space::tests::line;

    fn real(v: &[f64]) -> Vec<Complex64> {
        v.iter().map(|&x| Complex64::new(x, 0.0)).collect()
    }

    fn brute_ap(s: &SpaceModel, w: &[f64], p: f64) -> f64 {
        let mut best: f64 = 0.0;
        for x in 0..s.len() {
            for &r in &s.radius_classes() {
                let b = s.ball(x, r);
                let a: f64 = b.iter().map(|&i| w[i] * s.mass(i)).sum();
                let d: f64 = b.iter().map(|&i| w[i].powf(-1.0 / (p - 1.0)) * s.mass(i)).sum();
                best = best.max(a * d.powf(p - 1.0) / s.measure(b).powf(p));
            }
        }
        best
    }

    #[test]
    fn constant_weight_has_characteristic_one() {
        let s = line(6);
        for p in [1.5, 2.0, 3.0] {
            let c = ap_characteristic(&s, &[3.0; 6], p).unwrap().value;
            assert!((c - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn grid4_step_weight_matches_enumeration() {
        let s = line(4);
        let w = [1.0, 1.0, 1.0, 4.0];
        let c = ap_characteristic(&s, &w, 2.0).unwrap();
        assert!((c.value - brute_ap(&s, &w, 2.0)).abs() < 1e-12);
        // the pair {2, 3}: (1 + 4)(1 + 1/4) / 4
        assert!((c.value - 25.0 / 16.0).abs() < 1e-12);
        assert!(ap_characteristic(&s, &[1.0, 0.0, 1.0, 1.0], 2.0).is_err());
    }

    #[test]
    fn bloom_tuple_arithmetic() {
        let l = vec![2.0, 3.0, 5.0];
        let t = bloom_tuple(&l, &l, 2.0, 3.0, 1.5).unwrap();
        assert!(t.nu.iter().all(|&v| (v - 1.0).abs() < 1e-15));
        let t = bloom_tuple(&[4.0, 1.0], &[2.0, 1.0], 3.0, 3.0, 1.0).unwrap();
        assert!((t.nu[0] - 2.0).abs() < 1e-12);
        assert_eq!(t.alpha, 0.0);
        assert!((t.s - 2.0).abs() < 1e-12);
        let t = bloom_tuple(&[2.0], &[1.0], 2.0, 4.0, 2.0).unwrap();
        assert!((t.nu[0] - 2f64.powf(0.8)).abs() < 1e-12);
        assert!((t.alpha - 0.5).abs() < 1e-12);
        assert!((1.0 / t.p + 1.0 / t.q_conj - (1.0 + t.alpha / t.dimension)).abs() < 1e-12);
        match bloom_tuple(&[1.0], &[1.0], 3.0, 2.0, 1.0) {
            Err(Error::Parameter { name, .. }) => assert_eq!(name, "exponents"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn lp_norm_examples() {
        let s = line(4);
        let f = real(&[1.0, 2.0, 0.0, 0.0]);
        assert!((weighted_lp_norm(&s, &f, None, 2.0) - 5f64.sqrt()).abs() < 1e-15);
        assert_eq!(weighted_lp_norm(&s, &real(&[0.0; 4]), None, 3.0), 0.0);
    }

    #[test]
    fn bmo_two_points() {
        let s = line(2);
        let n = bmo_fractional_norm(&s, &real(&[0.0, 1.0]), &[1.0, 1.0], 0.0);
        assert!((n.value - 0.5).abs() < 1e-15);
        assert_eq!(n.witness.len, 2);
        assert_eq!(bmo_fractional_norm(&s, &real(&[3.0, 3.0]), &[1.0, 1.0], 0.0).value, 0.0);
    }

    #[test]
    fn oscillation_examples() {
        let s = line(2);
        assert!((oscillation(&s, &real(&[0.0, 1.0]), &[0, 1]).unwrap() - 0.5).abs() < 1e-15);
        assert!(oscillation(&s, &real(&[0.0, 1.0]), &[]).is_err());
    }

    #[test]
    fn unit_weights_give_unit_ratios() {
        let s = line(4);
        let r = verify_bloom_bounds(&s, &[1.0; 4], &[1.0; 4], 2.0, 4.0, 1e-12).unwrap();
        assert!(r.passed);
        assert!((r.min_ratio - 1.0).abs() < 1e-12 && (r.max_ratio - 1.0).abs() < 1e-12);
        assert!((r.char_nu - 1.0).abs() < 1e-12);
    }
}
