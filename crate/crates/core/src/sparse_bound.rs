//! Sparse operators, pointwise sparse domination of commutators and the
//! two-weight upper bound.

use std::collections::BTreeSet;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dyadic::{
    augment_sparse_family, build_adjacent_systems, verify_sparse, CubeId, DyadicSystem, SparseFamily,
};
use crate::error::{Error, Result};
use crate::operator::OperatorMatrix;
use crate::space::SpaceModel;
use crate::weights::{
    bloom_normaliser, bloom_tuple, bmo_fractional_norm, conjugate, cube_ball_ratio, mean, weighted_lp_norm,
    WeightProfile,
};

const ZERO: Complex64 = Complex64 { re: 0.0, im: 0.0 };

fn abs(f: &[Complex64]) -> Vec<Complex64> {
    f.iter().map(|z| Complex64::new(z.norm(), 0.0)).collect()
}

/// `A_S f = Σ_{Q ∈ S} ⟨f⟩_Q χ_Q`.
pub fn sparse_apply(space: &SpaceModel, system: &DyadicSystem, family: &SparseFamily, f: &[Complex64]) -> Vec<Complex64> {
    let mut out = vec![ZERO; space.len()];
    for &id in &family.cubes {
        let m = &system.cube(id).members;
        let avg = mean(space, f, m);
        for &x in m {
            out[x] += avg;
        }
    }
    out
}

/// `(A_{b,S} f, A*_{b,S} f)` with
/// `A_{b,S} f = Σ_Q |b - ⟨b⟩_Q| ⟨f⟩_Q χ_Q` and `A*_{b,S} f = Σ_Q ⟨|b - ⟨b⟩_Q| f⟩_Q χ_Q`.
pub fn sparse_commutator_pair(
    space: &SpaceModel,
    system: &DyadicSystem,
    family: &SparseFamily,
    b: &[Complex64],
    f: &[Complex64],
) -> (Vec<Complex64>, Vec<Complex64>) {
    let n = space.len();
    let mut a = vec![ZERO; n];
    let mut a_star = vec![ZERO; n];
    for &id in &family.cubes {
        let m = &system.cube(id).members;
        let bq = mean(space, b, m);
        let fq = mean(space, f, m);
        let weighted: Vec<Complex64> = (0..n).map(|z| f[z] * (b[z] - bq).norm()).collect();
        let star = mean(space, &weighted, m);
        for &x in m {
            a[x] += fq * (b[x] - bq).norm();
            a_star[x] += star;
        }
    }
    (a, a_star)
}

/// `Σ_P λ1^p(P)^{1/p} λ2^{-q'}(P)^{1/q'} µ(P)^{-1} ⟨f⟩_P χ_P`.
#[allow(clippy::too_many_arguments)]
pub fn fractional_sparse_apply(
    space: &SpaceModel,
    system: &DyadicSystem,
    family: &SparseFamily,
    l1: &[f64],
    l2: &[f64],
    p: f64,
    q: f64,
    f: &[Complex64],
) -> Vec<Complex64> {
    let mut out = vec![ZERO; space.len()];
    for &id in &family.cubes {
        let m = &system.cube(id).members;
        let c = bloom_normaliser(space, l1, l2, p, q, m) / space.measure(m);
        let avg = mean(space, f, m) * c;
        for &x in m {
            out[x] += avg;
        }
    }
    out
}

/// Cubes `P ⊆ Q` maximal with `⟨|f|⟩_P > 2 ⟨|f|⟩_Q`.
fn average_stops(space: &SpaceModel, system: &DyadicSystem, fabs: &[Complex64], q: CubeId) -> Vec<CubeId> {
    let aq = mean(space, fabs, &system.cube(q).members).re;
    let mut out = Vec::new();
    let mut stack: Vec<CubeId> = children(system, q);
    while let Some(p) = stack.pop() {
        if mean(space, fabs, &system.cube(p).members).re > 2.0 * aq {
            out.push(p);
        } else {
            stack.extend(children(system, p));
        }
    }
    out.sort();
    out
}

fn children(system: &DyadicSystem, q: CubeId) -> Vec<CubeId> {
    system
        .cube(q)
        .children
        .iter()
        .map(|&index| CubeId { level: q.level + 1, index })
        .collect()
}

/// The `1/2`-sparse family of stopping cubes of the averages of `|f|`, from the root.
///
/// Each cube keeps the points outside its stopping cubes, which carry at least
/// half of its measure because the stopping cubes jointly hold at most half.
pub fn stopping_family(space: &SpaceModel, system: &DyadicSystem, f: &[Complex64]) -> SparseFamily {
    let fabs = abs(f);
    let mut cubes = Vec::new();
    let mut witnesses = Vec::new();
    let mut queue = vec![system.root()];
    let mut seen = BTreeSet::new();
    while let Some(q) = queue.pop() {
        if !seen.insert(q) {
            continue;
        }
        let stops = average_stops(space, system, &fabs, q);
        let covered: BTreeSet<usize> = stops.iter().flat_map(|&s| system.cube(s).members.iter().copied()).collect();
        cubes.push(q);
        witnesses.push(system.cube(q).members.iter().copied().filter(|m| !covered.contains(m)).collect());
        queue.extend(stops);
    }
    let mut order: Vec<usize> = (0..cubes.len()).collect();
    order.sort_by_key(|&i| cubes[i]);
    SparseFamily {
        eta: 0.5,
        cubes: order.iter().map(|&i| cubes[i]).collect(),
        witnesses: order.iter().map(|&i| std::mem::take(&mut witnesses[i])).collect(),
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct PointSlack {
    /// `|[b, T] f(x)|`.
    pub lhs: f64,
    /// `Σ_t (A_{b,S̃_t}|f| + A*_{b,S̃_t}|f|)(x)`.
    pub rhs: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct DominationWitness {
    pub systems: Vec<DyadicSystem>,
    pub families: Vec<SparseFamily>,
    /// Smallest constant making the domination hold at every point;
    /// infinite when some point has `rhs = 0 < lhs`.
    pub c_dom: f64,
    pub attained_at: Option<usize>,
    pub slack: Vec<PointSlack>,
    /// Points where the right side vanishes but the left does not.
    pub failed_points: Vec<usize>,
}

impl DominationWitness {
    pub fn succeeded(&self) -> bool {
        self.failed_points.is_empty() && self.c_dom.is_finite()
    }
}

/// Measures the smallest `C` with
/// `|[b, T] f(x)| ≤ C Σ_t (A_{b,S̃_t}|f| + A*_{b,S̃_t}|f|)(x)` at every point.
///
/// Each system starts from its stopping family for `|f|` and is augmented for `b`.
/// Left-side values below `tol · max|[b, T] f|` count as zero.
pub fn dominate_commutator(
    space: &SpaceModel,
    op: &OperatorMatrix,
    b: &[Complex64],
    f: &[Complex64],
    delta: Option<f64>,
    seeds: &[u64],
    tol: f64,
) -> Result<DominationWitness> {
    let systems = build_adjacent_systems(space, delta, seeds)?;
    Ok(dominate_with_systems(space, op, b, f, systems, tol))
}

/// [`dominate_commutator`] on systems built beforehand.
pub fn dominate_with_systems(
    space: &SpaceModel,
    op: &OperatorMatrix,
    b: &[Complex64],
    f: &[Complex64],
    systems: Vec<DyadicSystem>,
    tol: f64,
) -> DominationWitness {
    let fabs = abs(f);
    let families: Vec<SparseFamily> = systems
        .iter()
        .map(|sys| augment_sparse_family(space, sys, b, &stopping_family(space, sys, f)).family)
        .collect();
    let lhs: Vec<f64> = op.commutator_apply(b, f).iter().map(|z| z.norm()).collect();
    let rhs = domination_rhs(space, &systems, &families, b, &fabs);
    let scale = lhs.iter().fold(0.0, |a: f64, &v| a.max(v));
    let mut c_dom: f64 = 0.0;
    let mut attained_at = None;
    let mut failed = Vec::new();
    for x in 0..space.len() {
        if lhs[x] <= tol * scale {
            continue;
        }
        if rhs[x] <= 0.0 {
            failed.push(x);
            continue;
        }
        let r = lhs[x] / rhs[x];
        if r > c_dom {
            c_dom = r;
            attained_at = Some(x);
        }
    }
    if !failed.is_empty() {
        c_dom = f64::INFINITY;
        attained_at = Some(failed[0]);
    }
    DominationWitness {
        systems,
        families,
        c_dom,
        attained_at,
        slack: lhs.into_iter().zip(rhs).map(|(lhs, rhs)| PointSlack { lhs, rhs }).collect(),
        failed_points: failed,
    }
}

/// `Σ_t (A_{b,S_t} g + A*_{b,S_t} g)` pointwise, for `g ≥ 0`.
pub fn domination_rhs(
    space: &SpaceModel,
    systems: &[DyadicSystem],
    families: &[SparseFamily],
    b: &[Complex64],
    g: &[Complex64],
) -> Vec<f64> {
    let mut rhs = vec![0.0; space.len()];
    for (sys, fam) in systems.iter().zip(families) {
        let (a, a_star) = sparse_commutator_pair(space, sys, fam, b, g);
        for x in 0..space.len() {
            rhs[x] += a[x].re + a_star[x].re;
        }
    }
    rhs
}

/// Constant in `‖A^{p,q}(|f|; S)‖_{q,λ2} ≤ C [λ1]^{p'} [λ2]^q ‖f‖_{p,λ1}` for a family
/// with witness ratio `eta`, witness overlap `overlap` and cube-to-ball ratio `kappa`:
/// `C = p' q κ^{p'+q} η^{-(p'/p + q/q')} N^{1/p + 1/q'}`.
///
/// It comes from duality, Hölder over the cubes, `ℓ^q ⊆ ℓ^p`, moving each cube
/// characteristic to its enclosing ball, and the weighted dyadic maximal
/// inequality on the witness sets.
pub fn sparse_chain_constant(p: f64, q: f64, kappa: f64, eta: f64, overlap: usize) -> f64 {
    let (pc, qc) = (conjugate(p), conjugate(q));
    pc * q * kappa.powf(pc + q) * eta.powf(-(pc / p + q / qc)) * (overlap.max(1) as f64).powf(1.0 / p + 1.0 / qc)
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SparseChainCheck {
    /// `‖A^{p,q}(|f|; S)‖_{q,λ2}`.
    pub lhs: f64,
    /// `[λ1]^{p'} [λ2]^q ‖f‖_{p,λ1}`.
    pub bare_rhs: f64,
    /// `lhs / bare_rhs`, the constant the bare inequality would need.
    pub sharpness: f64,
    pub chain_constant: f64,
    pub holds: bool,
}

/// Both sides of the fractional sparse inequality on one family.
#[allow(clippy::too_many_arguments)]
pub fn check_sparse_chain(
    space: &SpaceModel,
    system: &DyadicSystem,
    family: &SparseFamily,
    l1: &[f64],
    l2: &[f64],
    p: f64,
    q: f64,
    char1: f64,
    char2: f64,
    f: &[Complex64],
) -> SparseChainCheck {
    let a = fractional_sparse_apply(space, system, family, l1, l2, p, q, &abs(f));
    let lhs = weighted_lp_norm(space, &a, Some(l2), q);
    let bare_rhs = char1.powf(conjugate(p)) * char2.powf(q) * weighted_lp_norm(space, f, Some(l1), p);
    let report = verify_sparse(space, system, family);
    let kappa = cube_ball_ratio(space, system, &family.cubes);
    let eta = report.worst_ratio.min(1.0);
    let chain_constant = sparse_chain_constant(p, q, kappa, eta, report.max_overlap);
    SparseChainCheck {
        lhs,
        bare_rhs,
        sharpness: if bare_rhs > 0.0 { lhs / bare_rhs } else { 0.0 },
        chain_constant,
        holds: lhs <= chain_constant * bare_rhs * (1.0 + 1e-12) + 1e-300,
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct UpperRow {
    pub label: String,
    pub commutator_norm: f64,
    pub f_norm: f64,
    /// `‖[b, T] f‖_{q,λ2} / (‖b‖_{BMO_ν^α} ‖f‖_{p,λ1})`; `None` when skipped.
    pub ratio: Option<f64>,
    pub c_dom: f64,
    pub chains: Vec<SparseChainCheck>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct UpperReport {
    pub p: f64,
    pub q: f64,
    pub bmo_norm: f64,
    pub char_lambda1: f64,
    pub char_lambda2: f64,
    pub rows: Vec<UpperRow>,
    pub max_ratio: Option<f64>,
    pub max_c_dom: f64,
    pub chains_hold: bool,
}

/// A labelled test function.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TestFunction {
    pub label: String,
    pub values: Vec<Complex64>,
}

/// Point masses, indicators of the cubes of `system`, `signs` seeded `±1` vectors.
pub fn test_function_corpus(space: &SpaceModel, system: &DyadicSystem, signs: usize, seed: u64) -> Vec<TestFunction> {
    let n = space.len();
    let one = Complex64::new(1.0, 0.0);
    let mut out: Vec<TestFunction> = (0..n)
        .map(|i| TestFunction {
            label: format!("point:{i}"),
            values: (0..n).map(|j| if i == j { one } else { ZERO }).collect(),
        })
        .collect();
    let mut seen = BTreeSet::new();
    for id in system.cube_ids() {
        let m = &system.cube(id).members;
        if m.len() > 1 && seen.insert(m.clone()) {
            let mut v = vec![ZERO; n];
            for &x in m {
                v[x] = one;
            }
            out.push(TestFunction {
                label: format!("cube:{}:{}", id.level, id.index),
                values: v,
            });
        }
    }
    for s in 0..signs {
        out.push(TestFunction {
            label: format!("signs:{s}"),
            values: crate::generate::random_signs(n, seed.wrapping_add(s as u64)),
        });
    }
    out
}

/// Runs the upper-bound pipeline over `tests`.
///
/// Fails with [`Error::Internal`] when `b` has zero BMO norm but the
/// commutator does not vanish.
#[allow(clippy::too_many_arguments)]
pub fn verify_upper_bound(
    space: &SpaceModel,
    op: &OperatorMatrix,
    b: &[Complex64],
    p: f64,
    q: f64,
    l1: &[f64],
    l2: &[f64],
    systems: &[DyadicSystem],
    tests: &[TestFunction],
) -> Result<UpperReport> {
    let t = bloom_tuple(l1, l2, p, q, 1.0)?;
    let char1 = WeightProfile::new(l1.to_vec())?.app(space, p)?.value;
    let char2 = WeightProfile::new(l2.to_vec())?.app(space, q)?.value;
    let bmo = bmo_fractional_norm(space, b, &t.nu, t.alpha_over_q).value;
    let rows: Vec<Result<UpperRow>> = tests
        .par_iter()
        .map(|tf| {
            let f = &tf.values;
            let out = op.commutator_apply(b, f);
            let num = weighted_lp_norm(space, &out, Some(l2), q);
            let den = weighted_lp_norm(space, f, Some(l1), p);
            let scale = weighted_lp_norm(space, &op.apply(f), Some(l2), q) * b.iter().fold(0.0, |a: f64, z| a.max(z.norm()));
            if bmo == 0.0 && num > 1e-10 * (scale + 1e-300) {
                return Err(Error::Internal(format!(
                    "b has zero oscillation but [b, T] f has norm {num} for `{}`",
                    tf.label
                )));
            }
            let dom = dominate_with_systems(space, op, b, f, systems.to_vec(), 1e-12);
            let chains = systems
                .iter()
                .zip(&dom.families)
                .map(|(sys, fam)| check_sparse_chain(space, sys, fam, l1, l2, p, q, char1, char2, f))
                .collect();
            Ok(UpperRow {
                label: tf.label.clone(),
                commutator_norm: num,
                f_norm: den,
                ratio: (bmo > 0.0 && den > 0.0).then(|| num / (bmo * den)),
                c_dom: dom.c_dom,
                chains,
            })
        })
        .collect();
    let rows = rows.into_iter().collect::<Result<Vec<_>>>()?;
    let max_ratio = rows.iter().filter_map(|r| r.ratio).reduce(f64::max);
    let max_c_dom = rows.iter().map(|r| r.c_dom).fold(0.0, f64::max);
    let chains_hold = rows.iter().all(|r| r.chains.iter().all(|c| c.holds));
    Ok(UpperReport {
        p,
        q,
        bmo_norm: bmo,
        char_lambda1: char1,
        char_lambda2: char2,
        rows,
        max_ratio,
        max_c_dom,
        chains_hold,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dyadic::build_dyadic_system;
    use crate::generate::{log_uniform_weight, random_symbol};
    use crate::kernel::{KernelFamily, KernelSpec};
    use crate::space::tests::line;

    fn c(v: f64) -> Complex64 {
        Complex64::new(v, 0.0)
    }

    fn reals(v: &[f64]) -> Vec<Complex64> {
        v.iter().map(|&x| c(x)).collect()
    }

    #[test]
    fn single_cube_is_its_indicator() {
        let s = line(4);
        let sys = build_dyadic_system(&s, Some(0.5), 0).unwrap();
        for id in sys.cube_ids() {
            let m = sys.cube(id).members.clone();
            let fam = SparseFamily {
                eta: 1.0,
                cubes: vec![id],
                witnesses: vec![m.clone()],
            };
            let chi: Vec<Complex64> = (0..4).map(|x| c(f64::from(u8::from(m.contains(&x))))).collect();
            assert_eq!(sparse_apply(&s, &sys, &fam, &chi), chi);
        }
    }

    #[test]
    fn nested_pair_by_hand() {
        let s = line(4);
        let sys = build_dyadic_system(&s, Some(0.5), 0).unwrap();
        let root = sys.root();
        let child = CubeId { level: 1, index: 0 };
        let cm = sys.cube(child).members.clone();
        let fam = SparseFamily {
            eta: 0.5,
            cubes: vec![root, child],
            witnesses: vec![vec![], vec![]],
        };
        let f = reals(&[1.0, 2.0, 3.0, 4.0]);
        let avg_child: f64 = cm.iter().map(|&x| x as f64 + 1.0).sum::<f64>() / cm.len() as f64;
        let out = sparse_apply(&s, &sys, &fam, &f);
        for x in 0..4 {
            let expect = 2.5 + if cm.contains(&x) { avg_child } else { 0.0 };
            assert!((out[x].re - expect).abs() < 1e-14);
        }
        // f ≡ 1 counts overlaps
        let ones = sparse_apply(&s, &sys, &fam, &reals(&[1.0; 4]));
        for x in 0..4 {
            assert_eq!(ones[x].re, if cm.contains(&x) { 2.0 } else { 1.0 });
        }
    }

    #[test]
    fn commutator_pair_on_root() {
        let s = line(4);
        let sys = build_dyadic_system(&s, Some(0.5), 0).unwrap();
        let fam = SparseFamily::root(&sys);
        let b = reals(&[0.0, 0.0, 1.0, 1.0]);
        let (a, a_star) = sparse_commutator_pair(&s, &sys, &fam, &b, &reals(&[1.0; 4]));
        for x in 0..4 {
            assert_eq!(a[x].re, 0.5);
            assert_eq!(a_star[x].re, 0.5);
        }
        let (a, a_star) = sparse_commutator_pair(&s, &sys, &fam, &reals(&[3.0; 4]), &reals(&[1.0; 4]));
        assert!(a.iter().chain(&a_star).all(|z| *z == ZERO));
    }

    #[test]
    fn fractional_operator_single_term() {
        let s = line(4);
        let sys = build_dyadic_system(&s, Some(0.5), 0).unwrap();
        let id = CubeId { level: 1, index: 0 };
        let m = sys.cube(id).members.clone();
        let fam = SparseFamily {
            eta: 1.0,
            cubes: vec![id],
            witnesses: vec![m.clone()],
        };
        let l1 = log_uniform_weight(4, 1.0, 3);
        let l2 = log_uniform_weight(4, 1.0, 4);
        let (p, q) = (2.0, 4.0);
        let f = random_symbol(4, true, 5);
        let a: f64 = m.iter().map(|&x| l1[x].powf(p)).sum::<f64>().powf(1.0 / p);
        let qc = q / (q - 1.0);
        let b: f64 = m.iter().map(|&x| l2[x].powf(-qc)).sum::<f64>().powf(1.0 / qc);
        let avg: Complex64 = m.iter().map(|&x| f[x]).sum::<Complex64>() / m.len() as f64;
        let out = fractional_sparse_apply(&s, &sys, &fam, &l1, &l2, p, q, &f);
        for x in 0..4 {
            let expect = if m.contains(&x) { avg * (a * b / m.len() as f64) } else { ZERO };
            assert!((out[x] - expect).norm() < 1e-13);
        }
        // unweighted, p = q: the plain sparse operator
        let ones = vec![1.0; 4];
        let plain = fractional_sparse_apply(&s, &sys, &fam, &ones, &ones, 3.0, 3.0, &f);
        let direct = sparse_apply(&s, &sys, &fam, &f);
        assert!(plain.iter().zip(&direct).all(|(u, v)| (u - v).norm() < 1e-13));
    }

    #[test]
    fn stopping_family_is_half_sparse() {
        let s = line(16);
        let sys = build_dyadic_system(&s, None, 2).unwrap();
        let f = random_symbol(16, false, 9);
        let fam = stopping_family(&s, &sys, &f);
        let r = verify_sparse(&s, &sys, &fam);
        assert!(r.passed, "{:?}", r.failures);
        assert!(fam.cubes.contains(&sys.root()));
    }

    #[test]
    fn domination_on_grid4() {
        let s = line(4);
        let op = OperatorMatrix::new(&KernelSpec::new(KernelFamily::HilbertGrid), &s).unwrap();
        let b = reals(&[0.0, 1.0, 2.0, 3.0]);
        let f = reals(&[1.0, 0.0, 0.0, 0.0]);
        let w = dominate_commutator(&s, &op, &b, &f, Some(0.5), &[0, 1, 2], 1e-12).unwrap();
        assert!(w.succeeded());
        // brute ratio over points
        let lhs = op.commutator_apply(&b, &f);
        let brute = (0..4)
            .filter(|&x| lhs[x].norm() > 0.0)
            .map(|x| lhs[x].norm() / w.slack[x].rhs)
            .fold(0.0, f64::max);
        assert_eq!(w.c_dom, brute);
        let flat = dominate_commutator(&s, &op, &reals(&[2.0; 4]), &f, Some(0.5), &[0], 1e-12).unwrap();
        assert_eq!(flat.c_dom, 0.0);
        let zero = dominate_commutator(&s, &op, &b, &reals(&[0.0; 4]), Some(0.5), &[0], 1e-12).unwrap();
        assert_eq!(zero.c_dom, 0.0);
    }

    #[test]
    fn upper_bound_constant_symbol() {
        let s = line(6);
        let op = OperatorMatrix::new(&KernelSpec::new(KernelFamily::PowerSign), &s).unwrap();
        let sys = build_adjacent_systems(&s, None, &[0, 1]).unwrap();
        let tests = test_function_corpus(&s, &sys[0], 2, 0);
        let ones = vec![1.0; 6];
        let r = verify_upper_bound(&s, &op, &reals(&[4.0; 6]), 2.0, 2.0, &ones, &ones, &sys, &tests).unwrap();
        assert!(r.max_ratio.is_none());
        assert!(r.rows.iter().all(|row| row.commutator_norm < 1e-12));
    }

    #[test]
    fn chain_inequality_with_fractional_exponents() {
        let s = line(4);
        let sys = build_adjacent_systems(&s, Some(0.5), &[0, 1, 2]).unwrap();
        let op = OperatorMatrix::new(&KernelSpec::new(KernelFamily::HilbertGrid), &s).unwrap();
        let l1 = log_uniform_weight(4, 0.5, 1);
        let l2 = log_uniform_weight(4, 0.5, 2);
        let b = random_symbol(4, false, 3);
        let tests = test_function_corpus(&s, &sys[0], 3, 4);
        let r = verify_upper_bound(&s, &op, &b, 2.0, 4.0, &l1, &l2, &sys, &tests).unwrap();
        assert!(r.chains_hold);
        assert!(r.max_ratio.unwrap().is_finite());
    }
}
