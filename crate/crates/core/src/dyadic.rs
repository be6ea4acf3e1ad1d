//! Dyadic cube systems and sparse families.
//!
//! Cubes come from nested farthest-point nets: the centers at scale `δ^k` are
//! kept at every finer scale, each new center hangs below the nearest center
//! of the previous scale, and a cube is the set of points whose chain of
//! ancestors passes through its center. Partition and nesting hold by
//! construction; the sandwich constants are measured afterwards.

use std::collections::{BTreeMap, BTreeSet};

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::space::SpaceModel;
use crate::weights::{mean, osc as oscillation};

/// Position of a cube: generation offset from the root and index inside it.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct CubeId {
    pub level: usize,
    pub index: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Cube {
    pub center: usize,
    /// The exponent `k` of the scale `δ^k`.
    pub generation: i32,
    /// Sorted point indices.
    pub members: Vec<usize>,
    /// Index of the parent in the previous level.
    pub parent: Option<usize>,
    /// Indices of the children in the next level.
    pub children: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DyadicConstants {
    /// Inner sandwich constant: `B(x_Q, a_dy δ^k) ⊆ Q`.
    pub a_dy: f64,
    /// Outer sandwich constant: `Q ⊆ B(x_Q, A_dy δ^k)`.
    pub big_a_dy: f64,
    /// Largest number of children.
    pub branching: usize,
    /// Largest parent to child measure ratio.
    pub c_mu0: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DyadicSystem {
    pub delta: f64,
    pub seed: u64,
    /// Generation exponent of `levels[0]`, the single root.
    pub first_generation: i32,
    pub levels: Vec<Vec<Cube>>,
    pub constants: DyadicConstants,
}

impl DyadicSystem {
    pub fn cube(&self, id: CubeId) -> &Cube {
        &self.levels[id.level][id.index]
    }

    pub fn root(&self) -> CubeId {
        CubeId { level: 0, index: 0 }
    }

    pub fn scale(&self, level: usize) -> f64 {
        self.delta.powi(self.first_generation + level as i32)
    }

    pub fn cube_ids(&self) -> impl Iterator<Item = CubeId> + '_ {
        self.levels.iter().enumerate().flat_map(|(level, cubes)| {
            (0..cubes.len()).map(move |index| CubeId { level, index })
        })
    }

    pub fn leaves(&self) -> Vec<CubeId> {
        let level = self.levels.len() - 1;
        (0..self.levels[level].len()).map(|index| CubeId { level, index }).collect()
    }

    /// For each point, the index of the cube containing it at every level.
    pub fn chains(&self, n: usize) -> Vec<Vec<usize>> {
        let mut chains = vec![vec![0; self.levels.len()]; n];
        for (level, cubes) in self.levels.iter().enumerate() {
            for (i, c) in cubes.iter().enumerate() {
                for &m in &c.members {
                    chains[m][level] = i;
                }
            }
        }
        chains
    }

    /// True when `inner` is `outer` or one of its descendants.
    pub fn is_within(&self, inner: CubeId, outer: CubeId) -> bool {
        if inner.level < outer.level {
            return false;
        }
        let mut cur = inner;
        while cur.level > outer.level {
            cur = CubeId {
                level: cur.level - 1,
                index: self.cube(cur).parent.expect("non-root cube has a parent"),
            };
        }
        cur == outer
    }

    /// Smallest closed ball around the center containing the cube, as (center, radius).
    pub fn enclosing_radius(&self, space: &SpaceModel, id: CubeId) -> f64 {
        let c = self.cube(id);
        c.members.iter().map(|&y| space.d(c.center, y)).fold(0.0, f64::max)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("system serialises")
    }
}

/// Default scale ratio: `1/4` for metrics, `1/(8 A0²)` otherwise.
pub fn default_delta(a0: f64) -> f64 {
    if a0 <= 1.0 {
        0.25
    } else {
        1.0 / (8.0 * a0 * a0)
    }
}

/// Builds a dyadic system; `delta = None` picks [`default_delta`].
///
/// The seed only chooses the first center. Ties in the farthest-point search
/// and in parent assignment go to the smaller index.
pub fn build_dyadic_system(space: &SpaceModel, delta: Option<f64>, seed: u64) -> Result<DyadicSystem> {
    let n = space.len();
    let delta = delta.unwrap_or_else(|| default_delta(space.quasi_triangle_constant().a0));
    if !(delta > 0.0 && delta < 1.0) {
        return Err(Error::param("delta", format!("need 0 < delta < 1, got {delta}")));
    }
    let start = ChaCha8Rng::seed_from_u64(seed).gen_range(0..n);

    let (k0, k1) = if n == 1 {
        (0, 0)
    } else {
        let diam = space.diameter();
        let dmin = space.realized_distances()[0];
        // coarsest: δ^k0 > diam; finest: δ^k1 <= dmin
        let mut k0 = (diam.ln() / delta.ln()).floor() as i32;
        while delta.powi(k0) <= diam {
            k0 -= 1;
        }
        while delta.powi(k0 + 1) > diam {
            k0 += 1;
        }
        let mut k1 = (dmin.ln() / delta.ln()).ceil() as i32;
        while delta.powi(k1) > dmin {
            k1 += 1;
        }
        while k1 - 1 >= k0 && delta.powi(k1 - 1) <= dmin {
            k1 -= 1;
        }
        (k0, k1.max(k0))
    };

    // nested nets
    let mut nets: Vec<Vec<usize>> = Vec::new();
    let mut in_net = vec![false; n];
    let mut net = vec![start];
    in_net[start] = true;
    let mut dn: Vec<f64> = (0..n).map(|y| space.d(start, y)).collect();
    for k in k0..=k1 {
        let scale = delta.powi(k);
        loop {
            let mut best: Option<usize> = None;
            for y in 0..n {
                if !in_net[y] && best.map_or(true, |b| dn[y] > dn[b]) {
                    best = Some(y);
                }
            }
            match best {
                Some(y) if dn[y] >= scale => {
                    in_net[y] = true;
                    net.push(y);
                    for z in 0..n {
                        dn[z] = dn[z].min(space.d(y, z));
                    }
                }
                _ => break,
            }
        }
        nets.push(net.clone());
    }
    debug_assert_eq!(nets.last().unwrap().len(), n);

    // cubes: one per center per level, indexed by center order
    let levels_n = nets.len();
    let mut levels: Vec<Vec<Cube>> = Vec::with_capacity(levels_n);
    let mut index_of: Vec<BTreeMap<usize, usize>> = Vec::with_capacity(levels_n);
    for (l, centers) in nets.iter().enumerate() {
        let mut sorted = centers.clone();
        sorted.sort_unstable();
        let map: BTreeMap<usize, usize> = sorted.iter().enumerate().map(|(i, &c)| (c, i)).collect();
        let cubes = sorted
            .iter()
            .map(|&c| Cube {
                center: c,
                generation: k0 + l as i32,
                members: Vec::new(),
                parent: None,
                children: Vec::new(),
            })
            .collect();
        levels.push(cubes);
        index_of.push(map);
    }
    for l in 1..levels_n {
        let coarse: Vec<usize> = levels[l - 1].iter().map(|c| c.center).collect();
        for i in 0..levels[l].len() {
            let c = levels[l][i].center;
            let parent_center = if index_of[l - 1].contains_key(&c) {
                c
            } else {
                *coarse
                    .iter()
                    .min_by(|&&a, &&b| space.d(c, a).total_cmp(&space.d(c, b)).then(a.cmp(&b)))
                    .unwrap()
            };
            let p = index_of[l - 1][&parent_center];
            levels[l][i].parent = Some(p);
            levels[l - 1][p].children.push(i);
        }
    }
    let last = levels_n - 1;
    for c in levels[last].iter_mut() {
        c.members = vec![c.center];
    }
    for l in (0..last).rev() {
        for i in 0..levels[l].len() {
            let mut m: Vec<usize> = levels[l][i]
                .children
                .iter()
                .flat_map(|&ch| levels[l + 1][ch].members.iter().copied())
                .collect();
            m.sort_unstable();
            levels[l][i].members = m;
        }
    }

    let mut system = DyadicSystem {
        delta,
        seed,
        first_generation: k0,
        levels,
        constants: DyadicConstants {
            a_dy: 0.0,
            big_a_dy: 0.0,
            branching: 0,
            c_mu0: 1.0,
        },
    };
    system.constants = measure_constants(space, &system);
    let report = verify_dyadic_axioms(space, &system);
    if let Some(v) = report.violations.first() {
        return Err(Error::DyadicAxiom {
            axiom: v.axiom,
            detail: v.detail.clone(),
        });
    }
    Ok(system)
}

fn measure_constants(space: &SpaceModel, system: &DyadicSystem) -> DyadicConstants {
    let n = space.len();
    let mut a = f64::INFINITY;
    let mut big_a: f64 = 0.0;
    let mut branching = 0;
    let mut c_mu0: f64 = 1.0;
    for (l, cubes) in system.levels.iter().enumerate() {
        let scale = system.scale(l);
        for c in cubes {
            let mut inside = vec![false; n];
            for &m in &c.members {
                inside[m] = true;
            }
            let mut gap = f64::INFINITY;
            let mut reach: f64 = 0.0;
            for y in 0..n {
                let d = space.d(c.center, y);
                if inside[y] {
                    reach = reach.max(d);
                } else {
                    gap = gap.min(d);
                }
            }
            a = a.min(gap / scale);
            big_a = big_a.max(reach / scale);
            branching = branching.max(c.children.len());
            let mc = space.measure(&c.members);
            for &ch in &c.children {
                let child = &system.levels[l + 1][ch];
                c_mu0 = c_mu0.max(mc / space.measure(&child.members));
            }
        }
    }
    DyadicConstants {
        // nudged so that the strict balls used in the sandwich check are exact
        a_dy: if a.is_finite() { a * (1.0 - 1e-12) } else { 1.0 },
        big_a_dy: if big_a > 0.0 { big_a * (1.0 + 1e-12) } else { 1.0 },
        branching,
        c_mu0,
    }
}

/// Builds one system per seed.
pub fn build_adjacent_systems(
    space: &SpaceModel,
    delta: Option<f64>,
    seeds: &[u64],
) -> Result<Vec<DyadicSystem>> {
    if seeds.is_empty() {
        return Err(Error::param("count", "need at least one system"));
    }
    seeds.iter().map(|&s| build_dyadic_system(space, delta, s)).collect()
}

#[derive(Clone, Debug, Serialize)]
pub struct AxiomViolation {
    pub axiom: &'static str,
    pub cubes: Vec<CubeId>,
    pub detail: String,
}

#[derive(Clone, Debug, Serialize)]
pub struct AxiomReport {
    pub passed: bool,
    pub violations: Vec<AxiomViolation>,
    /// Constants re-measured from the cube structure.
    pub measured: DyadicConstants,
}

/// Checks the cube axioms against the system's recorded constants.
pub fn verify_dyadic_axioms(space: &SpaceModel, system: &DyadicSystem) -> AxiomReport {
    let n = space.len();
    let mut violations = Vec::new();
    let mut flag = |axiom: &'static str, cubes: Vec<CubeId>, detail: String| {
        violations.push(AxiomViolation { axiom, cubes, detail });
    };

    if system.levels.first().map_or(true, |l| l.len() != 1) {
        flag("single root", vec![], "coarsest level must hold exactly one cube".into());
    }

    // partition
    for (level, cubes) in system.levels.iter().enumerate() {
        let mut owner: Vec<Option<usize>> = vec![None; n];
        for (index, c) in cubes.iter().enumerate() {
            for &m in &c.members {
                if m >= n {
                    flag("partition", vec![CubeId { level, index }], format!("unknown point {m}"));
                    continue;
                }
                if let Some(prev) = owner[m] {
                    flag(
                        "partition",
                        vec![CubeId { level, index: prev }, CubeId { level, index }],
                        format!("point {} lies in two cubes", space.ids()[m]),
                    );
                }
                owner[m] = Some(index);
            }
        }
        if let Some(y) = owner.iter().position(|o| o.is_none()) {
            flag(
                "partition",
                vec![],
                format!("point {} is in no cube of level {level}", space.ids()[y]),
            );
        }
    }

    // containment: children inside the parent, covering it, center inside its cube
    for (level, cubes) in system.levels.iter().enumerate() {
        for (index, c) in cubes.iter().enumerate() {
            let id = CubeId { level, index };
            if c.members.binary_search(&c.center).is_err() {
                flag("containment", vec![id], "center outside its cube".into());
            }
            if level + 1 < system.levels.len() {
                let mut union = BTreeSet::new();
                for &ch in &c.children {
                    let child = &system.levels[level + 1][ch];
                    if child.parent != Some(index) {
                        flag(
                            "containment",
                            vec![id, CubeId { level: level + 1, index: ch }],
                            "parent and child links disagree".into(),
                        );
                    }
                    union.extend(child.members.iter().copied());
                }
                let own: BTreeSet<usize> = c.members.iter().copied().collect();
                if union != own {
                    flag("containment", vec![id], "children do not tile their parent".into());
                }
            }
        }
    }

    // nesting: every finer cube sits inside exactly one cube of each coarser level
    for lf in 1..system.levels.len() {
        for (fi, fine) in system.levels[lf].iter().enumerate() {
            for lc in 0..lf {
                let hosts: Vec<usize> = system.levels[lc]
                    .iter()
                    .enumerate()
                    .filter(|(_, c)| fine.members.iter().all(|m| c.members.binary_search(m).is_ok()))
                    .map(|(i, _)| i)
                    .collect();
                if hosts.len() != 1 {
                    flag(
                        "nesting",
                        vec![CubeId { level: lf, index: fi }],
                        format!("contained in {} cubes of level {lc}", hosts.len()),
                    );
                }
            }
        }
    }

    // ball sandwich with the recorded constants
    let k = &system.constants;
    for (level, cubes) in system.levels.iter().enumerate() {
        let scale = system.scale(level);
        for (index, c) in cubes.iter().enumerate() {
            let id = CubeId { level, index };
            let inner = space.ball(c.center, k.a_dy * scale);
            if inner.iter().any(|m| c.members.binary_search(m).is_err()) {
                flag("ball sandwich (inner)", vec![id], format!("a_dy = {}", k.a_dy));
            }
            let outer = space.ball_len(c.center, k.big_a_dy * scale);
            let outer = &space.order(c.center)[..outer];
            if c.members.iter().any(|m| !outer.contains(m)) {
                flag("ball sandwich (outer)", vec![id], format!("A_dy = {}", k.big_a_dy));
            }
            if c.children.len() > k.branching {
                flag("branching", vec![id], format!("{} children", c.children.len()));
            }
        }
    }
    if !(k.a_dy > 0.0) {
        flag("ball sandwich (inner)", vec![], "a_dy must be positive".into());
    }

    let measured = measure_constants(space, system);
    if measured.c_mu0 > k.c_mu0 * (1.0 + 1e-12) {
        flag(
            "measure comparability",
            vec![],
            format!("parent/child ratio {} exceeds {}", measured.c_mu0, k.c_mu0),
        );
    }
    AxiomReport {
        passed: violations.is_empty(),
        violations,
        measured,
    }
}

/// A family of cubes of one system with a witness set `E_Q ⊆ Q` for each.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SparseFamily {
    pub eta: f64,
    pub cubes: Vec<CubeId>,
    /// Sorted witness sets, aligned with `cubes`.
    pub witnesses: Vec<Vec<usize>>,
}

impl SparseFamily {
    /// The family `{root}` with the whole space as witness.
    pub fn root(system: &DyadicSystem) -> Self {
        let root = system.root();
        SparseFamily {
            eta: 1.0,
            cubes: vec![root],
            witnesses: vec![system.cube(root).members.clone()],
        }
    }

    pub fn len(&self) -> usize {
        self.cubes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cubes.is_empty()
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SparseReport {
    pub passed: bool,
    pub worst_ratio: f64,
    pub worst_cube: Option<CubeId>,
    pub max_overlap: usize,
    pub failures: Vec<String>,
}

/// Checks `µ(E_Q) ≥ η µ(Q)` and `E_Q ⊆ Q`, and counts the overlap of the witnesses.
pub fn verify_sparse(space: &SpaceModel, system: &DyadicSystem, family: &SparseFamily) -> SparseReport {
    let mut failures = Vec::new();
    let mut worst_ratio = f64::INFINITY;
    let mut worst_cube = None;
    let mut cover = vec![0usize; space.len()];
    if family.witnesses.len() != family.cubes.len() {
        failures.push("witness list does not match cube list".into());
    }
    for (&id, e) in family.cubes.iter().zip(&family.witnesses) {
        let q = &system.cube(id).members;
        if e.iter().any(|m| q.binary_search(m).is_err()) {
            failures.push(format!("witness of cube {id:?} leaves the cube"));
        }
        let ratio = space.measure(e) / space.measure(q);
        if ratio < worst_ratio {
            worst_ratio = ratio;
            worst_cube = Some(id);
        }
        for &m in e {
            cover[m] += 1;
        }
    }
    if worst_ratio < family.eta {
        failures.push(format!(
            "cube {:?} has witness ratio {worst_ratio} < eta = {}",
            worst_cube.unwrap(),
            family.eta
        ));
    }
    SparseReport {
        passed: failures.is_empty(),
        worst_ratio,
        worst_cube,
        max_overlap: cover.into_iter().max().unwrap_or(0),
        failures,
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Augmented {
    pub family: SparseFamily,
    /// Smallest `C` in the pointwise oscillation bound; 0 when `b` is constant on every cube.
    pub constant: f64,
    /// Cube and point attaining `constant`.
    pub witness: Option<(CubeId, usize)>,
}

/// Stopping cubes of `q`: maximal proper subcubes `P` with
/// `⟨|b - ⟨b⟩_Q|⟩_P > 2 Ω(b, Q)`.
fn stopping_children(space: &SpaceModel, system: &DyadicSystem, b: &[Complex64], q: CubeId) -> Vec<CubeId> {
    let members = &system.cube(q).members;
    let avg = mean(space, b, members);
    let omega = oscillation(space, b, members);
    let mut out = Vec::new();
    let mut stack: Vec<CubeId> = system
        .cube(q)
        .children
        .iter()
        .map(|&index| CubeId { level: q.level + 1, index })
        .collect();
    while let Some(p) = stack.pop() {
        let pm = &system.cube(p).members;
        let local = pm.iter().map(|&y| (b[y] - avg).norm() * space.mass(y)).sum::<f64>()
            / space.measure(pm);
        if local > 2.0 * omega {
            out.push(p);
        } else {
            stack.extend(
                system
                    .cube(p)
                    .children
                    .iter()
                    .map(|&index| CubeId { level: p.level + 1, index }),
            );
        }
    }
    out.sort();
    out
}

/// Enlarges `family` by stopping cubes of the local oscillation of `b` so that
/// `|b(x) - ⟨b⟩_Q| ≤ C Σ_{P ∈ S̃, P ⊆ Q} Ω(b, P) χ_P(x)` for all `Q ∈ S̃`, `x ∈ Q`.
///
/// Cubes of the input keep their witnesses; each added cube gets its own
/// points outside its stopping cubes, which carry at least half its measure.
/// The returned family is declared `η / (2(η + 1))`-sparse.
pub fn augment_sparse_family(
    space: &SpaceModel,
    system: &DyadicSystem,
    b: &[Complex64],
    family: &SparseFamily,
) -> Augmented {
    let mut witness: BTreeMap<CubeId, Vec<usize>> = family
        .cubes
        .iter()
        .copied()
        .zip(family.witnesses.iter().cloned())
        .collect();
    let mut queue: Vec<CubeId> = family.cubes.clone();
    let mut done = BTreeSet::new();
    while let Some(q) = queue.pop() {
        if !done.insert(q) {
            continue;
        }
        let stops = stopping_children(space, system, b, q);
        if !witness.contains_key(&q) {
            unreachable!("queued cubes always have witnesses");
        }
        for &p in &stops {
            if !witness.contains_key(&p) {
                let pm = &system.cube(p).members;
                let inner: BTreeSet<usize> = stopping_children(space, system, b, p)
                    .iter()
                    .flat_map(|&s| system.cube(s).members.iter().copied())
                    .collect();
                let e: Vec<usize> = pm.iter().copied().filter(|m| !inner.contains(m)).collect();
                witness.insert(p, e);
            }
            queue.push(p);
        }
    }

    let eta = family.eta / (2.0 * (family.eta + 1.0));
    let (cubes, witnesses): (Vec<CubeId>, Vec<Vec<usize>>) = witness.into_iter().unzip();
    let out = SparseFamily { eta, cubes, witnesses };
    let (constant, w) = domination_constant(space, system, b, &out);
    Augmented {
        family: out,
        constant,
        witness: w,
    }
}

/// Smallest `C` with `|b(x) - ⟨b⟩_Q| ≤ C Σ_{P ∈ S, P ⊆ Q, x ∈ P} Ω(b, P)` over all `Q ∈ S`, `x ∈ Q`.
pub fn domination_constant(
    space: &SpaceModel,
    system: &DyadicSystem,
    b: &[Complex64],
    family: &SparseFamily,
) -> (f64, Option<(CubeId, usize)>) {
    let chains = system.chains(space.len());
    let omega: BTreeMap<CubeId, f64> = family
        .cubes
        .iter()
        .map(|&id| (id, oscillation(space, b, &system.cube(id).members)))
        .collect();
    let mut best = 0.0;
    let mut at = None;
    for (x, chain) in chains.iter().enumerate() {
        // family cubes containing x, coarse to fine
        let hits: Vec<CubeId> = chain
            .iter()
            .enumerate()
            .map(|(level, &index)| CubeId { level, index })
            .filter(|id| omega.contains_key(id))
            .collect();
        let mut tail = 0.0;
        for &q in hits.iter().rev() {
            tail += omega[&q];
            let lhs = (b[x] - mean(space, b, &system.cube(q).members)).norm();
            if lhs == 0.0 {
                continue;
            }
            let c = if tail > 0.0 { lhs / tail } else { f64::INFINITY };
            if c > best {
                best = c;
                at = Some((q, x));
            }
        }
    }
    (best, at)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::space::tests::line;

    fn real(v: &[f64]) -> Vec<Complex64> {
        v.iter().map(|&x| Complex64::new(x, 0.0)).collect()
    }

    #[test]
    fn grid4_root_and_leaves() {
        let s = line(4);
        for seed in 0..5 {
            let sys = build_dyadic_system(&s, Some(0.5), seed).unwrap();
            assert_eq!(sys.levels[0].len(), 1);
            assert_eq!(sys.levels[0][0].members, vec![0, 1, 2, 3]);
            assert!(sys.delta.powi(sys.first_generation) >= s.diameter());
            let leaves = sys.levels.last().unwrap();
            assert_eq!(leaves.len(), 4);
            assert!(leaves.iter().all(|c| c.members.len() == 1));
            assert!(verify_dyadic_axioms(&s, &sys).passed);
        }
    }

    #[test]
    fn two_points_make_two_levels() {
        let s = line(2);
        let sys = build_dyadic_system(&s, Some(0.5), 0).unwrap();
        assert_eq!(sys.levels.len(), 2);
        assert_eq!(sys.levels[1].len(), 2);
    }

    #[test]
    fn planted_partition_defect_is_reported() {
        let s = line(4);
        let mut sys = build_dyadic_system(&s, Some(0.5), 1).unwrap();
        let level = sys.levels.len() - 1;
        sys.levels[level][0].members.push(3);
        sys.levels[level][0].members.sort();
        let report = verify_dyadic_axioms(&s, &sys);
        assert!(!report.passed);
        let v = report.violations.iter().find(|v| v.axiom == "partition").unwrap();
        assert!(!v.cubes.is_empty());
    }

    #[test]
    fn parent_child_ratio_is_reported() {
        let s = line(4);
        let sys = build_dyadic_system(&s, Some(0.5), 2).unwrap();
        let mut brute: f64 = 1.0;
        for (l, cubes) in sys.levels.iter().enumerate().take(sys.levels.len() - 1) {
            for c in cubes {
                for &ch in &c.children {
                    let ratio = c.members.len() as f64 / sys.levels[l + 1][ch].members.len() as f64;
                    brute = brute.max(ratio);
                }
            }
        }
        assert_eq!(sys.constants.c_mu0, brute);
    }

    #[test]
    fn adjacent_systems_are_deterministic() {
        let s = line(9);
        let a = build_adjacent_systems(&s, None, &[1, 2, 3]).unwrap();
        let b = build_adjacent_systems(&s, None, &[1, 2, 3]).unwrap();
        assert_eq!(a.len(), 3);
        assert_eq!(a[0].to_json(), b[0].to_json());
        assert_eq!(build_adjacent_systems(&s, None, &[7]).unwrap()[0], build_dyadic_system(&s, None, 7).unwrap());
    }

    #[test]
    fn sparse_examples() {
        let s = line(4);
        let sys = build_dyadic_system(&s, Some(0.5), 0).unwrap();
        let leaves = sys.leaves();
        let fam = SparseFamily {
            eta: 1.0,
            witnesses: leaves.iter().map(|&id| sys.cube(id).members.clone()).collect(),
            cubes: leaves.clone(),
        };
        let r = verify_sparse(&s, &sys, &fam);
        assert!(r.passed);
        assert_eq!(r.max_overlap, 1);

        let mut with_root = fam.clone();
        with_root.eta = 0.25;
        with_root.cubes.insert(0, sys.root());
        with_root.witnesses.insert(0, vec![0, 1, 2, 3]);
        assert_eq!(verify_sparse(&s, &sys, &with_root).max_overlap, 2);

        let mut empty = fam;
        empty.witnesses[2].clear();
        let r = verify_sparse(&s, &sys, &empty);
        assert!(!r.passed);
        assert_eq!(r.worst_cube, Some(leaves[2]));
    }

    #[test]
    fn constant_symbol_leaves_family_alone() {
        let s = line(8);
        let sys = build_dyadic_system(&s, Some(0.5), 0).unwrap();
        let fam = SparseFamily::root(&sys);
        let out = augment_sparse_family(&s, &sys, &real(&[2.0; 8]), &fam);
        assert_eq!(out.family.cubes, fam.cubes);
        assert_eq!(out.constant, 0.0);
    }

    // Exhaustive check of the pointwise bound on Grid4 with b = (0,0,1,1).
    #[test]
    fn grid4_step_symbol() {
        let s = line(4);
        let sys = build_dyadic_system(&s, Some(0.5), 0).unwrap();
        let b = real(&[0.0, 0.0, 1.0, 1.0]);
        let out = augment_sparse_family(&s, &sys, &b, &SparseFamily::root(&sys));
        assert!(verify_sparse(&s, &sys, &out.family).passed);
        assert_eq!(out.family.eta, 0.25);
        // brute force over every cube and point
        let mut c: f64 = 0.0;
        for (qi, &q) in out.family.cubes.iter().enumerate() {
            let qm = &sys.cube(q).members;
            let avg = qm.iter().map(|&i| b[i].re).sum::<f64>() / qm.len() as f64;
            let _ = qi;
            for &x in qm {
                let mut rhs = 0.0;
                for &p in &out.family.cubes {
                    let pm = &sys.cube(p).members;
                    if pm.contains(&x) && pm.iter().all(|m| qm.contains(m)) {
                        let pa = pm.iter().map(|&i| b[i].re).sum::<f64>() / pm.len() as f64;
                        rhs += pm.iter().map(|&i| (b[i].re - pa).abs()).sum::<f64>() / pm.len() as f64;
                    }
                }
                let lhs = (b[x].re - avg).abs();
                if lhs > 0.0 {
                    c = c.max(lhs / rhs);
                }
            }
        }
        assert!((out.constant - c).abs() < 1e-15);
        assert!(out.constant.is_finite() && out.constant > 0.0);

        let scaled: Vec<Complex64> = b.iter().map(|v| v * 10.0).collect();
        let out10 = augment_sparse_family(&s, &sys, &scaled, &SparseFamily::root(&sys));
        assert_eq!(out10.family.cubes, out.family.cubes);
        assert!((out10.constant - out.constant).abs() < 1e-14);
    }
}
