//! Finite quasi-metric measure spaces.
//!
//! A [`SpaceModel`] holds point labels, positive point masses and a full
//! distance table. Balls are strict: `B(x, r) = {y : d(x, y) < r}`. Because the
//! space is finite, a ball around `x` only changes when `r` crosses a distance
//! realized from `x`, so every supremum over radii reduces to a finite scan.

use std::collections::BTreeMap;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A ball `B(center, radius)` recorded together with its cardinality.
///
/// Its members are the first `len` entries of the center's distance order,
/// see [`SpaceModel::members`].
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Ball {
    pub center: usize,
    pub radius: f64,
    pub len: usize,
}

/// One point set that arises as a ball, with every `(center, radius)` pair
/// producing it. Representations are sorted by radius, then center.
#[derive(Clone, Debug)]
pub struct DistinctBall {
    pub members: Vec<usize>,
    pub representations: Vec<Ball>,
}

/// A finite quasi-metric measure space.
#[derive(Clone, Debug)]
pub struct SpaceModel {
    ids: Vec<String>,
    mass: Vec<f64>,
    dist: Vec<f64>,
    coords: Option<Vec<Vec<f64>>>,
    // Per center: points sorted by (distance, index).
    order: Vec<Vec<usize>>,
    // Per center: the sorted distances matching `order`.
    sorted_d: Vec<Vec<f64>>,
    // Per center: end offsets of groups of equal distance in `order`.
    shell_ends: Vec<Vec<usize>>,
    // Per center: prefix sums of mass along `order`, length n + 1.
    prefix_mass: Vec<Vec<f64>>,
}

impl SpaceModel {
    /// Builds a space from labels, masses and a row-major `n * n` distance table.
    ///
    /// Fails with [`Error::InvalidSpace`] naming the violated axiom.
    pub fn new(
        ids: Vec<String>,
        mass: Vec<f64>,
        dist: Vec<f64>,
        coords: Option<Vec<Vec<f64>>>,
    ) -> Result<Self> {
        let n = ids.len();
        let bad = |axiom: &'static str, detail: String| Error::InvalidSpace { axiom, detail };
        if n == 0 {
            return Err(bad("non-empty point set", "no points given".into()));
        }
        if mass.len() != n {
            return Err(bad(
                "measure shape",
                format!("{} masses for {} points", mass.len(), n),
            ));
        }
        if dist.len() != n * n {
            return Err(bad(
                "metric shape",
                format!("{} entries, expected {}", dist.len(), n * n),
            ));
        }
        for (i, &m) in mass.iter().enumerate() {
            if !(m.is_finite() && m > 0.0) {
                return Err(bad("positive measure", format!("mass of {} is {m}", ids[i])));
            }
        }
        for i in 0..n {
            if dist[i * n + i] != 0.0 {
                return Err(bad(
                    "zero self-distance",
                    format!("d({0}, {0}) = {1}", ids[i], dist[i * n + i]),
                ));
            }
            for j in 0..n {
                let d = dist[i * n + j];
                if !d.is_finite() || d < 0.0 {
                    return Err(bad(
                        "finite non-negative distance",
                        format!("d({}, {}) = {d}", ids[i], ids[j]),
                    ));
                }
                if i != j && d == 0.0 {
                    return Err(bad(
                        "identity of indiscernibles",
                        format!("d({}, {}) = 0", ids[i], ids[j]),
                    ));
                }
                if d != dist[j * n + i] {
                    return Err(bad(
                        "symmetry",
                        format!(
                            "d({}, {}) = {d} but d({}, {}) = {}",
                            ids[i],
                            ids[j],
                            ids[j],
                            ids[i],
                            dist[j * n + i]
                        ),
                    ));
                }
            }
        }
        if let Some(c) = &coords {
            if c.len() != n {
                return Err(bad("coordinate shape", format!("{} rows for {} points", c.len(), n)));
            }
            let dim = c[0].len();
            if c.iter().any(|row| row.len() != dim || row.iter().any(|v| !v.is_finite())) {
                return Err(bad("coordinate shape", "ragged or non-finite coordinates".into()));
            }
        }

        let mut order = Vec::with_capacity(n);
        let mut sorted_d = Vec::with_capacity(n);
        let mut shell_ends = Vec::with_capacity(n);
        let mut prefix_mass = Vec::with_capacity(n);
        for x in 0..n {
            let row = &dist[x * n..(x + 1) * n];
            let mut ord: Vec<usize> = (0..n).collect();
            ord.sort_by(|&a, &b| row[a].total_cmp(&row[b]).then(a.cmp(&b)));
            let sd: Vec<f64> = ord.iter().map(|&y| row[y]).collect();
            let mut ends = Vec::new();
            for k in 1..=n {
                if k == n || sd[k] != sd[k - 1] {
                    ends.push(k);
                }
            }
            let mut pm = Vec::with_capacity(n + 1);
            pm.push(0.0);
            let mut acc = 0.0;
            for &y in &ord {
                acc += mass[y];
                pm.push(acc);
            }
            order.push(ord);
            sorted_d.push(sd);
            shell_ends.push(ends);
            prefix_mass.push(pm);
        }

        Ok(SpaceModel {
            ids,
            mass,
            dist,
            coords,
            order,
            sorted_d,
            shell_ends,
            prefix_mass,
        })
    }

    /// Builds a space from coordinates with the Euclidean distance raised to `power`.
    pub fn from_coords(
        ids: Vec<String>,
        mass: Vec<f64>,
        coords: Vec<Vec<f64>>,
        power: f64,
    ) -> Result<Self> {
        let n = coords.len();
        let mut dist = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..n {
                if i != j {
                    let e: f64 = coords[i]
                        .iter()
                        .zip(&coords[j])
                        .map(|(a, b)| (a - b) * (a - b))
                        .sum::<f64>()
                        .sqrt();
                    dist[i * n + j] = e.powf(power);
                }
            }
        }
        SpaceModel::new(ids, mass, dist, Some(coords))
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn masses(&self) -> &[f64] {
        &self.mass
    }

    pub fn mass(&self, i: usize) -> f64 {
        self.mass[i]
    }

    pub fn coords(&self) -> Option<&[Vec<f64>]> {
        self.coords.as_deref()
    }

    #[inline]
    pub fn d(&self, i: usize, j: usize) -> f64 {
        self.dist[i * self.len() + j]
    }

    /// Points ordered by distance from `x`, ties broken by index.
    pub fn order(&self, x: usize) -> &[usize] {
        &self.order[x]
    }

    /// End offsets into [`SpaceModel::order`] of the groups of equal distance from `x`.
    pub fn shell_ends(&self, x: usize) -> &[usize] {
        &self.shell_ends[x]
    }

    /// Distance from `x` to the points of the shell ending at offset `end`.
    pub fn shell_distance(&self, x: usize, end: usize) -> f64 {
        self.sorted_d[x][end - 1]
    }

    /// Largest distance realized from `x`.
    pub fn eccentricity(&self, x: usize) -> f64 {
        *self.sorted_d[x].last().unwrap()
    }

    pub fn diameter(&self) -> f64 {
        (0..self.len()).map(|x| self.eccentricity(x)).fold(0.0, f64::max)
    }

    pub fn total_mass(&self) -> f64 {
        self.mass.iter().sum()
    }

    /// Number of points of `B(x, r)`.
    pub fn ball_len(&self, x: usize, r: f64) -> usize {
        self.sorted_d[x].partition_point(|&d| d < r)
    }

    /// Members of the strict ball `B(x, r)`, nearest first.
    pub fn ball(&self, x: usize, r: f64) -> &[usize] {
        &self.order[x][..self.ball_len(x, r)]
    }

    /// `µ(B(x, r))`.
    pub fn ball_mass(&self, x: usize, r: f64) -> f64 {
        self.prefix_mass[x][self.ball_len(x, r)]
    }

    /// Members of a recorded ball.
    pub fn members(&self, ball: &Ball) -> &[usize] {
        &self.order[ball.center][..ball.len]
    }

    /// Mass of the first `len` points in the distance order from `x`.
    pub fn prefix_measure(&self, x: usize, len: usize) -> f64 {
        self.prefix_mass[x][len]
    }

    pub fn ball_measure(&self, ball: &Ball) -> f64 {
        self.prefix_mass[ball.center][ball.len]
    }

    /// The recorded ball `B(x, r)`.
    pub fn make_ball(&self, x: usize, r: f64) -> Ball {
        Ball {
            center: x,
            radius: r,
            len: self.ball_len(x, r),
        }
    }

    pub fn measure(&self, set: &[usize]) -> f64 {
        set.iter().map(|&i| self.mass[i]).sum()
    }

    /// `V(x, y) = µ(B(x, d(x, y)))`; undefined on the diagonal.
    pub fn volume(&self, x: usize, y: usize) -> Result<f64> {
        if x == y {
            return Err(Error::domain(format!(
                "volume undefined for coincident points ({})",
                self.ids[x]
            )));
        }
        Ok(self.ball_mass(x, self.d(x, y)))
    }

    /// Smallest distance between members of two non-empty sets.
    pub fn set_distance(&self, a: &[usize], b: &[usize]) -> Result<f64> {
        if a.is_empty() || b.is_empty() {
            return Err(Error::domain("distance to an empty set"));
        }
        Ok(a.iter()
            .flat_map(|&i| b.iter().map(move |&j| (i, j)))
            .map(|(i, j)| self.d(i, j))
            .fold(f64::INFINITY, f64::min))
    }

    /// Sorted distinct positive distances realized anywhere in the space.
    pub fn realized_distances(&self) -> Vec<f64> {
        let mut v: Vec<f64> = self.dist.iter().copied().filter(|&d| d > 0.0).collect();
        v.sort_by(f64::total_cmp);
        v.dedup();
        v
    }

    /// One representative radius per distinct ball size: the midpoints between
    /// consecutive realized distances, preceded by half the smallest distance
    /// and followed by twice the largest.
    pub fn radius_classes(&self) -> Vec<f64> {
        let d = self.realized_distances();
        if d.is_empty() {
            return vec![1.0];
        }
        let mut r = vec![d[0] / 2.0];
        r.extend(d.windows(2).map(|w| 0.5 * (w[0] + w[1])));
        r.push(2.0 * d[d.len() - 1]);
        r
    }

    /// Every ball as `(center, shell)`: around each center one closed ball per
    /// realized distance, recorded with the midpoint radius that produces it.
    pub fn balls(&self) -> Vec<Ball> {
        (0..self.len()).flat_map(|x| self.balls_at(x)).collect()
    }

    /// The balls of [`SpaceModel::balls`] centered at `x`, smallest first.
    pub fn balls_at(&self, x: usize) -> Vec<Ball> {
        let ends = &self.shell_ends[x];
        ends.iter()
            .enumerate()
            .map(|(k, &end)| {
                let here = self.sorted_d[x][end - 1];
                let radius = match ends.get(k + 1) {
                    Some(&next) => 0.5 * (here + self.sorted_d[x][next - 1]),
                    None if here > 0.0 => 2.0 * here,
                    None => 1.0,
                };
                Ball {
                    center: x,
                    radius,
                    len: end,
                }
            })
            .collect()
    }

    /// Smallest recorded ball around `x` containing every point within distance `r`.
    pub fn closed_ball(&self, x: usize, r: f64) -> Ball {
        let len = self.sorted_d[x].partition_point(|&d| d <= r);
        self.balls_at(x)
            .into_iter()
            .find(|b| b.len >= len)
            .expect("the last ball holds every point")
    }

    /// Balls grouped by point set.
    pub fn distinct_balls(&self) -> Vec<DistinctBall> {
        let mut map: BTreeMap<Vec<usize>, Vec<Ball>> = BTreeMap::new();
        for b in self.balls() {
            let mut m = self.members(&b).to_vec();
            m.sort_unstable();
            map.entry(m).or_default().push(b);
        }
        map.into_iter()
            .map(|(members, mut reps)| {
                reps.sort_by(|a, b| a.radius.total_cmp(&b.radius).then(a.center.cmp(&b.center)));
                DistinctBall {
                    members,
                    representations: reps,
                }
            })
            .collect()
    }

    /// Quasi-triangle constant `A0`, clamped below at 1, with a witness triple.
    ///
    /// Spaces with fewer than three points report `A0 = 1` and `degenerate`.
    pub fn quasi_triangle_constant(&self) -> QuasiTriangle {
        let n = self.len();
        if n < 3 {
            return QuasiTriangle {
                a0: 1.0,
                witness: None,
                degenerate: true,
            };
        }
        let best = (0..n)
            .into_par_iter()
            .map(|i| {
                let mut best = (1.0f64, None);
                for j in (i + 1)..n {
                    let dij = self.d(i, j);
                    for k in 0..n {
                        if k == i || k == j {
                            continue;
                        }
                        let ratio = dij / (self.d(i, k) + self.d(k, j));
                        if ratio > best.0 {
                            best = (ratio, Some([i, j, k]));
                        }
                    }
                }
                best
            })
            .collect::<Vec<_>>()
            .into_iter()
            .fold((1.0, None), |a, b| if b.0 > a.0 { b } else { a });
        QuasiTriangle {
            a0: best.0,
            witness: best.1,
            degenerate: false,
        }
    }

    /// Doubling constant `C_µ = sup µ(B(x, 2r)) / µ(B(x, r))` with `Q = log2 C_µ`.
    ///
    /// Per center both balls are constant between consecutive values of the set
    /// `{d} ∪ {d / 2}` of realized distances, so one radius per gap suffices.
    pub fn doubling_profile(&self) -> Doubling {
        let n = self.len();
        let per_center: Vec<(f64, usize, f64, f64)> = (0..n)
            .into_par_iter()
            .map(|x| {
                let mut bp: Vec<f64> = Vec::with_capacity(2 * n);
                for &d in &self.sorted_d[x] {
                    if d > 0.0 {
                        bp.push(d);
                        bp.push(d / 2.0);
                    }
                }
                bp.sort_by(f64::total_cmp);
                bp.dedup();
                let mut best = (1.0, x, 0.0, f64::INFINITY);
                let mut lo = 0.0;
                for (idx, &hi) in bp.iter().enumerate() {
                    // r in (lo, hi]: evaluate at the right end
                    let r = hi;
                    let ratio = self.ball_mass(x, 2.0 * r) / self.ball_mass(x, r);
                    if ratio > best.0 {
                        best = (ratio, x, lo, hi);
                    }
                    lo = bp[idx];
                }
                best
            })
            .collect();
        let mut best = (1.0, 0usize, 0.0, f64::INFINITY);
        for c in per_center {
            if c.0 > best.0 {
                best = c;
            }
        }
        Doubling {
            c_mu: best.0,
            q: best.0.log2(),
            witness_center: best.1,
            witness_radius_lo: best.2,
            witness_radius_hi: best.3,
        }
    }

    /// Greedy estimate of the geometric doubling number: the largest number of
    /// half-radius balls the greedy cover uses on any ball.
    ///
    /// For more than 128 points only up to 24 geometrically spread shells per
    /// center are scanned.
    pub fn geometric_doubling(&self) -> usize {
        let n = self.len();
        (0..n)
            .into_par_iter()
            .map(|x| {
                let ends = &self.shell_ends[x];
                let picks: Vec<usize> = if n > 128 && ends.len() > 24 {
                    let step = ends.len() as f64 / 24.0;
                    (0..24).map(|i| ((i as f64 * step) as usize).min(ends.len() - 1)).collect()
                } else {
                    (0..ends.len()).collect()
                };
                let mut worst = 1;
                let mut covered = vec![false; n];
                for k in picks {
                    let end = ends[k];
                    let radius = self.sorted_d[x][end - 1];
                    if radius == 0.0 {
                        continue;
                    }
                    let members = &self.order[x][..end];
                    // Limit of B(z, r/2) as r decreases to the shell distance.
                    let half = radius / 2.0;
                    for &m in members {
                        covered[m] = false;
                    }
                    let mut count = 0;
                    for &z in members {
                        if covered[z] {
                            continue;
                        }
                        count += 1;
                        for &m in members {
                            if self.d(z, m) <= half {
                                covered[m] = true;
                            }
                        }
                    }
                    worst = worst.max(count);
                }
                worst
            })
            .max()
            .unwrap_or(1)
    }

    /// All structural constants of the space.
    pub fn profile(&self) -> SpaceProfile {
        let qt = self.quasi_triangle_constant();
        let db = self.doubling_profile();
        SpaceProfile {
            points: self.len(),
            a0: qt.a0,
            a0_witness: qt.witness,
            a0_degenerate: qt.degenerate,
            c_mu: db.c_mu,
            q: db.q,
            doubling_witness: DoublingWitness {
                center: db.witness_center,
                radius_above: db.witness_radius_lo,
                radius_up_to: db.witness_radius_hi,
            },
            n_geo: self.geometric_doubling(),
            radius_classes: self.radius_classes().len(),
            diameter: self.diameter(),
            total_mass: self.total_mass(),
        }
    }

    /// Loads a space document, see [`SpaceFile`].
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_json(&text)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: SpaceFile = serde_json::from_str(text)?;
        file.into_space()
    }

    /// The space as a document with an explicit distance matrix.
    pub fn to_file(&self) -> SpaceFile {
        let n = self.len();
        SpaceFile {
            points: self.ids.iter().map(|s| serde_json::Value::String(s.clone())).collect(),
            measure: self.mass.clone(),
            metric_matrix: Some(MetricMatrix::Nested(
                (0..n).map(|i| self.dist[i * n..(i + 1) * n].to_vec()).collect(),
            )),
            coords: self.coords.clone(),
            metric: None,
            weights: BTreeMap::new(),
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct QuasiTriangle {
    pub a0: f64,
    /// `[i, j, k]` attaining `d(i, j) / (d(i, k) + d(k, j))`.
    pub witness: Option<[usize; 3]>,
    pub degenerate: bool,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Doubling {
    pub c_mu: f64,
    pub q: f64,
    pub witness_center: usize,
    /// The witness ratio holds for every radius in `(lo, hi]`.
    pub witness_radius_lo: f64,
    pub witness_radius_hi: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct DoublingWitness {
    pub center: usize,
    pub radius_above: f64,
    pub radius_up_to: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SpaceProfile {
    pub points: usize,
    pub a0: f64,
    pub a0_witness: Option<[usize; 3]>,
    pub a0_degenerate: bool,
    pub c_mu: f64,
    pub q: f64,
    pub doubling_witness: DoublingWitness,
    pub n_geo: usize,
    pub radius_classes: usize,
    pub diameter: f64,
    pub total_mass: f64,
}

/// On-disk description of a space.
///
/// Either `metric_matrix` (nested rows or one flat row-major array) or
/// `coords` plus `metric` must be present. Named weight vectors may ride along.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SpaceFile {
    pub points: Vec<serde_json::Value>,
    pub measure: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub metric_matrix: Option<MetricMatrix>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub coords: Option<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub metric: Option<MetricSpec>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub weights: BTreeMap<String, Vec<f64>>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(untagged)]
pub enum MetricMatrix {
    Nested(Vec<Vec<f64>>),
    Flat(Vec<f64>),
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum MetricSpec {
    Euclidean,
    /// Euclidean distance raised to `1 + epsilon`.
    Snowflake { epsilon: f64 },
}

impl SpaceFile {
    pub fn into_space(self) -> Result<SpaceModel> {
        let ids: Vec<String> = self
            .points
            .iter()
            .map(|v| match v {
                serde_json::Value::String(s) => s.clone(),
                other => other.to_string(),
            })
            .collect();
        match (self.metric_matrix, self.coords) {
            (Some(m), coords) => {
                let flat = match m {
                    MetricMatrix::Flat(v) => v,
                    MetricMatrix::Nested(rows) => {
                        if rows.iter().any(|r| r.len() != rows.len()) {
                            return Err(Error::InvalidSpace {
                                axiom: "metric shape",
                                detail: "distance matrix is not square".into(),
                            });
                        }
                        rows.into_iter().flatten().collect()
                    }
                };
                SpaceModel::new(ids, self.measure, flat, coords)
            }
            (None, Some(coords)) => {
                let power = match self.metric.unwrap_or(MetricSpec::Euclidean) {
                    MetricSpec::Euclidean => 1.0,
                    MetricSpec::Snowflake { epsilon } => {
                        if !(epsilon.is_finite() && epsilon >= 0.0) {
                            return Err(Error::param("metric.epsilon", "must be finite and >= 0"));
                        }
                        1.0 + epsilon
                    }
                };
                if coords.len() != ids.len() {
                    return Err(Error::InvalidSpace {
                        axiom: "coordinate shape",
                        detail: format!("{} rows for {} points", coords.len(), ids.len()),
                    });
                }
                SpaceModel::from_coords(ids, self.measure, coords, power)
            }
            (None, None) => Err(Error::InvalidSpace {
                axiom: "metric present",
                detail: "neither metric_matrix nor coords given".into(),
            }),
        }
    }
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;

    pub(crate) fn line(n: usize) -> SpaceModel {
        let coords: Vec<Vec<f64>> = (0..n).map(|i| vec![i as f64]).collect();
        SpaceModel::from_coords(
            (0..n).map(|i| i.to_string()).collect(),
            vec![1.0; n],
            coords,
            1.0,
        )
        .unwrap()
    }

    fn brute_doubling(s: &SpaceModel) -> f64 {
        // sweep a fine radius grid well past the diameter
        let diam = s.diameter();
        let mut best: f64 = 1.0;
        let steps = 4000;
        for x in 0..s.len() {
            for i in 1..=steps {
                let r = diam * 1.2 * i as f64 / steps as f64;
                let small: f64 = (0..s.len()).filter(|&y| s.d(x, y) < r).map(|y| s.mass(y)).sum();
                let big: f64 = (0..s.len()).filter(|&y| s.d(x, y) < 2.0 * r).map(|y| s.mass(y)).sum();
                best = best.max(big / small);
            }
        }
        best
    }

    #[test]
    fn grid4_doubling_and_witness() {
        let s = line(4);
        let db = s.doubling_profile();
        assert_eq!(db.c_mu, 3.0);
        assert_eq!(db.witness_center, 1);
        assert_eq!((db.witness_radius_lo, db.witness_radius_hi), (0.5, 1.0));
        assert_eq!(brute_doubling(&s), 3.0);
    }

    #[test]
    fn two_points_double_by_two() {
        let s = line(2);
        assert_eq!(s.doubling_profile().c_mu, 2.0);
        let qt = s.quasi_triangle_constant();
        assert!(qt.degenerate);
        assert_eq!(qt.a0, 1.0);
    }

    #[test]
    fn squared_line_has_a0_two() {
        let coords = vec![vec![0.0], vec![1.0], vec![2.0]];
        let s = SpaceModel::from_coords(
            vec!["a".into(), "b".into(), "c".into()],
            vec![1.0; 3],
            coords,
            2.0,
        )
        .unwrap();
        let qt = s.quasi_triangle_constant();
        assert_eq!(qt.a0, 2.0);
        assert_eq!(qt.witness, Some([0, 2, 1]));
    }

    #[test]
    fn balls_are_strict() {
        let s = line(4);
        assert_eq!(s.ball(0, 1.0), &[0]);
        let mut b = s.ball(1, 2.0).to_vec();
        b.sort();
        assert_eq!(b, vec![0, 1, 2]);
    }

    #[test]
    fn volumes_and_set_distance() {
        let s = line(4);
        assert_eq!(s.volume(0, 1).unwrap(), 1.0);
        assert_eq!(s.volume(0, 3).unwrap(), 3.0);
        assert!(s.volume(2, 2).is_err());
        assert_eq!(s.set_distance(&[0, 1], &[3]).unwrap(), 2.0);
        assert!(s.set_distance(&[], &[3]).is_err());
    }

    #[test]
    fn loader_names_the_axiom() {
        let asym = r#"{"points":["a","b"],"measure":[1,1],"metric_matrix":[[0,1],[2,0]]}"#;
        match SpaceModel::from_json(asym) {
            Err(Error::InvalidSpace { axiom, .. }) => assert_eq!(axiom, "symmetry"),
            other => panic!("unexpected {other:?}"),
        }
        let neg = r#"{"points":["a","b"],"measure":[1,0],"metric_matrix":[0,1,1,0]}"#;
        match SpaceModel::from_json(neg) {
            Err(Error::InvalidSpace { axiom, .. }) => assert_eq!(axiom, "positive measure"),
            other => panic!("unexpected {other:?}"),
        }
        let snow = r#"{"points":[0,1,2],"measure":[1,1,1],"coords":[[0],[1],[2]],
                       "metric":{"type":"snowflake","epsilon":1.0}}"#;
        let s = SpaceModel::from_json(snow).unwrap();
        assert_eq!(s.d(0, 2), 4.0);
        assert_eq!(s.ids()[1], "1");
    }

    #[test]
    fn document_round_trip_keeps_distances() {
        let s = line(5);
        let text = serde_json::to_string(&s.to_file()).unwrap();
        let t = SpaceModel::from_json(&text).unwrap();
        for i in 0..5 {
            for j in 0..5 {
                assert_eq!(s.d(i, j), t.d(i, j));
            }
        }
    }

    #[test]
    fn distinct_balls_of_grid4() {
        let s = line(4);
        let db = s.distinct_balls();
        // singletons, 3 two-point intervals from the ends... enumerate by brute force
        let mut sets = std::collections::BTreeSet::new();
        for x in 0..4 {
            for &r in &s.radius_classes() {
                let mut m = s.ball(x, r).to_vec();
                m.sort();
                sets.insert(m);
            }
        }
        let ours: std::collections::BTreeSet<_> = db.iter().map(|d| d.members.clone()).collect();
        assert_eq!(ours, sets);
    }

    #[test]
    fn n_geo_of_line() {
        // half-radius balls on a path need at most three pieces per ball
        assert!(line(16).geometric_doubling() <= 3);
    }
}
