//! Multi-objective selection: dominance, non-dominated sorting, crowding
//! distance, hard-constraint filtering and K-selection.
//!
//! Operations return index subsets of their input so callers can map results
//! back onto whatever the vectors describe. The sort itself uses the
//! domination-count bookkeeping of the usual fast non-dominated sort; tests
//! check it against a naive all-pairs oracle.

use std::cmp::Ordering;
use std::collections::BTreeMap;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ParetoError {
    #[error("objective vectors use different schemas")]
    SchemaMismatch,
    #[error("objective set is empty")]
    EmptyInput,
    #[error("objective value for {name} is not finite")]
    NonFinite { name: String },
    #[error("duplicate objective name {name}")]
    DuplicateName { name: String },
    #[error("unknown objective {name}")]
    UnknownObjective { name: String },
    #[error("selection size K must be at least 1")]
    BadK,
}

/// Optimization direction of one objective.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    Min,
    Max,
}

impl Direction {
    /// Compares `a` against `b`, `Ordering::Less` meaning "a is better".
    fn better(self, a: f64, b: f64) -> Ordering {
        match self {
            Direction::Min => a.partial_cmp(&b).unwrap(),
            Direction::Max => b.partial_cmp(&a).unwrap(),
        }
    }
}

/// Named, directed objectives shared by every vector in one selection.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ObjectiveSchema {
    objectives: Vec<(String, Direction)>,
}

impl ObjectiveSchema {
    pub fn new(objectives: Vec<(String, Direction)>) -> Result<Arc<Self>, ParetoError> {
        let mut seen = BTreeMap::new();
        for (name, _) in &objectives {
            if seen.insert(name.clone(), ()).is_some() {
                return Err(ParetoError::DuplicateName { name: name.clone() });
            }
        }
        Ok(Arc::new(ObjectiveSchema { objectives }))
    }

    pub fn len(&self) -> usize {
        self.objectives.len()
    }

    pub fn is_empty(&self) -> bool {
        self.objectives.is_empty()
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.objectives.iter().map(|(n, _)| n.as_str())
    }

    pub fn direction(&self, index: usize) -> Direction {
        self.objectives[index].1
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.objectives.iter().position(|(n, _)| n == name)
    }
}

/// One candidate's objective values under a shared schema.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObjectiveVector {
    schema: Arc<ObjectiveSchema>,
    values: Vec<f64>,
}

impl ObjectiveVector {
    pub fn new(schema: Arc<ObjectiveSchema>, values: Vec<f64>) -> Result<Self, ParetoError> {
        if values.len() != schema.len() {
            return Err(ParetoError::SchemaMismatch);
        }
        for (i, v) in values.iter().enumerate() {
            if !v.is_finite() {
                return Err(ParetoError::NonFinite {
                    name: schema.objectives[i].0.clone(),
                });
            }
        }
        Ok(ObjectiveVector { schema, values })
    }

    pub fn schema(&self) -> &Arc<ObjectiveSchema> {
        &self.schema
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn value_of(&self, name: &str) -> Option<f64> {
        self.schema.index_of(name).map(|i| self.values[i])
    }

    fn same_schema(&self, other: &Self) -> bool {
        Arc::ptr_eq(&self.schema, &other.schema) || self.schema == other.schema
    }
}

/// A per-objective threshold; candidates beyond it are removed outright.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HardConstraint {
    pub name: String,
    pub bound: f64,
    pub direction: Direction,
}

/// The set of hard constraints applied before any Pareto reasoning.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct HardConstraintSet {
    pub constraints: Vec<HardConstraint>,
}

impl HardConstraintSet {
    pub fn empty() -> Self {
        Self::default()
    }

    pub fn is_empty(&self) -> bool {
        self.constraints.is_empty()
    }

    /// True iff every bound holds: value <= bound for `Min`, >= for `Max`.
    pub fn satisfied_by(&self, point: &ObjectiveVector) -> Result<bool, ParetoError> {
        for c in &self.constraints {
            let value = point
                .value_of(&c.name)
                .ok_or_else(|| ParetoError::UnknownObjective {
                    name: c.name.clone(),
                })?;
            let ok = match c.direction {
                Direction::Min => value <= c.bound,
                Direction::Max => value >= c.bound,
            };
            if !ok {
                return Ok(false);
            }
        }
        Ok(true)
    }
}

/// True iff `a` is at least as good as `b` on every objective (respecting
/// direction) and strictly better on at least one.
pub fn dominates(a: &ObjectiveVector, b: &ObjectiveVector) -> Result<bool, ParetoError> {
    if !a.same_schema(b) {
        return Err(ParetoError::SchemaMismatch);
    }
    let mut strictly_better = false;
    for (i, (&av, &bv)) in a.values.iter().zip(&b.values).enumerate() {
        match a.schema.direction(i).better(av, bv) {
            Ordering::Less => strictly_better = true,
            Ordering::Greater => return Ok(false),
            Ordering::Equal => {}
        }
    }
    Ok(strictly_better)
}

fn check_common_schema(points: &[ObjectiveVector]) -> Result<(), ParetoError> {
    if points.is_empty() {
        return Err(ParetoError::EmptyInput);
    }
    let first = &points[0];
    if points.iter().any(|p| !p.same_schema(first)) {
        return Err(ParetoError::SchemaMismatch);
    }
    Ok(())
}

/// Indices of the points dominated by no other point. Duplicates of a front
/// member are all retained.
pub fn pareto_front(points: &[ObjectiveVector]) -> Result<Vec<usize>, ParetoError> {
    Ok(nondominated_sort(points)?.remove(0))
}

/// Partition into fronts F1, F2, ...: F1 is the Pareto front, F_{k+1} the
/// front after removing F_1..k. Indices within a front keep input order.
pub fn nondominated_sort(points: &[ObjectiveVector]) -> Result<Vec<Vec<usize>>, ParetoError> {
    check_common_schema(points)?;
    let n = points.len();
    let mut dominated_by: Vec<Vec<usize>> = vec![Vec::new(); n];
    let mut domination_count = vec![0usize; n];
    for i in 0..n {
        for j in i + 1..n {
            if dominates(&points[i], &points[j])? {
                dominated_by[i].push(j);
                domination_count[j] += 1;
            } else if dominates(&points[j], &points[i])? {
                dominated_by[j].push(i);
                domination_count[i] += 1;
            }
        }
    }
    let mut fronts = Vec::new();
    let mut current: Vec<usize> = (0..n).filter(|&i| domination_count[i] == 0).collect();
    while !current.is_empty() {
        let mut next = Vec::new();
        for &i in &current {
            for &j in &dominated_by[i] {
                domination_count[j] -= 1;
                if domination_count[j] == 0 {
                    next.push(j);
                }
            }
        }
        next.sort_unstable();
        fronts.push(std::mem::replace(&mut current, next));
    }
    Ok(fronts)
}

/// Indices of points satisfying every hard constraint; may be empty.
pub fn filter_hard(
    points: &[ObjectiveVector],
    constraints: &HardConstraintSet,
) -> Result<Vec<usize>, ParetoError> {
    let mut keep = Vec::with_capacity(points.len());
    for (i, p) in points.iter().enumerate() {
        if constraints.satisfied_by(p)? {
            keep.push(i);
        }
    }
    Ok(keep)
}

/// NSGA-II crowding distance over one front (a multiset of vectors).
/// Boundary points get +infinity; an objective with zero spread contributes
/// nothing.
pub fn crowding_distance(points: &[ObjectiveVector]) -> Result<Vec<f64>, ParetoError> {
    check_common_schema(points)?;
    let n = points.len();
    let mut distance = vec![0.0f64; n];
    if n <= 2 {
        return Ok(vec![f64::INFINITY; n]);
    }
    let m = points[0].schema.len();
    for obj in 0..m {
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| {
            points[a].values[obj]
                .partial_cmp(&points[b].values[obj])
                .unwrap()
        });
        let lo = points[order[0]].values[obj];
        let hi = points[order[n - 1]].values[obj];
        distance[order[0]] = f64::INFINITY;
        distance[order[n - 1]] = f64::INFINITY;
        let spread = hi - lo;
        if spread == 0.0 {
            continue;
        }
        for k in 1..n - 1 {
            let gap = points[order[k + 1]].values[obj] - points[order[k - 1]].values[obj];
            distance[order[k]] += gap / spread;
        }
    }
    Ok(distance)
}

/// How to pick K candidates out of a feasible pool.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SelectionMode {
    /// Fill from the non-dominated fronts in order, trimming the last
    /// partial front by descending crowding distance.
    Pareto,
    /// Take the top K on one designated objective (the predicted-accuracy
    /// criterion), ignoring the other objectives.
    TopObjective,
}

/// Selects exactly `min(K, |feasible|)` indices. `tie_keys` break every
/// ordering tie deterministically (the engine passes canonical cell
/// strings). For `TopObjective`, `key_objective` names the objective to rank
/// by (oriented by its direction, best first).
pub fn select_k(
    points: &[ObjectiveVector],
    k: usize,
    mode: SelectionMode,
    constraints: &HardConstraintSet,
    tie_keys: &[String],
    key_objective: &str,
) -> Result<Vec<usize>, ParetoError> {
    if k == 0 {
        return Err(ParetoError::BadK);
    }
    check_common_schema(points)?;
    if tie_keys.len() != points.len() {
        return Err(ParetoError::SchemaMismatch);
    }
    let feasible = filter_hard(points, constraints)?;
    if feasible.is_empty() {
        return Ok(Vec::new());
    }
    if feasible.len() <= k {
        let mut all = feasible;
        all.sort_by(|&a, &b| tie_keys[a].cmp(&tie_keys[b]));
        return Ok(all);
    }

    match mode {
        SelectionMode::TopObjective => {
            let obj = points[0]
                .schema
                .index_of(key_objective)
                .ok_or_else(|| ParetoError::UnknownObjective {
                    name: key_objective.to_string(),
                })?;
            let direction = points[0].schema.direction(obj);
            let mut order = feasible;
            order.sort_by(|&a, &b| {
                direction
                    .better(points[a].values[obj], points[b].values[obj])
                    .then_with(|| tie_keys[a].cmp(&tie_keys[b]))
            });
            order.truncate(k);
            order.sort_by(|&a, &b| tie_keys[a].cmp(&tie_keys[b]));
            Ok(order)
        }
        SelectionMode::Pareto => {
            let pool: Vec<ObjectiveVector> =
                feasible.iter().map(|&i| points[i].clone()).collect();
            let fronts = nondominated_sort(&pool)?;
            let mut selected: Vec<usize> = Vec::with_capacity(k);
            for front in fronts {
                let remaining = k - selected.len();
                if remaining == 0 {
                    break;
                }
                if front.len() <= remaining {
                    selected.extend(front.iter().map(|&i| feasible[i]));
                } else {
                    let front_points: Vec<ObjectiveVector> =
                        front.iter().map(|&i| pool[i].clone()).collect();
                    let crowd = crowding_distance(&front_points)?;
                    let mut order: Vec<usize> = (0..front.len()).collect();
                    order.sort_by(|&a, &b| {
                        crowd[b]
                            .partial_cmp(&crowd[a])
                            .unwrap()
                            .then_with(|| {
                                tie_keys[feasible[front[a]]].cmp(&tie_keys[feasible[front[b]]])
                            })
                    });
                    selected.extend(order[..remaining].iter().map(|&i| feasible[front[i]]));
                }
            }
            selected.sort_by(|&a, &b| tie_keys[a].cmp(&tie_keys[b]));
            Ok(selected)
        }
    }
}
