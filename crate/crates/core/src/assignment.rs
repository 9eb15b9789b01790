//! Minimum-distance robot/task assignment.
//!
//! The solver is the shortest-augmenting-path form of the Hungarian method
//! over a square matrix; rectangular inputs are padded with a constant
//! dummy cost. It is generic over [`Cost`] so the same code runs on floats
//! and on exact rationals.

use std::fmt::Debug;
use std::ops::{Add, Sub};

use num_traits::Zero;

use crate::geometry::Pose2D;
use crate::scalar::Scalar;

/// Entry type of a cost matrix.
pub trait Cost: Copy + PartialOrd + Zero + Add<Output = Self> + Sub<Output = Self> + Debug {
    /// Finite and non-negative.
    fn is_valid(&self) -> bool;

    /// Slack under which two totals count as tied.
    fn tie_tolerance(total: Self) -> Self;
}

impl Cost for f64 {
    fn is_valid(&self) -> bool {
        self.is_finite() && *self >= 0.0
    }
    fn tie_tolerance(total: Self) -> Self {
        1e-9 * total.abs().max(1.0)
    }
}

impl Cost for f32 {
    fn is_valid(&self) -> bool {
        self.is_finite() && *self >= 0.0
    }
    fn tie_tolerance(total: Self) -> Self {
        1e-5 * total.abs().max(1.0)
    }
}

impl Cost for i64 {
    fn is_valid(&self) -> bool {
        *self >= 0
    }
    fn tie_tolerance(_: Self) -> Self {
        0
    }
}

impl Cost for num_rational::Ratio<i64> {
    fn is_valid(&self) -> bool {
        *self >= Self::zero()
    }
    fn tie_tolerance(_: Self) -> Self {
        Self::zero()
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum AssignmentError {
    #[error("assignment needs at least one robot and one task")]
    Empty,
    #[error("cost matrix row {row} has {found} entries, expected {expected}")]
    Ragged { row: usize, found: usize, expected: usize },
    #[error("invalid cost at ({row}, {col}): entries must be finite and non-negative")]
    InvalidEntry { row: usize, col: usize },
}

/// Robots, tasks and the distance matrix `d[i][j]` between them.
#[derive(Debug, Clone, PartialEq)]
pub struct AssignmentProblem<R, J, C> {
    pub robots: Vec<R>,
    pub tasks: Vec<J>,
    pub matrix: Vec<Vec<C>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Assignment<R, J, C> {
    pub pairs: Vec<(R, J)>,
    pub total_cost: C,
    pub unassigned_robots: Vec<R>,
    pub unassigned_tasks: Vec<J>,
}

/// Straight-line distance matrix between robot and target positions.
pub fn build_distance_matrix<R: Clone, J: Clone, T: Scalar>(
    robots: &[(R, Pose2D<T>)],
    tasks: &[(J, Pose2D<T>)],
) -> Result<AssignmentProblem<R, J, T>, AssignmentError> {
    if robots.is_empty() || tasks.is_empty() {
        return Err(AssignmentError::Empty);
    }
    let matrix = robots
        .iter()
        .map(|(_, rp)| tasks.iter().map(|(_, tp)| rp.distance(tp)).collect())
        .collect();
    Ok(AssignmentProblem {
        robots: robots.iter().map(|(id, _)| id.clone()).collect(),
        tasks: tasks.iter().map(|(id, _)| id.clone()).collect(),
        matrix,
    })
}

fn validate<C: Cost>(matrix: &[Vec<C>]) -> Result<(usize, usize), AssignmentError> {
    let rows = matrix.len();
    if rows == 0 || matrix[0].is_empty() {
        return Err(AssignmentError::Empty);
    }
    let cols = matrix[0].len();
    for (i, row) in matrix.iter().enumerate() {
        if row.len() != cols {
            return Err(AssignmentError::Ragged { row: i, found: row.len(), expected: cols });
        }
        for (j, c) in row.iter().enumerate() {
            if !c.is_valid() {
                return Err(AssignmentError::InvalidEntry { row: i, col: j });
            }
        }
    }
    Ok((rows, cols))
}

/// Square minimum-cost perfect matching; returns the column of each row.
fn hungarian_square<C: Cost>(a: &[Vec<C>]) -> Vec<usize> {
    let n = a.len();
    let add = |x: C, y: C| x + y;
    // 1-based potentials; index 0 is the virtual source column
    let mut u = vec![C::zero(); n + 1];
    let mut v = vec![C::zero(); n + 1];
    let mut p = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    for i in 1..=n {
        p[0] = i;
        let mut j0 = 0usize;
        let mut minv: Vec<Option<C>> = vec![None; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta: Option<C> = None;
            let mut j1 = 0usize;
            for j in 1..=n {
                if used[j] {
                    continue;
                }
                let cur = a[i0 - 1][j - 1] - u[i0] - v[j];
                if minv[j].is_none_or(|m| cur < m) {
                    minv[j] = Some(cur);
                    way[j] = j0;
                }
                let m = minv[j].expect("set above");
                if delta.is_none_or(|d| m < d) {
                    delta = Some(m);
                    j1 = j;
                }
            }
            let delta = delta.expect("an unused column remains");
            for j in 0..=n {
                if used[j] {
                    u[p[j]] = add(u[p[j]], delta);
                    v[j] = v[j] - delta;
                } else if let Some(m) = minv[j] {
                    minv[j] = Some(m - delta);
                }
            }
            j0 = j1;
            if p[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut col_of_row = vec![0usize; n];
    for j in 1..=n {
        if p[j] > 0 {
            col_of_row[p[j] - 1] = j - 1;
        }
    }
    col_of_row
}

fn matching_cost<C: Cost>(a: &[Vec<C>], cols: &[usize]) -> C {
    cols.iter()
        .enumerate()
        .fold(C::zero(), |acc, (i, &j)| acc + a[i][j])
}

/// Optimal completion cost of `a` restricted to the given rows and columns.
fn restricted_optimum<C: Cost>(a: &[Vec<C>], rows: &[usize], cols: &[usize]) -> C {
    if rows.is_empty() {
        return C::zero();
    }
    let sub: Vec<Vec<C>> = rows
        .iter()
        .map(|&i| cols.iter().map(|&j| a[i][j]).collect())
        .collect();
    let m = hungarian_square(&sub);
    matching_cost(&sub, &m)
}

/// Among optimal matchings, picks the lexicographically smallest by
/// (row, column).
fn lexicographic_optimum<C: Cost>(a: &[Vec<C>]) -> Vec<usize> {
    let n = a.len();
    let base = hungarian_square(a);
    let best = matching_cost(a, &base);
    let tol = C::tie_tolerance(best);
    let mut fixed: Vec<usize> = Vec::with_capacity(n);
    let mut fixed_sum = C::zero();
    for i in 0..n {
        let rest_rows: Vec<usize> = (i + 1..n).collect();
        let mut chosen = None;
        for j in 0..n {
            if fixed.contains(&j) {
                continue;
            }
            let rest_cols: Vec<usize> = (0..n).filter(|c| *c != j && !fixed.contains(c)).collect();
            let total = fixed_sum + a[i][j] + restricted_optimum(a, &rest_rows, &rest_cols);
            if total <= best + tol {
                chosen = Some(j);
                break;
            }
        }
        // unreachable in exact arithmetic; keep the Hungarian answer otherwise
        let j = chosen.unwrap_or(base[i]);
        fixed_sum = fixed_sum + a[i][j];
        fixed.push(j);
    }
    if fixed.iter().copied().collect::<std::collections::BTreeSet<_>>().len() == n {
        fixed
    } else {
        base
    }
}

/// Solves the raw matrix form. Returns, for each row, the matched column
/// (or `None` when the row is left over in a rectangular problem).
pub fn solve_matrix<C: Cost>(matrix: &[Vec<C>]) -> Result<Vec<Option<usize>>, AssignmentError> {
    let (rows, cols) = validate(matrix)?;
    let n = rows.max(cols);
    let max_entry = matrix
        .iter()
        .flatten()
        .copied()
        .fold(C::zero(), |m, c| if c > m { c } else { m });
    let mut dummy = C::zero();
    for _ in 0..10 {
        dummy = dummy + max_entry;
    }
    let padded: Vec<Vec<C>> = (0..n)
        .map(|i| {
            (0..n)
                .map(|j| if i < rows && j < cols { matrix[i][j] } else { dummy })
                .collect()
        })
        .collect();
    let cols_of = lexicographic_optimum(&padded);
    Ok((0..rows)
        .map(|i| Some(cols_of[i]).filter(|&j| j < cols))
        .collect())
}

pub fn solve_assignment<R: Clone, J: Clone, C: Cost>(
    problem: &AssignmentProblem<R, J, C>,
) -> Result<Assignment<R, J, C>, AssignmentError> {
    let (rows, cols) = validate(&problem.matrix)?;
    if rows != problem.robots.len() || cols != problem.tasks.len() {
        return Err(AssignmentError::Ragged {
            row: 0,
            found: cols,
            expected: problem.tasks.len(),
        });
    }
    let matched = solve_matrix(&problem.matrix)?;
    let mut pairs = Vec::new();
    let mut total = C::zero();
    let mut task_used = vec![false; cols];
    let mut unassigned_robots = Vec::new();
    for (i, m) in matched.iter().enumerate() {
        match m {
            Some(j) => {
                total = total + problem.matrix[i][*j];
                task_used[*j] = true;
                pairs.push((problem.robots[i].clone(), problem.tasks[*j].clone()));
            }
            None => unassigned_robots.push(problem.robots[i].clone()),
        }
    }
    let unassigned_tasks = problem
        .tasks
        .iter()
        .zip(&task_used)
        .filter(|(_, used)| !**used)
        .map(|(t, _)| t.clone())
        .collect();
    Ok(Assignment {
        pairs,
        total_cost: total,
        unassigned_robots,
        unassigned_tasks,
    })
}

/// A robot eligible for (re)assignment.
#[derive(Debug, Clone, PartialEq)]
pub struct Candidate<R, J, T> {
    pub id: R,
    pub pose: Pose2D<T>,
    /// Task the robot is currently driving toward, if any.
    pub current: Option<J>,
}

/// Reassigns free robots to open tasks. A robot already heading for a task
/// only switches when the new task is closer by more than `hysteresis`.
///
/// Robots committed to a manipulation must be left out of `robots` and
/// their tasks out of `tasks` by the caller.
pub fn rebalance_candidates<R, J, T>(
    robots: &[Candidate<R, J, T>],
    tasks: &[(J, Pose2D<T>)],
    hysteresis: T,
) -> Vec<(R, J)>
where
    R: Clone + PartialEq,
    J: Clone + PartialEq,
    T: Scalar + Cost,
{
    let mut locked: Vec<(R, J)> = Vec::new();
    let mut free_robots: Vec<&Candidate<R, J, T>> = robots.iter().collect();
    let mut open: Vec<&(J, Pose2D<T>)> = tasks.iter().collect();
    // drop stale current tasks that are no longer open
    let current_of = |r: &Candidate<R, J, T>| -> Option<(J, Pose2D<T>)> {
        let c = r.current.as_ref()?;
        tasks.iter().find(|(id, _)| id == c).cloned()
    };
    loop {
        if free_robots.is_empty() || open.is_empty() {
            break;
        }
        let rs: Vec<(R, Pose2D<T>)> = free_robots.iter().map(|r| (r.id.clone(), r.pose)).collect();
        let ts: Vec<(J, Pose2D<T>)> = open.iter().map(|t| (*t).clone()).collect();
        let problem = build_distance_matrix(&rs, &ts).expect("non-empty");
        let solved = solve_assignment(&problem).expect("distances are valid costs");
        let mut violator = None;
        for r in &free_robots {
            let Some((cur_id, cur_pose)) = current_of(r) else { continue };
            if !open.iter().any(|(id, _)| *id == cur_id) {
                continue;
            }
            let new = solved.pairs.iter().find(|(rid, _)| *rid == r.id).map(|(_, t)| t.clone());
            if new.as_ref() == Some(&cur_id) {
                continue;
            }
            let keep = match &new {
                Some(t) => {
                    let tp = open.iter().find(|(id, _)| id == t).expect("assigned task is open").1;
                    let gain = r.pose.distance(&cur_pose) - r.pose.distance(&tp);
                    gain.partial_cmp(&hysteresis) != Some(std::cmp::Ordering::Greater)
                }
                None => true,
            };
            if keep {
                violator = Some((r.id.clone(), cur_id));
                break;
            }
        }
        match violator {
            Some((rid, tid)) => {
                free_robots.retain(|r| r.id != rid);
                open.retain(|(id, _)| *id != tid);
                locked.push((rid, tid));
            }
            None => {
                locked.extend(solved.pairs);
                break;
            }
        }
    }
    locked
}

#[cfg(test)]
mod tests {
    use super::*;

    fn solve(m: Vec<Vec<f64>>) -> Assignment<usize, usize, f64> {
        let p = AssignmentProblem {
            robots: (0..m.len()).collect(),
            tasks: (0..m[0].len()).collect(),
            matrix: m,
        };
        solve_assignment(&p).unwrap()
    }

    #[test]
    fn distance_matrix_examples() {
        let robots = [("a", Pose2D::new(0.0, 0.0, 0.0)), ("b", Pose2D::new(1.0, 0.0, 0.0))];
        let tasks = [("x", Pose2D::new(1.0, 0.0, 0.0)), ("y", Pose2D::new(0.0, 0.0, 0.0))];
        let p = build_distance_matrix(&robots, &tasks).unwrap();
        assert_eq!(p.matrix, vec![vec![1.0, 0.0], vec![0.0, 1.0]]);

        let p = build_distance_matrix(&[(0, Pose2D::new(3.0, 4.0, 0.0))], &[(0, Pose2D::identity())]).unwrap();
        assert_eq!(p.matrix, vec![vec![5.0]]);

        let empty: [(u8, Pose2D<f64>); 0] = [];
        assert_eq!(build_distance_matrix(&empty, &tasks), Err(AssignmentError::Empty));
    }

    #[test]
    fn three_by_three_example() {
        // oracle: brute force over the six permutations gives
        // [1,0,2] -> 1 + 2 + 2 = 5 as the unique minimum
        let a = solve(vec![vec![4.0, 1.0, 3.0], vec![2.0, 0.0, 5.0], vec![3.0, 2.0, 2.0]]);
        assert_eq!(a.pairs, vec![(0, 1), (1, 0), (2, 2)]);
        assert_eq!(a.total_cost, 5.0);
    }

    #[test]
    fn swapped_pair_example() {
        let a = solve(vec![vec![1.0, 0.0], vec![0.0, 1.0]]);
        assert_eq!(a.pairs, vec![(0, 1), (1, 0)]);
        assert_eq!(a.total_cost, 0.0);
    }

    #[test]
    fn single_pair() {
        let a = solve(vec![vec![2.5]]);
        assert_eq!(a.pairs, vec![(0, 0)]);
        assert_eq!(a.total_cost, 2.5);
    }

    #[test]
    fn ties_prefer_lowest_indices() {
        let a = solve(vec![vec![1.0, 1.0], vec![1.0, 1.0]]);
        assert_eq!(a.pairs, vec![(0, 0), (1, 1)]);
        let a = solve(vec![vec![3.0, 3.0, 3.0]]);
        assert_eq!(a.pairs, vec![(0, 0)]);
        assert_eq!(a.unassigned_tasks, vec![1, 2]);
    }

    #[test]
    fn rectangular_more_robots() {
        let a = solve(vec![vec![5.0], vec![1.0], vec![3.0]]);
        assert_eq!(a.pairs, vec![(1, 0)]);
        assert_eq!(a.unassigned_robots, vec![0, 2]);
        assert_eq!(a.total_cost, 1.0);
    }

    #[test]
    fn rejects_bad_entries() {
        let p = AssignmentProblem { robots: vec![0], tasks: vec![0, 1], matrix: vec![vec![1.0, f64::NAN]] };
        assert_eq!(solve_assignment(&p), Err(AssignmentError::InvalidEntry { row: 0, col: 1 }));
        let p = AssignmentProblem { robots: vec![0], tasks: vec![0], matrix: vec![vec![-1.0]] };
        assert!(solve_assignment(&p).is_err());
    }

    #[test]
    fn exact_rational_costs() {
        use num_rational::Ratio;
        let r = |n: i64, d: i64| Ratio::new(n, d);
        let m = vec![vec![r(1, 3), r(1, 2)], vec![r(1, 2), r(2, 3)]];
        // both matchings total 1; tie goes to the identity
        let cols = solve_matrix(&m).unwrap();
        assert_eq!(cols, vec![Some(0), Some(1)]);
    }

    #[test]
    fn rebalance_switches_only_past_hysteresis() {
        let robot = Candidate { id: "a", pose: Pose2D::new(0.0, 0.0, 0.0), current: Some("far") };
        let tasks = [("far", Pose2D::new(3.0, 0.0, 0.0)), ("near", Pose2D::new(1.0, 0.0, 0.0))];
        let out = rebalance_candidates(std::slice::from_ref(&robot), &tasks, 0.2);
        assert_eq!(out, vec![("a", "near")]);

        let tasks = [("far", Pose2D::new(3.0, 0.0, 0.0)), ("near", Pose2D::new(2.9, 0.0, 0.0))];
        let out = rebalance_candidates(&[robot], &tasks, 0.2);
        assert_eq!(out, vec![("a", "far")]);
    }

    #[test]
    fn rebalance_keeps_goal_when_it_would_be_stolen() {
        let a = Candidate { id: "a", pose: Pose2D::new(0.0, 0.0, 0.0), current: Some("t1") };
        let b = Candidate { id: "b", pose: Pose2D::new(2.0, 0.0, 0.0), current: None };
        let tasks = [("t1", Pose2D::new(1.9, 0.0, 0.0)), ("t2", Pose2D::new(0.0, 1.8, 0.0))];
        let mut out = rebalance_candidates(&[a, b], &tasks, 0.2);
        out.sort();
        assert_eq!(out, vec![("a", "t1"), ("b", "t2")]);
    }
}
