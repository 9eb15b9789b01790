use num_rational::Ratio;
use proptest::prelude::*;
use roomsim_core::assignment::{solve_assignment, solve_matrix, AssignmentError, AssignmentProblem, Cost};

/// Minimum total over every way of matching min(m, n) pairs.
fn brute_force<C: Cost>(m: &[Vec<C>]) -> C {
    fn go<C: Cost>(m: &[Vec<C>], row: usize, used: &mut [bool], skips: usize, acc: C, best: &mut Option<C>) {
        if row == m.len() {
            if best.is_none_or(|b| acc < b) {
                *best = Some(acc);
            }
            return;
        }
        if skips > 0 {
            go(m, row + 1, used, skips - 1, acc, best);
        }
        for j in 0..used.len() {
            if !used[j] {
                used[j] = true;
                go(m, row + 1, used, skips, acc + m[row][j], best);
                used[j] = false;
            }
        }
    }
    let cols = m[0].len();
    let mut best = None;
    go(m, 0, &mut vec![false; cols], m.len().saturating_sub(cols), C::zero(), &mut best);
    best.expect("non-empty")
}

fn total<C: Cost>(m: &[Vec<C>], matched: &[Option<usize>]) -> C {
    let mut acc = C::zero();
    for (i, j) in matched.iter().enumerate() {
        if let Some(j) = j {
            acc = acc + m[i][*j];
        }
    }
    acc
}

fn check_shape(rows: usize, cols: usize, matched: &[Option<usize>]) {
    assert_eq!(matched.len(), rows);
    let mut cols_seen: Vec<usize> = matched.iter().flatten().copied().collect();
    assert_eq!(cols_seen.len(), rows.min(cols));
    cols_seen.sort();
    cols_seen.dedup();
    assert_eq!(cols_seen.len(), rows.min(cols), "column used twice");
}

fn matrix(max: i64) -> impl Strategy<Value = Vec<Vec<i64>>> {
    (1usize..=6, 1usize..=6).prop_flat_map(move |(r, c)| prop::collection::vec(prop::collection::vec(0..=max, c), r))
}

proptest! {
    #[test]
    fn integer_costs_match_brute_force(m in matrix(50)) {
        let matched = solve_matrix(&m).unwrap();
        check_shape(m.len(), m[0].len(), &matched);
        prop_assert_eq!(total(&m, &matched), brute_force(&m));
    }

    #[test]
    fn rational_costs_match_brute_force(m in matrix(1000), den in 1i64..=7) {
        let q: Vec<Vec<Ratio<i64>>> = m.iter().map(|r| r.iter().map(|&x| Ratio::new(x, den + (x % 3))).collect()).collect();
        let matched = solve_matrix(&q).unwrap();
        check_shape(q.len(), q[0].len(), &matched);
        prop_assert_eq!(total(&q, &matched), brute_force(&q));
    }

    #[test]
    fn float_costs_match_brute_force(m in (1usize..=6, 1usize..=6).prop_flat_map(|(r, c)| prop::collection::vec(prop::collection::vec(0.0f64..20.0, c), r))) {
        let matched = solve_matrix(&m).unwrap();
        check_shape(m.len(), m[0].len(), &matched);
        prop_assert_eq!(total(&m, &matched), brute_force(&m));
    }
}

#[test]
fn single_precision_agrees() {
    let m: Vec<Vec<f32>> = vec![vec![4.0, 1.0, 3.0], vec![2.0, 0.0, 5.0], vec![3.0, 2.0, 2.0]];
    let matched = solve_matrix(&m).unwrap();
    assert_eq!(total(&m, &matched), 5.0);
}

#[test]
fn more_robots_than_tasks_leaves_robots_free() {
    let problem = AssignmentProblem {
        robots: vec!["a", "b", "c"],
        tasks: vec!["t"],
        matrix: vec![vec![3i64], vec![1], vec![2]],
    };
    let out = solve_assignment(&problem).unwrap();
    assert_eq!(out.pairs, vec![("b", "t")]);
    assert_eq!(out.total_cost, 1);
    assert_eq!(out.unassigned_robots, vec!["a", "c"]);
    assert!(out.unassigned_tasks.is_empty());
}

#[test]
fn bad_matrices_are_rejected() {
    assert_eq!(solve_matrix::<f64>(&[]), Err(AssignmentError::Empty));
    assert!(matches!(solve_matrix(&[vec![1.0], vec![1.0, 2.0]]), Err(AssignmentError::Ragged { row: 1, .. })));
    assert_eq!(solve_matrix(&[vec![-1.0]]), Err(AssignmentError::InvalidEntry { row: 0, col: 0 }));
    assert_eq!(solve_matrix(&[vec![f64::NAN]]), Err(AssignmentError::InvalidEntry { row: 0, col: 0 }));
}
