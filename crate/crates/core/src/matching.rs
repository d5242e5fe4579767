//! Maximum-weight perfect matching on square, masked weight matrices.
//!
//! [`hungarian_max_weight`] runs the O(V³) shortest-augmenting-path form of the
//! Hungarian method on a cost transform. Disallowed cells get a finite penalty
//! larger than any allowed assignment can cost, so an optimum touching one
//! means no allowed perfect matching exists. Among optimal permutations the
//! lexicographically smallest is returned, which is also what
//! [`brute_force_matching`] yields.

use crate::error::{Error, Result};

/// Largest size accepted by [`brute_force_matching`].
pub const BRUTE_FORCE_LIMIT: usize = 8;

#[derive(Debug, Clone, PartialEq)]
pub struct WeightMatrix {
    size: usize,
    weights: Vec<f64>,
    allowed: Vec<bool>,
}

impl WeightMatrix {
    /// Weights of disallowed cells are forced to 0.
    pub fn new(weights: Vec<Vec<f64>>, allowed: Vec<Vec<bool>>) -> Result<Self> {
        let size = weights.len();
        if allowed.len() != size
            || weights.iter().any(|r| r.len() != size)
            || allowed.iter().any(|r| r.len() != size)
        {
            return Err(Error::invalid(
                "weight matrix and mask must be square and of equal size",
            ));
        }
        let mut flat_w = Vec::with_capacity(size * size);
        let mut flat_a = Vec::with_capacity(size * size);
        for (wr, ar) in weights.iter().zip(&allowed) {
            for (&w, &a) in wr.iter().zip(ar) {
                if !w.is_finite() || w < 0.0 {
                    return Err(Error::invalid(format!(
                        "weights must be finite and non-negative, got {w}"
                    )));
                }
                flat_w.push(if a { w } else { 0.0 });
                flat_a.push(a);
            }
        }
        Ok(WeightMatrix {
            size,
            weights: flat_w,
            allowed: flat_a,
        })
    }

    /// All cells allowed.
    pub fn full(weights: Vec<Vec<f64>>) -> Result<Self> {
        let allowed = weights.iter().map(|r| vec![true; r.len()]).collect();
        Self::new(weights, allowed)
    }

    pub fn size(&self) -> usize {
        self.size
    }

    pub fn weight(&self, row: usize, col: usize) -> f64 {
        self.weights[row * self.size + col]
    }

    pub fn is_allowed(&self, row: usize, col: usize) -> bool {
        self.allowed[row * self.size + col]
    }

    /// Sum of `weight(i, perm[i])` in row order; `None` if a cell is disallowed.
    pub fn objective(&self, perm: &[usize]) -> Option<f64> {
        let mut total = 0.0;
        for (i, &j) in perm.iter().enumerate() {
            if !self.is_allowed(i, j) {
                return None;
            }
            total += self.weight(i, j);
        }
        Some(total)
    }

    fn max_weight(&self) -> f64 {
        self.weights.iter().copied().fold(0.0, f64::max)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Assignment {
    /// `permutation[row] = column`.
    pub permutation: Vec<usize>,
    pub objective: f64,
}

pub fn hungarian_max_weight(w: &WeightMatrix) -> Option<Assignment> {
    let n = w.size();
    if n == 0 {
        return Some(Assignment {
            permutation: Vec::new(),
            objective: 0.0,
        });
    }
    let wmax = w.max_weight();
    let penalty = (n as f64 + 1.0) * (wmax + 1.0);
    let cost = |i: usize, j: usize| {
        if w.is_allowed(i, j) {
            wmax - w.weight(i, j)
        } else {
            penalty
        }
    };

    // 1-based potentials; column 0 is the virtual root of each augmentation.
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; n + 1];
    let mut owner = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    for row in 1..=n {
        owner[0] = row;
        let mut col0 = 0;
        let mut min_to = vec![f64::INFINITY; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[col0] = true;
            let i0 = owner[col0];
            let mut delta = f64::INFINITY;
            let mut col1 = 0;
            for j in 1..=n {
                if used[j] {
                    continue;
                }
                let reduced = cost(i0 - 1, j - 1) - u[i0] - v[j];
                if reduced < min_to[j] {
                    min_to[j] = reduced;
                    way[j] = col0;
                }
                if min_to[j] < delta {
                    delta = min_to[j];
                    col1 = j;
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[owner[j]] += delta;
                    v[j] -= delta;
                } else {
                    min_to[j] -= delta;
                }
            }
            col0 = col1;
            if owner[col0] == 0 {
                break;
            }
        }
        loop {
            let col1 = way[col0];
            owner[col0] = owner[col1];
            col0 = col1;
            if col0 == 0 {
                break;
            }
        }
    }

    let mut perm = vec![0usize; n];
    for j in 1..=n {
        perm[owner[j] - 1] = j - 1;
    }
    if (0..n).any(|i| !w.is_allowed(i, perm[i])) {
        return None;
    }

    // Optimal permutations are exactly the perfect matchings on tight cells.
    let tol = 1e-9 * (1.0 + wmax) * n as f64;
    let tight: Vec<Vec<bool>> = (0..n)
        .map(|i| {
            (0..n)
                .map(|j| w.is_allowed(i, j) && cost(i, j) - u[i + 1] - v[j + 1] <= tol)
                .collect()
        })
        .collect();
    lexicographic_min_matching(&tight, &mut perm);
    let objective = w.objective(&perm)?;
    Some(Assignment {
        permutation: perm,
        objective,
    })
}

/// Rewrites the perfect matching `perm` on the bipartite graph `edges` into
/// the lexicographically smallest perfect matching of that graph.
fn lexicographic_min_matching(edges: &[Vec<bool>], perm: &mut [usize]) {
    let n = perm.len();
    let mut row_of = vec![0usize; n];
    for (i, &j) in perm.iter().enumerate() {
        row_of[j] = i;
    }
    let mut col_fixed = vec![false; n];
    for i in 0..n {
        for c in 0..n {
            if col_fixed[c] || !edges[i][c] {
                continue;
            }
            if perm[i] == c {
                break;
            }
            // Force (i, c): row r loses c and must reach the column i frees.
            let r = row_of[c];
            let freed = perm[i];
            if let Some(path) = alternating_path(edges, perm, &row_of, &col_fixed, i, c, r, freed) {
                perm[i] = c;
                row_of[c] = i;
                for (row, col) in path {
                    perm[row] = col;
                    row_of[col] = row;
                }
                break;
            }
        }
        col_fixed[perm[i]] = true;
    }
}

/// Alternating path from row `start` to column `goal` avoiding fixed columns,
/// row `skip_row` and column `skip_col`. Returns the new (row, column) pairs.
#[allow(clippy::too_many_arguments)]
fn alternating_path(
    edges: &[Vec<bool>],
    perm: &[usize],
    row_of: &[usize],
    col_fixed: &[bool],
    skip_row: usize,
    skip_col: usize,
    start: usize,
    goal: usize,
) -> Option<Vec<(usize, usize)>> {
    let n = perm.len();
    let mut came_from = vec![usize::MAX; n]; // column -> row that reached it
    let mut seen_col = vec![false; n];
    let mut queue = std::collections::VecDeque::from([start]);
    while let Some(row) = queue.pop_front() {
        for col in 0..n {
            if seen_col[col]
                || col_fixed[col]
                || col == skip_col
                || !edges[row][col]
                || perm[row] == col
            {
                continue;
            }
            seen_col[col] = true;
            came_from[col] = row;
            if col == goal {
                let mut path = Vec::new();
                let mut c = goal;
                loop {
                    let r = came_from[c];
                    path.push((r, c));
                    if r == start {
                        return Some(path);
                    }
                    c = perm[r];
                }
            }
            let next = row_of[col];
            if next != skip_row {
                queue.push_back(next);
            }
        }
    }
    None
}

/// Exhaustive search over all permutations, in lexicographic order, keeping
/// the first one with the strictly largest objective.
pub fn brute_force_matching(w: &WeightMatrix) -> Result<Option<Assignment>> {
    let n = w.size();
    if n > BRUTE_FORCE_LIMIT {
        return Err(Error::invalid(format!(
            "brute force matching refused for size {n} > {BRUTE_FORCE_LIMIT}"
        )));
    }
    let mut perm: Vec<usize> = (0..n).collect();
    let mut best: Option<Assignment> = None;
    loop {
        if let Some(obj) = w.objective(&perm) {
            if best.as_ref().is_none_or(|b| obj > b.objective) {
                best = Some(Assignment {
                    permutation: perm.clone(),
                    objective: obj,
                });
            }
        }
        if !next_permutation(&mut perm) {
            break;
        }
    }
    Ok(best)
}

fn next_permutation(p: &mut [usize]) -> bool {
    let n = p.len();
    if n < 2 {
        return false;
    }
    let mut i = n - 1;
    while i > 0 && p[i - 1] >= p[i] {
        i -= 1;
    }
    if i == 0 {
        return false;
    }
    let mut j = n - 1;
    while p[j] <= p[i - 1] {
        j -= 1;
    }
    p.swap(i - 1, j);
    p[i..].reverse();
    true
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::Rng;

    use crate::rng::sim_rng;

    fn random_instance(rng: &mut impl Rng, n: usize, integer: bool, density: f64) -> WeightMatrix {
        let weights = (0..n)
            .map(|_| {
                (0..n)
                    .map(|_| {
                        if integer {
                            rng.random_range(0..4) as f64
                        } else {
                            rng.random::<f64>() * 10.0
                        }
                    })
                    .collect()
            })
            .collect();
        let allowed = (0..n)
            .map(|_| (0..n).map(|_| rng.random::<f64>() < density).collect())
            .collect();
        WeightMatrix::new(weights, allowed).unwrap()
    }

    #[test]
    fn small_cases() {
        let one = WeightMatrix::full(vec![vec![5.0]]).unwrap();
        let a = hungarian_max_weight(&one).unwrap();
        assert_eq!(a.permutation, vec![0]);
        assert_eq!(a.objective, 5.0);

        let diag = WeightMatrix::full(vec![vec![2.0, 1.0], vec![1.0, 2.0]]).unwrap();
        let a = hungarian_max_weight(&diag).unwrap();
        assert_eq!(a.permutation, vec![0, 1]);
        assert_eq!(a.objective, 4.0);
    }

    #[test]
    fn masks() {
        let none = WeightMatrix::new(vec![vec![1.0; 2]; 2], vec![vec![false; 2]; 2]).unwrap();
        assert!(hungarian_max_weight(&none).is_none());
        assert!(brute_force_matching(&none).unwrap().is_none());

        let ident = WeightMatrix::new(
            vec![
                vec![1.0, 9.0, 9.0],
                vec![9.0, 1.0, 9.0],
                vec![9.0, 9.0, 1.0],
            ],
            vec![
                vec![true, false, false],
                vec![false, true, false],
                vec![false, false, true],
            ],
        )
        .unwrap();
        assert_eq!(
            brute_force_matching(&ident).unwrap().unwrap().permutation,
            vec![0, 1, 2]
        );
        assert_eq!(
            hungarian_max_weight(&ident).unwrap().permutation,
            vec![0, 1, 2]
        );

        // forced anti-diagonal beats heavier diagonal weights
        let forced = WeightMatrix::new(
            vec![vec![0.0, 1.0], vec![1.0, 0.0]],
            vec![vec![false, true], vec![true, false]],
        )
        .unwrap();
        assert_eq!(
            hungarian_max_weight(&forced).unwrap().permutation,
            vec![1, 0]
        );
    }

    #[test]
    fn brute_force_guard() {
        let big = WeightMatrix::full(vec![vec![1.0; 9]; 9]).unwrap();
        assert!(brute_force_matching(&big).is_err());
    }

    #[test]
    fn ties_resolve_lexicographically() {
        let flat = WeightMatrix::full(vec![vec![1.0; 4]; 4]).unwrap();
        assert_eq!(
            hungarian_max_weight(&flat).unwrap().permutation,
            vec![0, 1, 2, 3]
        );
        let mut rng = sim_rng(99);
        for _ in 0..500 {
            let n = rng.random_range(1..=6);
            let w = random_instance(&mut rng, n, true, 0.7);
            let h = hungarian_max_weight(&w);
            let b = brute_force_matching(&w).unwrap();
            assert_eq!(h, b, "integer instance {w:?}");
        }
    }

    #[test]
    fn agrees_with_enumeration_on_six_by_six() {
        let mut rng = sim_rng(6);
        for _ in 0..100 {
            let w = random_instance(&mut rng, 6, false, 0.6);
            let h = hungarian_max_weight(&w).map(|a| a.objective);
            let b = brute_force_matching(&w).unwrap().map(|a| a.objective);
            assert_eq!(h, b);
        }
    }

    proptest! {
        #[test]
        fn permuting_rows_and_columns_keeps_objective(seed in any::<u64>(), n in 1usize..7) {
            let mut rng = sim_rng(seed);
            let w = random_instance(&mut rng, n, false, 0.8);
            let mut rp: Vec<usize> = (0..n).collect();
            let mut cp: Vec<usize> = (0..n).collect();
            for k in (1..n).rev() {
                rp.swap(k, rng.random_range(0..=k));
                cp.swap(k, rng.random_range(0..=k));
            }
            let weights = (0..n).map(|i| (0..n).map(|j| w.weight(rp[i], cp[j])).collect()).collect();
            let allowed = (0..n).map(|i| (0..n).map(|j| w.is_allowed(rp[i], cp[j])).collect()).collect();
            let shuffled = WeightMatrix::new(weights, allowed).unwrap();
            match (hungarian_max_weight(&w), hungarian_max_weight(&shuffled)) {
                (None, None) => {}
                (Some(a), Some(b)) => prop_assert!((a.objective - b.objective).abs() < 1e-9),
                other => prop_assert!(false, "feasibility changed: {other:?}"),
            }
        }

        #[test]
        fn row_shift_moves_objective_by_constant(seed in any::<u64>(), n in 1usize..7, shift in 0.0f64..5.0) {
            let mut rng = sim_rng(seed);
            let w = random_instance(&mut rng, n, false, 1.0);
            let row = rng.random_range(0..n);
            let weights = (0..n)
                .map(|i| (0..n).map(|j| w.weight(i, j) + if i == row { shift } else { 0.0 }).collect())
                .collect();
            let shifted = WeightMatrix::full(weights).unwrap();
            let a = hungarian_max_weight(&w).unwrap();
            let b = hungarian_max_weight(&shifted).unwrap();
            prop_assert!((b.objective - a.objective - shift).abs() < 1e-9);
            prop_assert_eq!(a.permutation, b.permutation);
        }
    }
}
