//! Three-view cardinality structures and their constraint systems.
//!
//! A structure over `p` coordinates consists of an overall sparsity budget,
//! a first view of pairwise-disjoint index groups, and a second view of
//! pairwise-disjoint index groups. Groups from different views may overlap,
//! groups within a view may not. The canonical example is a matrix of
//! variables where view one holds the rows and view two holds the columns.
//!
//! [`ConstraintSystem`] materializes the binary matrix `A` whose rows are
//! the all-ones overall row followed by the indicator rows of each group,
//! together with the budget vector `s`. A binary vector `x` is a feasible
//! support exactly when `A x <= s`.

use serde::{Deserialize, Serialize};

use crate::error::{Result, TvcsError};

/// An index group with a sparsity budget: at most `budget` of the listed
/// coordinates may be nonzero.
///
/// Indices must be strictly increasing and below the structure dimension.
/// A budget larger than the group size is allowed and simply inactive.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Group {
    pub indices: Vec<usize>,
    pub budget: usize,
}

impl Group {
    pub fn new(indices: Vec<usize>, budget: usize) -> Self {
        Group { indices, budget }
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }
}

/// A three-view cardinality structure: dimension `p`, an overall budget,
/// and two views of disjoint groups.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(from = "StructureJson", into = "StructureJson")]
pub struct TvcsStructure {
    dimension: usize,
    overall_budget: usize,
    view1: Vec<Group>,
    view2: Vec<Group>,
}

/// Wire format: `{"p":.., "overall":.., "view1":[{"indices":[..],"budget":..}], "view2":[..]}`.
/// `overall` may be omitted, in which case it defaults to `p` (inactive).
#[derive(Serialize, Deserialize)]
struct StructureJson {
    p: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    overall: Option<usize>,
    #[serde(default)]
    view1: Vec<Group>,
    #[serde(default)]
    view2: Vec<Group>,
}

impl From<StructureJson> for TvcsStructure {
    fn from(j: StructureJson) -> Self {
        TvcsStructure {
            dimension: j.p,
            overall_budget: j.overall.unwrap_or(j.p),
            view1: j.view1,
            view2: j.view2,
        }
    }
}

impl From<TvcsStructure> for StructureJson {
    fn from(s: TvcsStructure) -> Self {
        StructureJson {
            p: s.dimension,
            overall: Some(s.overall_budget),
            view1: s.view1,
            view2: s.view2,
        }
    }
}

/// A single validation violation. Violations are data, not failures;
/// [`validate_structure`] returns all of them.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum StructureViolation {
    ZeroDimension,
    EmptyGroup { view: u8, group: usize },
    NotStrictlyIncreasing { view: u8, group: usize },
    IndexOutOfRange { view: u8, group: usize, index: usize },
    Overlap { view: u8, group_a: usize, group_b: usize, index: usize },
}

impl std::fmt::Display for StructureViolation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            StructureViolation::ZeroDimension => write!(f, "dimension p must be positive"),
            StructureViolation::EmptyGroup { view, group } => {
                write!(f, "view{view} group {group} is empty")
            }
            StructureViolation::NotStrictlyIncreasing { view, group } => {
                write!(f, "view{view} group {group} indices are not strictly increasing")
            }
            StructureViolation::IndexOutOfRange { view, group, index } => {
                write!(f, "view{view} group {group}: index {index} out of range")
            }
            StructureViolation::Overlap { view, group_a, group_b, index } => {
                write!(
                    f,
                    "view{view} groups {group_a} and {group_b} overlap at index {index}"
                )
            }
        }
    }
}

impl TvcsStructure {
    pub fn new(
        dimension: usize,
        overall_budget: usize,
        view1: Vec<Group>,
        view2: Vec<Group>,
    ) -> Self {
        TvcsStructure { dimension, overall_budget, view1, view2 }
    }

    /// Structure with only the overall budget active.
    pub fn overall_only(dimension: usize, overall_budget: usize) -> Self {
        TvcsStructure::new(dimension, overall_budget, Vec::new(), Vec::new())
    }

    /// Builds the matrix-view structure over `n_rows * n_cols` coordinates
    /// in row-major order: view one holds the rows, view two the columns.
    pub fn matrix_view(
        n_rows: usize,
        n_cols: usize,
        row_budgets: &[usize],
        col_budgets: &[usize],
        overall: usize,
    ) -> Result<Self> {
        if row_budgets.len() != n_rows {
            return Err(TvcsError::DimensionMismatch { expected: n_rows, got: row_budgets.len() });
        }
        if col_budgets.len() != n_cols {
            return Err(TvcsError::DimensionMismatch { expected: n_cols, got: col_budgets.len() });
        }
        let view1 = (0..n_rows)
            .map(|r| Group::new((0..n_cols).map(|c| r * n_cols + c).collect(), row_budgets[r]))
            .collect();
        let view2 = (0..n_cols)
            .map(|c| Group::new((0..n_rows).map(|r| r * n_cols + c).collect(), col_budgets[c]))
            .collect();
        Ok(TvcsStructure::new(n_rows * n_cols, overall, view1, view2))
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn overall_budget(&self) -> usize {
        self.overall_budget
    }

    pub fn view1(&self) -> &[Group] {
        &self.view1
    }

    pub fn view2(&self) -> &[Group] {
        &self.view2
    }

    /// Total number of groups including the implicit overall group.
    pub fn group_count(&self) -> usize {
        1 + self.view1.len() + self.view2.len()
    }

    pub fn validate(&self) -> Vec<StructureViolation> {
        validate_structure(self)
    }

    pub fn is_valid(&self) -> bool {
        self.validate().is_empty()
    }

    /// Same structure with every budget doubled, capped so it stays
    /// meaningful: group budgets at the group size, the overall budget
    /// at `p`. Used by matching-pursuit support selection.
    pub fn doubled(&self) -> Self {
        let double = |groups: &[Group]| {
            groups
                .iter()
                .map(|g| Group::new(g.indices.clone(), (2 * g.budget).min(g.len())))
                .collect()
        };
        TvcsStructure {
            dimension: self.dimension,
            overall_budget: (2 * self.overall_budget).min(self.dimension),
            view1: double(&self.view1),
            view2: double(&self.view2),
        }
    }

    /// Degenerate copy keeping only view one (overall budget relaxed to `p`).
    pub fn view1_only(&self) -> Self {
        TvcsStructure::new(self.dimension, self.dimension, self.view1.clone(), Vec::new())
    }

    /// Degenerate copy keeping only view two (overall budget relaxed to `p`).
    pub fn view2_only(&self) -> Self {
        TvcsStructure::new(self.dimension, self.dimension, Vec::new(), self.view2.clone())
    }

    /// Degenerate copy keeping only the overall budget.
    pub fn overall_only_like(&self) -> Self {
        TvcsStructure::overall_only(self.dimension, self.overall_budget)
    }
}

/// Checks all structure invariants and returns every violation found.
pub fn validate_structure(structure: &TvcsStructure) -> Vec<StructureViolation> {
    let mut violations = Vec::new();
    let p = structure.dimension;
    if p == 0 {
        violations.push(StructureViolation::ZeroDimension);
    }
    for (view, groups) in [(1u8, &structure.view1), (2u8, &structure.view2)] {
        // owner[j] = first group in this view containing j
        let mut owner: Vec<Option<usize>> = vec![None; p];
        for (gi, group) in groups.iter().enumerate() {
            if group.indices.is_empty() {
                violations.push(StructureViolation::EmptyGroup { view, group: gi });
                continue;
            }
            let mut increasing = true;
            for w in group.indices.windows(2) {
                if w[1] <= w[0] {
                    increasing = false;
                }
            }
            if !increasing {
                violations.push(StructureViolation::NotStrictlyIncreasing { view, group: gi });
            }
            for &idx in &group.indices {
                if idx >= p {
                    violations.push(StructureViolation::IndexOutOfRange {
                        view,
                        group: gi,
                        index: idx,
                    });
                    continue;
                }
                match owner[idx] {
                    None => owner[idx] = Some(gi),
                    Some(prev) if prev != gi => {
                        violations.push(StructureViolation::Overlap {
                            view,
                            group_a: prev,
                            group_b: gi,
                            index: idx,
                        });
                    }
                    Some(_) => {} // duplicate inside one group; caught as non-increasing
                }
            }
        }
    }
    violations
}

/// Sparse form of the constraint matrix `A` and bound vector `s`.
///
/// Row 0 is the all-ones overall row; rows `1..=|view1|` are the view-one
/// indicator rows in input order, followed by the view-two rows. Every
/// column has at most three nonzeros, which keeps matrix-vector products
/// linear in `p + |G|`.
#[derive(Debug, Clone)]
pub struct ConstraintSystem {
    dimension: usize,
    bounds: Vec<usize>,
    /// Indicator rows 1.. (row 0 is implicit).
    group_rows: Vec<Vec<usize>>,
    /// Per coordinate: the view-one row containing it, if any.
    col_view1: Vec<Option<u32>>,
    /// Per coordinate: the view-two row containing it, if any.
    col_view2: Vec<Option<u32>>,
}

/// Builds the constraint system of a structure, rejecting invalid input
/// with the violations by name.
pub fn build_constraint_system(structure: &TvcsStructure) -> Result<ConstraintSystem> {
    let violations = structure.validate();
    if !violations.is_empty() {
        return Err(TvcsError::InvalidStructure(
            violations.iter().map(|v| v.to_string()).collect(),
        ));
    }
    let p = structure.dimension;
    let mut bounds = Vec::with_capacity(structure.group_count());
    bounds.push(structure.overall_budget);
    let mut group_rows = Vec::with_capacity(structure.group_count() - 1);
    let mut col_view1 = vec![None; p];
    let mut col_view2 = vec![None; p];
    for group in &structure.view1 {
        let row = group_rows.len() as u32 + 1;
        for &j in &group.indices {
            col_view1[j] = Some(row);
        }
        bounds.push(group.budget);
        group_rows.push(group.indices.clone());
    }
    for group in &structure.view2 {
        let row = group_rows.len() as u32 + 1;
        for &j in &group.indices {
            col_view2[j] = Some(row);
        }
        bounds.push(group.budget);
        group_rows.push(group.indices.clone());
    }
    Ok(ConstraintSystem { dimension: p, bounds, group_rows, col_view1, col_view2 })
}

impl ConstraintSystem {
    pub fn dimension(&self) -> usize {
        self.dimension
    }

    /// Number of rows of `A`, i.e. `|G|`.
    pub fn num_rows(&self) -> usize {
        self.bounds.len()
    }

    /// Bound vector `s` (row 0 is the overall budget).
    pub fn bounds(&self) -> &[usize] {
        &self.bounds
    }

    /// `out = A x`. `out` must have `num_rows()` elements.
    pub fn multiply(&self, x: &[f64], out: &mut [f64]) {
        debug_assert_eq!(x.len(), self.dimension);
        debug_assert_eq!(out.len(), self.num_rows());
        out[0] = x.iter().sum();
        for (r, row) in self.group_rows.iter().enumerate() {
            out[r + 1] = row.iter().map(|&j| x[j]).sum();
        }
    }

    /// `out = A^T u`. `u` has `num_rows()` elements, `out` has `dimension()`.
    pub fn multiply_transpose(&self, u: &[f64], out: &mut [f64]) {
        debug_assert_eq!(u.len(), self.num_rows());
        debug_assert_eq!(out.len(), self.dimension);
        for j in 0..self.dimension {
            let mut acc = u[0];
            if let Some(r) = self.col_view1[j] {
                acc += u[r as usize];
            }
            if let Some(r) = self.col_view2[j] {
                acc += u[r as usize];
            }
            out[j] = acc;
        }
    }

    /// Number of nonzeros in column `j` of `A` (between 1 and 3).
    pub fn column_nnz(&self, j: usize) -> usize {
        1 + self.col_view1[j].is_some() as usize + self.col_view2[j].is_some() as usize
    }

    /// Rows of `A` containing coordinate `j`: `(view1 row, view2 row)`.
    pub fn column_rows(&self, j: usize) -> (Option<usize>, Option<usize>) {
        (self.col_view1[j].map(|r| r as usize), self.col_view2[j].map(|r| r as usize))
    }

    /// Dense copy of `A` for small-instance checks.
    pub fn dense_matrix(&self) -> Vec<Vec<i64>> {
        let mut rows = vec![vec![0i64; self.dimension]; self.num_rows()];
        rows[0].iter_mut().for_each(|e| *e = 1);
        for (r, row) in self.group_rows.iter().enumerate() {
            for &j in row {
                rows[r + 1][j] = 1;
            }
        }
        rows
    }
}

/// True iff the binary vector `x` is a feasible support: `A x <= s`.
pub fn is_feasible_support(system: &ConstraintSystem, x: &[u8]) -> Result<bool> {
    if x.len() != system.dimension {
        return Err(TvcsError::DimensionMismatch { expected: system.dimension, got: x.len() });
    }
    let mut total = 0usize;
    for &xi in x {
        debug_assert!(xi <= 1);
        total += xi as usize;
    }
    if total > system.bounds[0] {
        return Ok(false);
    }
    for (r, row) in system.group_rows.iter().enumerate() {
        let count: usize = row.iter().map(|&j| x[j] as usize).sum();
        if count > system.bounds[r + 1] {
            return Ok(false);
        }
    }
    Ok(true)
}

/// Exhaustively checks total unimodularity: every square submatrix of `m`
/// up to `size_cap` must have determinant in `{-1, 0, 1}`, decided with
/// exact integer arithmetic. Intended for small test instances only; the
/// submatrix count grows combinatorially.
pub fn check_totally_unimodular(m: &[Vec<i64>], size_cap: usize) -> Result<bool> {
    let n_rows = m.len();
    if n_rows == 0 {
        return Ok(true);
    }
    let n_cols = m[0].len();
    for row in m {
        if row.len() != n_cols {
            return Err(TvcsError::DimensionMismatch { expected: n_cols, got: row.len() });
        }
        for &e in row {
            if !(-1..=1).contains(&e) {
                return Err(TvcsError::InvalidValue(format!(
                    "matrix entry {e} outside {{-1, 0, 1}}"
                )));
            }
        }
    }
    let max_size = size_cap.min(n_rows).min(n_cols);
    // Size-1 submatrices are the entries themselves, already checked.
    for size in 2..=max_size {
        let mut row_sel = CombinationIter::new(n_rows, size);
        while let Some(rows) = row_sel.next() {
            let mut col_sel = CombinationIter::new(n_cols, size);
            while let Some(cols) = col_sel.next() {
                let det = submatrix_determinant(m, rows, cols);
                if det.abs() > 1 {
                    return Ok(false);
                }
            }
        }
    }
    Ok(true)
}

/// Exact determinant of the selected submatrix via fraction-free
/// Bareiss elimination. Entries in {-1,0,1} keep all intermediates small.
fn submatrix_determinant(m: &[Vec<i64>], rows: &[usize], cols: &[usize]) -> i64 {
    let n = rows.len();
    let mut a = vec![0i64; n * n];
    for (i, &r) in rows.iter().enumerate() {
        for (j, &c) in cols.iter().enumerate() {
            a[i * n + j] = m[r][c];
        }
    }
    let mut sign = 1i64;
    let mut prev = 1i64;
    for k in 0..n - 1 {
        if a[k * n + k] == 0 {
            // pivot swap
            let mut swap = None;
            for i in k + 1..n {
                if a[i * n + k] != 0 {
                    swap = Some(i);
                    break;
                }
            }
            match swap {
                Some(i) => {
                    for j in 0..n {
                        a.swap(k * n + j, i * n + j);
                    }
                    sign = -sign;
                }
                None => return 0,
            }
        }
        for i in k + 1..n {
            for j in k + 1..n {
                let num = a[i * n + j] * a[k * n + k] - a[i * n + k] * a[k * n + j];
                a[i * n + j] = num / prev;
            }
            a[i * n + k] = 0;
        }
        prev = a[k * n + k];
    }
    sign * a[(n - 1) * n + (n - 1)]
}

/// Lexicographic k-combinations of `0..n` without allocation per step.
struct CombinationIter {
    n: usize,
    k: usize,
    state: Vec<usize>,
    started: bool,
    done: bool,
}

impl CombinationIter {
    fn new(n: usize, k: usize) -> Self {
        CombinationIter { n, k, state: (0..k).collect(), started: false, done: k > n }
    }

    fn next(&mut self) -> Option<&[usize]> {
        if self.done {
            return None;
        }
        if !self.started {
            self.started = true;
            return Some(&self.state);
        }
        let k = self.k;
        let mut i = k;
        loop {
            if i == 0 {
                self.done = true;
                return None;
            }
            i -= 1;
            if self.state[i] < self.n - (k - i) {
                self.state[i] += 1;
                for j in i + 1..k {
                    self.state[j] = self.state[j - 1] + 1;
                }
                return Some(&self.state);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn p4_structure() -> TvcsStructure {
        TvcsStructure::new(
            4,
            2,
            vec![Group::new(vec![0, 1], 1), Group::new(vec![2, 3], 1)],
            Vec::new(),
        )
    }

    #[test]
    fn disjoint_views_validate() {
        assert!(p4_structure().is_valid());
    }

    #[test]
    fn overlap_within_view_is_reported() {
        let s = TvcsStructure::new(
            4,
            4,
            vec![Group::new(vec![0, 1], 1), Group::new(vec![1, 2], 1)],
            Vec::new(),
        );
        let violations = s.validate();
        assert_eq!(
            violations,
            vec![StructureViolation::Overlap { view: 1, group_a: 0, group_b: 1, index: 1 }]
        );
        assert_eq!(violations[0].to_string(), "view1 groups 0 and 1 overlap at index 1");
    }

    #[test]
    fn out_of_range_index_is_reported() {
        let s = TvcsStructure::new(4, 4, vec![Group::new(vec![0, 5], 1)], Vec::new());
        let violations = s.validate();
        assert!(violations
            .contains(&StructureViolation::IndexOutOfRange { view: 1, group: 0, index: 5 }));
    }

    #[test]
    fn cross_view_overlap_is_allowed() {
        let s = TvcsStructure::new(
            4,
            2,
            vec![Group::new(vec![0, 1], 1)],
            vec![Group::new(vec![1, 2], 1)],
        );
        assert!(s.is_valid());
    }

    #[test]
    fn constraint_system_rows_in_input_order() {
        let system = build_constraint_system(&p4_structure()).unwrap();
        assert_eq!(system.dense_matrix(), vec![
            vec![1, 1, 1, 1],
            vec![1, 1, 0, 0],
            vec![0, 0, 1, 1],
        ]);
        assert_eq!(system.bounds(), &[2, 1, 1]);
    }

    #[test]
    fn matrix_view_columns_have_three_nonzeros() {
        let s = TvcsStructure::matrix_view(3, 3, &[1; 3], &[1; 3], 2).unwrap();
        let system = build_constraint_system(&s).unwrap();
        assert_eq!(system.num_rows(), 7);
        for j in 0..9 {
            assert_eq!(system.column_nnz(j), 3);
        }
        let dense = system.dense_matrix();
        for j in 0..9 {
            let ones: i64 = dense.iter().map(|row| row[j]).sum();
            assert_eq!(ones, 3);
        }
    }

    #[test]
    fn empty_views_give_single_row() {
        let s = TvcsStructure::overall_only(5, 3);
        let system = build_constraint_system(&s).unwrap();
        assert_eq!(system.dense_matrix(), vec![vec![1; 5]]);
        assert_eq!(system.bounds(), &[3]);
    }

    #[test]
    fn invalid_structure_is_rejected_with_names() {
        let s = TvcsStructure::new(
            4,
            4,
            vec![Group::new(vec![0, 1], 1), Group::new(vec![1, 2], 1)],
            Vec::new(),
        );
        let err = build_constraint_system(&s).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("groups 0 and 1 overlap at index 1"), "message was: {msg}");
    }

    #[test]
    fn feasibility_matches_hand_examples() {
        let system = build_constraint_system(&p4_structure()).unwrap();
        assert!(is_feasible_support(&system, &[1, 0, 0, 1]).unwrap());
        assert!(!is_feasible_support(&system, &[1, 1, 0, 0]).unwrap());
        assert!(is_feasible_support(&system, &[0, 0, 0, 0]).unwrap());
        assert!(is_feasible_support(&system, &[1, 0, 0]).is_err());
    }

    #[test]
    fn zero_support_always_feasible_and_monotone() {
        let s = TvcsStructure::matrix_view(3, 3, &[1, 2, 1], &[2, 1, 1], 3).unwrap();
        let system = build_constraint_system(&s).unwrap();
        assert!(is_feasible_support(&system, &[0; 9]).unwrap());
        // Dropping entries from a feasible support keeps it feasible.
        let x = [1, 0, 0, 0, 0, 1, 0, 1, 0];
        assert!(is_feasible_support(&system, &x).unwrap());
        for drop in 0..9 {
            if x[drop] == 1 {
                let mut smaller = x;
                smaller[drop] = 0;
                assert!(is_feasible_support(&system, &smaller).unwrap());
            }
        }
    }

    #[test]
    fn tu_check_accepts_structure_matrix() {
        let system = build_constraint_system(&p4_structure()).unwrap();
        let dense = system.dense_matrix();
        assert!(check_totally_unimodular(&dense, 3).unwrap());
    }

    #[test]
    fn tu_check_rejects_known_counterexample() {
        // Circulant 3x3 with full determinant 2.
        let m = vec![vec![1, 1, 0], vec![0, 1, 1], vec![1, 0, 1]];
        assert_eq!(submatrix_determinant(&m, &[0, 1, 2], &[0, 1, 2]), 2);
        assert!(!check_totally_unimodular(&m, 3).unwrap());
    }

    #[test]
    fn tu_check_accepts_identity() {
        let m = vec![vec![1, 0, 0], vec![0, 1, 0], vec![0, 0, 1]];
        assert!(check_totally_unimodular(&m, 3).unwrap());
    }

    #[test]
    fn tu_check_rejects_bad_entries() {
        let m = vec![vec![2, 0], vec![0, 1]];
        assert!(check_totally_unimodular(&m, 2).is_err());
    }

    #[test]
    fn determinant_signs_and_swaps() {
        let m = vec![vec![0, 1], vec![1, 0]];
        assert_eq!(submatrix_determinant(&m, &[0, 1], &[0, 1]), -1);
        let m = vec![vec![1, 1], vec![1, 1]];
        assert_eq!(submatrix_determinant(&m, &[0, 1], &[0, 1]), 0);
    }

    #[test]
    fn structure_json_round_trip_and_default_overall() {
        let s = p4_structure();
        let text = serde_json::to_string(&s).unwrap();
        let back: TvcsStructure = serde_json::from_str(&text).unwrap();
        assert_eq!(s, back);

        let parsed: TvcsStructure = serde_json::from_str(
            r#"{"p": 6, "view1": [{"indices": [0, 1], "budget": 1}]}"#,
        )
        .unwrap();
        assert_eq!(parsed.overall_budget(), 6);
        assert_eq!(parsed.view2().len(), 0);
    }

    #[test]
    fn doubled_budgets_are_capped() {
        let s = TvcsStructure::new(
            4,
            3,
            vec![Group::new(vec![0, 1], 1), Group::new(vec![2, 3], 2)],
            Vec::new(),
        );
        let d = s.doubled();
        assert_eq!(d.overall_budget(), 4); // 6 capped at p
        assert_eq!(d.view1()[0].budget, 2);
        assert_eq!(d.view1()[1].budget, 2); // 4 capped at group size
    }

    #[test]
    fn combination_iterator_counts() {
        let mut it = CombinationIter::new(5, 3);
        let mut count = 0;
        while it.next().is_some() {
            count += 1;
        }
        assert_eq!(count, 10);
    }
}
