//! Finite-dimensional matrix structure of the synchronization problem.
//!
//! For an n-component system coupled by `A` and controlled through `B`, exact
//! synchronization is a statement about the pairwise differences of the
//! components, encoded by the bidiagonal difference matrix `D` (row `i` is
//! `e_i − e_{i+1}`). Two mutually exclusive structural hypotheses make the
//! problem solvable:
//!
//! * **H1** — all row sums of `A` are equal. Then a unique reduced matrix `Ã`
//!   with `ÃD = DA` exists, the differences `z = Dy` satisfy an autonomous
//!   (n−1)-component system driven by `DB`, and synchronizability is the
//!   Kalman rank condition `rank(DB, ÃDB, …, Ã^{n−2}DB) = n−1`.
//! * **H2** — the row sums differ. No reduction exists and the only route is
//!   full controllability: `rank(B, AB, …, A^{n−1}B) = n`.
//!
//! [`classify`] runs this dichotomy (row-sum test first, then the rank test of
//! the selected branch) and returns the complete [`SyncStructure`] that the
//! solvers downstream operate on.

use nalgebra::{DMatrix, DVector};

use crate::error::{CoreError, Result};

/// Relative tolerance for the equal-row-sums test.
pub const ROW_SUM_REL_TOL: f64 = 1e-10;
/// Relative singular-value cutoff used for numerical rank.
pub const RANK_REL_TOL: f64 = 1e-10;
/// Absolute floor below which every singular value counts as zero.
pub const RANK_ABS_FLOOR: f64 = 1e-14;
/// Residual bound for `‖DA − ÃD‖_max`, relative to `1 + ‖A‖_max`.
pub const REDUCED_RESIDUAL_TOL: f64 = 1e-12;
/// A singular value within this factor of the rank cutoff (either side) marks
/// the rank decision as marginal.
const MARGINAL_FACTOR: f64 = 10.0;

/// The coupling matrices `(A, B)` of an n-component system with m control
/// inputs.
#[derive(Debug, Clone, PartialEq)]
pub struct CouplingPair {
    /// n×n coupling matrix acting on the state components.
    pub a: DMatrix<f64>,
    /// n×m control distribution matrix.
    pub b: DMatrix<f64>,
}

impl CouplingPair {
    /// Validate shapes (`A` square with n ≥ 2, `B` with matching row count and
    /// m ≥ 1) and finiteness of all entries.
    pub fn new(a: DMatrix<f64>, b: DMatrix<f64>) -> Result<Self> {
        if a.nrows() < 2 || a.nrows() != a.ncols() {
            return Err(CoreError::InvalidDimension(format!(
                "A must be square with n >= 2, got {}x{}",
                a.nrows(),
                a.ncols()
            )));
        }
        if b.nrows() != a.nrows() || b.ncols() < 1 {
            return Err(CoreError::InvalidDimension(format!(
                "B must be {}xm with m >= 1, got {}x{}",
                a.nrows(),
                b.nrows(),
                b.ncols()
            )));
        }
        if a.iter().chain(b.iter()).any(|v| !v.is_finite()) {
            return Err(CoreError::NonFinite(
                "coupling matrices contain NaN or infinite entries".into(),
            ));
        }
        Ok(Self { a, b })
    }

    /// Number of state components.
    pub fn n(&self) -> usize {
        self.a.nrows()
    }

    /// Number of control inputs.
    pub fn m(&self) -> usize {
        self.b.ncols()
    }
}

/// Which structural hypothesis, if any, makes the pair exactly synchronizable.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Hypothesis {
    /// Equal row sums and a controllable reduced difference system.
    H1,
    /// Unequal row sums and a fully controllable original system.
    H2,
    /// Neither test passes; no synchronizing control exists for generic data.
    Neither,
}

impl std::fmt::Display for Hypothesis {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Hypothesis::H1 => write!(f, "H1"),
            Hypothesis::H2 => write!(f, "H2"),
            Hypothesis::Neither => write!(f, "Neither"),
        }
    }
}

/// Everything the downstream solvers need to know about a classified pair.
#[derive(Debug, Clone, PartialEq)]
pub struct SyncStructure {
    /// The (n−1)×n difference matrix `D`.
    pub difference: DMatrix<f64>,
    /// Classification outcome.
    pub hypothesis: Hypothesis,
    /// The reduced coupling matrix `Ã` with `ÃD = DA`; present exactly when
    /// the row-sum condition holds (also for `Neither` pairs that fail only
    /// the rank test).
    pub a_reduced: Option<DMatrix<f64>>,
    /// The Kalman rank computed on the branch that was tested.
    pub rank_value: usize,
    /// The rank required for synchronizability on that branch (n−1 or n).
    pub rank_required: usize,
    /// Row sums of `A`.
    pub row_sums: DVector<f64>,
    /// True when a singular value fell within 10× of the rank cutoff, i.e. the
    /// rank decision is numerically fragile and worth flagging to the user.
    pub rank_marginal: bool,
}

impl SyncStructure {
    /// Whether the row-sum condition held (equivalently, whether `a_reduced`
    /// is present).
    pub fn row_condition_holds(&self) -> bool {
        self.a_reduced.is_some()
    }
}

/// The (n−1)×n difference matrix with rows `e_i − e_{i+1}`.
///
/// Its kernel is exactly the constant vectors, so `D y = 0` iff all components
/// of `y` agree.
pub fn difference_matrix(n: usize) -> Result<DMatrix<f64>> {
    if n < 2 {
        return Err(CoreError::InvalidDimension(format!(
            "difference matrix needs n >= 2 components, got {n}"
        )));
    }
    let mut d = DMatrix::zeros(n - 1, n);
    for i in 0..n - 1 {
        d[(i, i)] = 1.0;
        d[(i, i + 1)] = -1.0;
    }
    Ok(d)
}

fn row_sum_stats(a: &DMatrix<f64>) -> (DVector<f64>, f64, f64) {
    let sums = DVector::from_iterator(a.nrows(), a.row_iter().map(|r| r.sum()));
    let max = sums.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let min = sums.iter().cloned().fold(f64::INFINITY, f64::min);
    let scale = 1.0 + sums.iter().fold(0.0f64, |acc, s| acc.max(s.abs()));
    (sums, max - min, scale)
}

/// True iff all row sums of `A` agree within `tol` relative to
/// `1 + max|row sum|`.
pub fn row_condition(a: &DMatrix<f64>, tol: f64) -> bool {
    let (_, spread, scale) = row_sum_stats(a);
    spread <= tol * scale
}

/// The unique (n−1)×(n−1) matrix `Ã` with `ÃD = DA`, which exists iff the
/// row-sum condition holds.
///
/// Computed as `Ã = D·A·R` where `R` is the lower-triangular partial-sum right
/// inverse of `D` (`R[i][j] = −1` for `i > j`, so `DR = I`). The columns of
/// `RD − I` are multiples of the ones vector, hence `ÃD = DAR D = DA` exactly
/// when `A` maps constants to constants — that is, under the row-sum
/// condition. The construction is a single exact matrix product; the residual
/// `‖DA − ÃD‖_max` is checked against [`REDUCED_RESIDUAL_TOL`]`·(1+‖A‖_max)`.
pub fn reduced_matrix(a: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if a.nrows() < 2 || a.nrows() != a.ncols() {
        return Err(CoreError::InvalidDimension(format!(
            "reduced matrix needs square A with n >= 2, got {}x{}",
            a.nrows(),
            a.ncols()
        )));
    }
    if a.iter().any(|v| !v.is_finite()) {
        return Err(CoreError::NonFinite(
            "A contains NaN or infinite entries".into(),
        ));
    }
    let (_, spread, scale) = row_sum_stats(a);
    if spread > ROW_SUM_REL_TOL * scale {
        return Err(CoreError::RowConditionViolated {
            spread,
            tol: ROW_SUM_REL_TOL * scale,
        });
    }
    let n = a.nrows();
    let d = difference_matrix(n)?;
    let mut r = DMatrix::zeros(n, n - 1);
    for i in 0..n {
        for j in 0..n - 1 {
            if i > j {
                r[(i, j)] = -1.0;
            }
        }
    }
    let a_red = &d * a * r;

    let residual = (&d * a - &a_red * &d)
        .iter()
        .fold(0.0f64, |acc, v| acc.max(v.abs()));
    let a_max = a.iter().fold(0.0f64, |acc, v| acc.max(v.abs()));
    assert!(
        residual <= REDUCED_RESIDUAL_TOL * (1.0 + a_max),
        "reduced-matrix residual {residual:.3e} exceeds bound; construction is exact \
         to rounding, so this indicates corrupted input"
    );
    Ok(a_red)
}

/// Outcome of a numerical rank decision, with enough detail to judge how close
/// the decision came to the cutoff.
#[derive(Debug, Clone, Copy)]
struct RankDecision {
    rank: usize,
    marginal: bool,
}

fn svd_rank(m: &DMatrix<f64>, rel_tol: f64) -> RankDecision {
    let sv = m.clone().svd(false, false).singular_values;
    let sigma_max = sv.iter().cloned().fold(0.0f64, f64::max);
    if sigma_max <= RANK_ABS_FLOOR {
        return RankDecision {
            rank: 0,
            marginal: false,
        };
    }
    let cutoff = (rel_tol * sigma_max).max(RANK_ABS_FLOOR);
    let rank = sv.iter().filter(|&&s| s > cutoff).count();
    let marginal = sv
        .iter()
        .any(|&s| s >= cutoff / MARGINAL_FACTOR && s <= cutoff * MARGINAL_FACTOR);
    RankDecision { rank, marginal }
}

/// Numerical rank of the Kalman block `(G, FG, F²G, …, F^{k−1}G)`.
///
/// Singular values count toward the rank iff they exceed `tol·σ_max`, with the
/// absolute floor [`RANK_ABS_FLOOR`] guarding the all-zero case.
pub fn kalman_rank(f: &DMatrix<f64>, g: &DMatrix<f64>, tol: f64) -> usize {
    kalman_rank_decision(f, g, tol).rank
}

fn kalman_rank_decision(f: &DMatrix<f64>, g: &DMatrix<f64>, tol: f64) -> RankDecision {
    assert_eq!(f.nrows(), f.ncols(), "F must be square");
    assert_eq!(f.ncols(), g.nrows(), "F and G have incompatible shapes");
    let k = f.nrows();
    let l = g.ncols();
    let mut block = DMatrix::zeros(k, k * l);
    let mut power = g.clone();
    for j in 0..k {
        block.view_mut((0, j * l), (k, l)).copy_from(&power);
        if j + 1 < k {
            power = f * power;
        }
    }
    svd_rank(&block, tol)
}

/// Classify a coupling pair: row-sum test first, then the Kalman rank test of
/// the branch that test selects. The two branches are never mixed — when the
/// row-sum condition holds, only the reduced system's controllability decides.
pub fn classify(pair: &CouplingPair, rank_tol: f64) -> SyncStructure {
    let n = pair.n();
    let d = difference_matrix(n).expect("CouplingPair guarantees n >= 2");
    let (row_sums, spread, scale) = row_sum_stats(&pair.a);

    if spread <= ROW_SUM_REL_TOL * scale {
        let a_red = reduced_matrix(&pair.a).expect("row condition verified above");
        let db = &d * &pair.b;
        let decision = kalman_rank_decision(&a_red, &db, rank_tol);
        let hypothesis = if decision.rank == n - 1 {
            Hypothesis::H1
        } else {
            Hypothesis::Neither
        };
        SyncStructure {
            difference: d,
            hypothesis,
            a_reduced: Some(a_red),
            rank_value: decision.rank,
            rank_required: n - 1,
            row_sums,
            rank_marginal: decision.marginal,
        }
    } else {
        let decision = kalman_rank_decision(&pair.a, &pair.b, rank_tol);
        let hypothesis = if decision.rank == n {
            Hypothesis::H2
        } else {
            Hypothesis::Neither
        };
        SyncStructure {
            difference: d,
            hypothesis,
            a_reduced: None,
            rank_value: decision.rank,
            rank_required: n,
            row_sums,
            rank_marginal: decision.marginal,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn pair_b4() -> CouplingPair {
        CouplingPair::new(
            DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.5, 0.5]),
            DMatrix::from_row_slice(2, 1, &[0.0, 1.0]),
        )
        .unwrap()
    }

    fn pair_b5() -> CouplingPair {
        CouplingPair::new(
            DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 3.0, 4.0]),
            DMatrix::from_row_slice(2, 1, &[0.0, 1.0]),
        )
        .unwrap()
    }

    #[test]
    fn difference_matrix_patterns() {
        let d2 = difference_matrix(2).unwrap();
        assert_eq!(d2, DMatrix::from_row_slice(1, 2, &[1.0, -1.0]));
        let d3 = difference_matrix(3).unwrap();
        assert_eq!(
            d3,
            DMatrix::from_row_slice(2, 3, &[1.0, -1.0, 0.0, 0.0, 1.0, -1.0])
        );
        assert!(matches!(
            difference_matrix(1),
            Err(CoreError::InvalidDimension(_))
        ));
    }

    #[test]
    fn difference_matrix_kills_constants_exactly() {
        for n in 2..7 {
            let d = difference_matrix(n).unwrap();
            let v = DVector::from_element(n, 3.7e5);
            let dv = &d * v;
            assert!(dv.iter().all(|&x| x == 0.0));
        }
    }

    #[test]
    fn difference_matrix_has_full_row_rank() {
        for n in 2..8 {
            let d = difference_matrix(n).unwrap();
            let sv = d.clone().svd(false, false).singular_values;
            let smin = sv.iter().cloned().fold(f64::INFINITY, f64::min);
            assert!(
                smin > 0.1,
                "smallest singular value {smin} too small for n={n}"
            );
        }
    }

    #[test]
    fn row_condition_fixtures() {
        assert!(row_condition(&pair_b4().a, ROW_SUM_REL_TOL));
        assert!(!row_condition(&pair_b5().a, ROW_SUM_REL_TOL));
        assert!(row_condition(&DMatrix::identity(4, 4), ROW_SUM_REL_TOL));
    }

    /// Independent oracle for `Ã`: least-squares solve of `ÃD = DA` through
    /// the normal equations `Ã = (DA)Dᵀ(DDᵀ)⁻¹`.
    fn reduced_matrix_oracle(a: &DMatrix<f64>) -> DMatrix<f64> {
        let n = a.nrows();
        let d = difference_matrix(n).unwrap();
        let da = &d * a;
        let ddt = &d * d.transpose();
        let inv = ddt.try_inverse().unwrap();
        da * d.transpose() * inv
    }

    #[test]
    fn reduced_matrix_matches_least_squares_oracle() {
        let a = pair_b4().a;
        let ar = reduced_matrix(&a).unwrap();
        assert_eq!(ar.nrows(), 1);
        assert_abs_diff_eq!(ar[(0, 0)], 0.5, epsilon = 1e-14);
        let oracle = reduced_matrix_oracle(&a);
        assert_abs_diff_eq!(ar[(0, 0)], oracle[(0, 0)], epsilon = 1e-12);
    }

    #[test]
    fn reduced_matrix_of_scaled_identity() {
        let a = DMatrix::identity(4, 4) * -0.7;
        let ar = reduced_matrix(&a).unwrap();
        let expected = DMatrix::identity(3, 3) * -0.7;
        assert_abs_diff_eq!(ar, expected, epsilon = 1e-14);
    }

    #[test]
    fn reduced_matrix_rejects_unequal_row_sums() {
        assert!(matches!(
            reduced_matrix(&pair_b5().a),
            Err(CoreError::RowConditionViolated { .. })
        ));
    }

    #[test]
    fn reduced_matrix_residual_on_random_row_sum_matrices() {
        // Deterministic pseudo-random matrices with equal row sums: fill with a
        // simple LCG, then adjust the last column so every row sums to `s`.
        let mut state = 0x2545F4914F6CDD1Du64;
        let mut next = move || {
            state = state
                .wrapping_mul(6364136223846793005)
                .wrapping_add(1442695040888963407);
            ((state >> 33) as f64 / (1u64 << 31) as f64) * 4.0 - 2.0
        };
        for n in 2..6 {
            let mut a = DMatrix::from_fn(n, n, |_, _| next());
            let s = 1.3;
            for i in 0..n {
                let partial: f64 = (0..n - 1).map(|j| a[(i, j)]).sum();
                a[(i, n - 1)] = s - partial;
            }
            let ar = reduced_matrix(&a).unwrap();
            let d = difference_matrix(n).unwrap();
            let resid = (&d * &a - &ar * &d)
                .iter()
                .fold(0.0f64, |acc, v| acc.max(v.abs()));
            let a_max = a.iter().fold(0.0f64, |acc, v| acc.max(v.abs()));
            assert!(resid <= REDUCED_RESIDUAL_TOL * (1.0 + a_max));
            let oracle = reduced_matrix_oracle(&a);
            assert_abs_diff_eq!(ar, oracle, epsilon = 1e-10);
        }
    }

    #[test]
    fn kalman_rank_fixtures() {
        // Full-rank 2x2 block (G, FG) = [[0,2],[1,4]].
        let f = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 3.0, 4.0]);
        let g = DMatrix::from_row_slice(2, 1, &[0.0, 1.0]);
        assert_eq!(kalman_rank(&f, &g, RANK_REL_TOL), 2);

        // Zero G can never be controllable.
        let gz = DMatrix::zeros(2, 1);
        assert_eq!(kalman_rank(&f, &gz, RANK_REL_TOL), 0);

        // 1x1 reduced pair: block is just [-1], singular value 1.
        let fr = DMatrix::from_row_slice(1, 1, &[0.5]);
        let gr = DMatrix::from_row_slice(1, 1, &[-1.0]);
        assert_eq!(kalman_rank(&fr, &gr, RANK_REL_TOL), 1);
    }

    #[test]
    fn classify_fixtures() {
        let s1 = classify(&pair_b4(), RANK_REL_TOL);
        assert_eq!(s1.hypothesis, Hypothesis::H1);
        assert_eq!(s1.rank_value, 1);
        assert_eq!(s1.rank_required, 1);
        let ar = s1.a_reduced.as_ref().unwrap();
        assert_abs_diff_eq!(ar[(0, 0)], 0.5, epsilon = 1e-14);

        let s2 = classify(&pair_b5(), RANK_REL_TOL);
        assert_eq!(s2.hypothesis, Hypothesis::H2);
        assert_eq!(s2.rank_value, 2);
        assert!(s2.a_reduced.is_none());

        let neither = CouplingPair::new(DMatrix::identity(2, 2), DMatrix::zeros(2, 1)).unwrap();
        let s3 = classify(&neither, RANK_REL_TOL);
        assert_eq!(s3.hypothesis, Hypothesis::Neither);
        assert_eq!(s3.rank_value, 0);
        // Row condition holds for the identity, so the reduced matrix exists
        // even though the pair is not synchronizable.
        assert!(s3.a_reduced.is_some());
    }

    #[test]
    fn coupling_pair_validation() {
        assert!(matches!(
            CouplingPair::new(DMatrix::identity(1, 1), DMatrix::zeros(1, 1)),
            Err(CoreError::InvalidDimension(_))
        ));
        assert!(matches!(
            CouplingPair::new(DMatrix::identity(2, 2), DMatrix::zeros(3, 1)),
            Err(CoreError::InvalidDimension(_))
        ));
        let mut a = DMatrix::identity(2, 2);
        a[(0, 0)] = f64::NAN;
        assert!(matches!(
            CouplingPair::new(a, DMatrix::zeros(2, 1)),
            Err(CoreError::NonFinite(_))
        ));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        /// Rank is unchanged by permuting columns of G or scaling G by a
        /// moderate nonzero constant.
        #[test]
        fn kalman_rank_invariances(
            entries_f in proptest::collection::vec(-3.0f64..3.0, 9),
            entries_g in proptest::collection::vec(-3.0f64..3.0, 6),
            scale in prop_oneof![0.1f64..10.0, -10.0f64..-0.1],
        ) {
            let f = DMatrix::from_row_slice(3, 3, &entries_f);
            let g = DMatrix::from_row_slice(3, 2, &entries_g);
            let base = kalman_rank(&f, &g, RANK_REL_TOL);

            let mut swapped = g.clone();
            swapped.swap_columns(0, 1);
            prop_assert_eq!(kalman_rank(&f, &swapped, RANK_REL_TOL), base);

            let scaled = &g * scale;
            prop_assert_eq!(kalman_rank(&f, &scaled, RANK_REL_TOL), base);
        }

        /// classify returns exactly one hypothesis and its branch bookkeeping
        /// is consistent with the row-sum test.
        #[test]
        fn classify_is_exhaustive_and_exclusive(
            entries_a in proptest::collection::vec(-2.0f64..2.0, 9),
            entries_b in proptest::collection::vec(-2.0f64..2.0, 3),
            equalize in proptest::bool::ANY,
        ) {
            let mut a = DMatrix::from_row_slice(3, 3, &entries_a);
            if equalize {
                for i in 0..3 {
                    let partial: f64 = (0..2).map(|j| a[(i, j)]).sum();
                    a[(i, 2)] = 0.5 - partial;
                }
            }
            let b = DMatrix::from_row_slice(3, 1, &entries_b);
            let pair = CouplingPair::new(a.clone(), b).unwrap();
            let s = classify(&pair, RANK_REL_TOL);
            let rc = row_condition(&a, ROW_SUM_REL_TOL);
            match s.hypothesis {
                Hypothesis::H1 => {
                    prop_assert!(rc);
                    prop_assert_eq!(s.rank_value, 2);
                }
                Hypothesis::H2 => {
                    prop_assert!(!rc);
                    prop_assert_eq!(s.rank_value, 3);
                }
                Hypothesis::Neither => {
                    prop_assert!(s.rank_value < s.rank_required);
                }
            }
            prop_assert_eq!(s.a_reduced.is_some(), rc);
        }
    }
}
