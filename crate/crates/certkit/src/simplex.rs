//! Dense two-phase tableau simplex with Bland's anti-cycling rule.
//!
//! Built for the small LPs that the verifiers emit (tens of variables and
//! rows), so the priorities are determinism and correctness, not speed: the
//! tableau is dense, pivots follow Bland's rule, and an iteration cap turns
//! any stall into an explicit error instead of a silent wrong answer.

use crate::error::{Error, Result};

/// `minimize c . x` subject to `A x <= b` and `lower <= x <= upper`
/// (infinities allowed in the variable bounds).
#[derive(Debug, Clone)]
pub struct LinearProgram {
    pub objective: Vec<f64>,
    pub rows: Vec<Vec<f64>>,
    pub rhs: Vec<f64>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl LinearProgram {
    /// LP with the given objective and free variables, no rows yet.
    pub fn new(objective: Vec<f64>) -> Result<Self> {
        if objective.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter(
                "objective coefficients must be finite".into(),
            ));
        }
        let n = objective.len();
        Ok(LinearProgram {
            objective,
            rows: Vec::new(),
            rhs: Vec::new(),
            lower: vec![f64::NEG_INFINITY; n],
            upper: vec![f64::INFINITY; n],
        })
    }

    pub fn num_vars(&self) -> usize {
        self.objective.len()
    }

    /// Add an inequality `row . x <= rhs`.
    pub fn add_le(&mut self, row: Vec<f64>, rhs: f64) -> Result<()> {
        if row.len() != self.num_vars() {
            return Err(Error::DimensionMismatch(format!(
                "constraint width {} != {} variables",
                row.len(),
                self.num_vars()
            )));
        }
        self.rows.push(row);
        self.rhs.push(rhs);
        Ok(())
    }

    /// Add `row . x >= rhs` (stored as the negated `<=` row).
    pub fn add_ge(&mut self, row: Vec<f64>, rhs: f64) -> Result<()> {
        self.add_le(row.iter().map(|v| -v).collect(), -rhs)
    }

    /// Add `row . x = rhs` as the pair of opposing inequalities.
    pub fn add_eq(&mut self, row: Vec<f64>, rhs: f64) -> Result<()> {
        self.add_le(row.clone(), rhs)?;
        self.add_ge(row, rhs)
    }

    /// Intersect variable `j`'s bound interval with `[lo, hi]`.
    pub fn bound(&mut self, j: usize, lo: f64, hi: f64) {
        self.lower[j] = self.lower[j].max(lo);
        self.upper[j] = self.upper[j].min(hi);
    }
}

/// Solver outcome.
#[derive(Debug, Clone, PartialEq)]
pub enum LpSolution {
    Optimal { x: Vec<f64>, value: f64 },
    Infeasible,
    Unbounded,
}

const MAX_PIVOTS: usize = 50_000;

/// Solve with the two-phase dense simplex. `tol` is the pivot/zero tolerance
/// (1e-9 is a good default at this scale). A pivot-count overrun returns
/// [`Error::SolverStalled`], never a silently wrong verdict.
pub fn simplex_solve(lp: &LinearProgram, tol: f64) -> Result<LpSolution> {
    let n_orig = lp.num_vars();
    for j in 0..n_orig {
        if lp.lower[j] > lp.upper[j] {
            return Ok(LpSolution::Infeasible);
        }
    }

    // Substitute every variable by nonnegative ones:
    //   finite lower:      x = lo + s
    //   upper-only:        x = hi - s
    //   free:              x = s+ - s-
    // Finite ranges add a row `s <= hi - lo`.
    #[derive(Clone, Copy)]
    enum Subst {
        Shift { col: usize, lo: f64 },
        Mirror { col: usize, hi: f64 },
        Split { pos: usize, neg: usize },
    }
    let mut subst = Vec::with_capacity(n_orig);
    let mut n_cols = 0;
    for j in 0..n_orig {
        let (lo, hi) = (lp.lower[j], lp.upper[j]);
        if lo.is_finite() {
            subst.push(Subst::Shift { col: n_cols, lo });
            n_cols += 1;
        } else if hi.is_finite() {
            subst.push(Subst::Mirror { col: n_cols, hi });
            n_cols += 1;
        } else {
            subst.push(Subst::Split {
                pos: n_cols,
                neg: n_cols + 1,
            });
            n_cols += 2;
        }
    }

    // Rewrite rows and objective over the substituted variables.
    let mut rows: Vec<Vec<f64>> = Vec::with_capacity(lp.rows.len() + n_orig);
    let mut rhs: Vec<f64> = Vec::with_capacity(lp.rows.len() + n_orig);
    let mut push_row = |coeffs: &[f64], mut b: f64| {
        let mut row = vec![0.0; n_cols];
        for (j, &a) in coeffs.iter().enumerate() {
            if a == 0.0 {
                continue;
            }
            match subst[j] {
                Subst::Shift { col, lo } => {
                    row[col] += a;
                    b -= a * lo;
                }
                Subst::Mirror { col, hi } => {
                    row[col] -= a;
                    b -= a * hi;
                }
                Subst::Split { pos, neg } => {
                    row[pos] += a;
                    row[neg] -= a;
                }
            }
        }
        rows.push(row);
        rhs.push(b);
    };
    for (row, &b) in lp.rows.iter().zip(&lp.rhs) {
        push_row(row, b);
    }
    for j in 0..n_orig {
        let (lo, hi) = (lp.lower[j], lp.upper[j]);
        if lo.is_finite() && hi.is_finite() {
            let mut unit = vec![0.0; n_orig];
            unit[j] = 1.0;
            push_row(&unit, hi);
        }
    }

    // Objective over the substituted variables (the constant shift drops out
    // because the final value is recomputed from the recovered x).
    let mut cost = vec![0.0; n_cols];
    for (j, &c) in lp.objective.iter().enumerate() {
        match subst[j] {
            Subst::Shift { col, .. } => cost[col] += c,
            Subst::Mirror { col, .. } => cost[col] -= c,
            Subst::Split { pos, neg } => {
                cost[pos] += c;
                cost[neg] -= c;
            }
        }
    }

    let m = rows.len();
    // Normalize RHS to be nonnegative, then append slack columns; rows whose
    // slack ends up with coefficient -1 get an artificial variable.
    let mut tableau: Vec<Vec<f64>> = Vec::with_capacity(m);
    let mut basis = vec![usize::MAX; m];
    let mut artificial_cols = Vec::new();
    let slack_base = n_cols;
    let total_before_artificial = n_cols + m;
    for i in 0..m {
        let flip = rhs[i] < 0.0;
        let sign = if flip { -1.0 } else { 1.0 };
        let mut row: Vec<f64> = rows[i].iter().map(|v| sign * v).collect();
        row.resize(total_before_artificial, 0.0);
        row[slack_base + i] = sign;
        row.push(sign * rhs[i]); // RHS in the last column for now
        tableau.push(row);
        if !flip {
            basis[i] = slack_base + i;
        }
    }
    let mut n_total = total_before_artificial;
    for i in 0..m {
        if basis[i] == usize::MAX {
            // insert artificial column before the RHS
            for (r, row) in tableau.iter_mut().enumerate() {
                let v = if r == i { 1.0 } else { 0.0 };
                let rhs_col = row.len() - 1;
                row.insert(rhs_col, v);
            }
            basis[i] = n_total;
            artificial_cols.push(n_total);
            n_total += 1;
        }
    }
    let rhs_col = n_total;

    // Phase-2 cost row (reduced costs start equal to the raw costs because
    // the initial basis has zero cost), and phase-1 row minimizing the sum of
    // artificials.
    let mut cost_row = vec![0.0; n_total + 1];
    cost_row[..n_cols].copy_from_slice(&cost);
    let mut phase1_row = vec![0.0; n_total + 1];
    for (i, row) in tableau.iter().enumerate() {
        if artificial_cols.contains(&basis[i]) {
            for j in 0..=n_total {
                phase1_row[j] -= row[j];
            }
        }
    }
    for &c in &artificial_cols {
        phase1_row[c] = 0.0;
    }

    let mut pivots = 0usize;
    let is_artificial = |j: usize| artificial_cols.binary_search(&j).is_ok();

    // Phase 1.
    if !artificial_cols.is_empty() {
        let status = run_phase(
            &mut tableau,
            &mut basis,
            &mut phase1_row,
            Some(&mut cost_row),
            rhs_col,
            tol,
            &mut pivots,
            &|_| false,
        )?;
        if status == PhaseStatus::Unbounded {
            // Phase-1 objective is bounded below by 0; treat as a stall.
            return Err(Error::SolverStalled { iterations: pivots });
        }
        if -phase1_row[rhs_col] > tol.max(1e-7) {
            return Ok(LpSolution::Infeasible);
        }
        // Pivot remaining artificials out of the basis when possible.
        for i in 0..m {
            if is_artificial(basis[i]) {
                if let Some(j) = (0..n_cols + m).find(|&j| tableau[i][j].abs() > tol) {
                    pivot(&mut tableau, &mut basis, &mut cost_row, None, i, j, rhs_col);
                    pivots += 1;
                }
            }
        }
    }

    // Phase 2.
    let status = run_phase(
        &mut tableau,
        &mut basis,
        &mut cost_row,
        None,
        rhs_col,
        tol,
        &mut pivots,
        &is_artificial,
    )?;
    if status == PhaseStatus::Unbounded {
        return Ok(LpSolution::Unbounded);
    }

    // Recover the substituted solution, then the original variables.
    let mut s = vec![0.0; n_total];
    for (i, &b) in basis.iter().enumerate() {
        s[b] = tableau[i][rhs_col];
    }
    let mut x = vec![0.0; n_orig];
    for j in 0..n_orig {
        x[j] = match subst[j] {
            Subst::Shift { col, lo } => lo + s[col],
            Subst::Mirror { col, hi } => hi - s[col],
            Subst::Split { pos, neg } => s[pos] - s[neg],
        };
    }
    let value: f64 = lp.objective.iter().zip(&x).map(|(c, v)| c * v).sum();
    Ok(LpSolution::Optimal { x, value })
}

#[derive(PartialEq, Clone, Copy)]
enum PhaseStatus {
    Optimal,
    Unbounded,
}

/// Run simplex pivots on `objective_row` until optimal or unbounded, keeping
/// `carried_row` (the other phase's costs) in sync.
#[allow(clippy::too_many_arguments)]
fn run_phase(
    tableau: &mut [Vec<f64>],
    basis: &mut [usize],
    objective_row: &mut [f64],
    mut carried_row: Option<&mut Vec<f64>>,
    rhs_col: usize,
    tol: f64,
    pivots: &mut usize,
    banned: &dyn Fn(usize) -> bool,
) -> Result<PhaseStatus> {
    loop {
        // Bland: entering column = lowest index with a negative reduced cost.
        let entering = (0..rhs_col).find(|&j| !banned(j) && objective_row[j] < -tol);
        let Some(col) = entering else {
            return Ok(PhaseStatus::Optimal);
        };
        // Ratio test; Bland tie-break on the smallest basis variable.
        let mut leave: Option<(usize, f64)> = None;
        for (i, row) in tableau.iter().enumerate() {
            if row[col] > tol {
                let ratio = row[rhs_col] / row[col];
                match leave {
                    None => leave = Some((i, ratio)),
                    Some((bi, br)) => {
                        if ratio < br - tol
                            || ((ratio - br).abs() <= tol && basis[i] < basis[bi])
                        {
                            leave = Some((i, ratio));
                        }
                    }
                }
            }
        }
        let Some((row_idx, _)) = leave else {
            return Ok(PhaseStatus::Unbounded);
        };
        pivot(
            tableau,
            basis,
            objective_row,
            carried_row.as_deref_mut(),
            row_idx,
            col,
            rhs_col,
        );
        *pivots += 1;
        if *pivots > MAX_PIVOTS {
            return Err(Error::SolverStalled {
                iterations: MAX_PIVOTS,
            });
        }
    }
}

fn pivot(
    tableau: &mut [Vec<f64>],
    basis: &mut [usize],
    objective_row: &mut [f64],
    carried_row: Option<&mut Vec<f64>>,
    row_idx: usize,
    col: usize,
    rhs_col: usize,
) {
    let pivot_val = tableau[row_idx][col];
    for v in tableau[row_idx].iter_mut() {
        *v /= pivot_val;
    }
    for i in 0..tableau.len() {
        if i == row_idx {
            continue;
        }
        let factor = tableau[i][col];
        if factor != 0.0 {
            for j in 0..=rhs_col {
                tableau[i][j] -= factor * tableau[row_idx][j];
            }
            tableau[i][col] = 0.0;
        }
    }
    let factor = objective_row[col];
    if factor != 0.0 {
        for j in 0..=rhs_col {
            objective_row[j] -= factor * tableau[row_idx][j];
        }
        objective_row[col] = 0.0;
    }
    if let Some(carried) = carried_row {
        let factor = carried[col];
        if factor != 0.0 {
            for j in 0..=rhs_col {
                carried[j] -= factor * tableau[row_idx][j];
            }
            carried[col] = 0.0;
        }
    }
    basis[row_idx] = col;
}
