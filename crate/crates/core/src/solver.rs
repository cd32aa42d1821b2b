//! Contraction constants and the linear fixed-point iteration
//! `(uⁿ, v) = (uⁿ⁻¹, v) − (c₀/L²) A(uⁿ⁻¹, v)` in the `(·,·)_Ω` inner product.
//!
//! In coefficients this is `M αⁿ = M αⁿ⁻¹ − (c₀/L²) A(αⁿ⁻¹)`. The matrix `M` is assembled
//! and factorized once per space; each step costs one residual assembly and one solve.

use std::io::Write;
use std::sync::Arc;

use crate::assembly::{assemble_iteration_matrix, assemble_residual};
use crate::error::{invalid, Result};
use crate::linalg::{SparseMatrix, SpdSolver};
use crate::problems::ProblemDef;
use crate::space::{CoefVector, FeSpace};

/// Relative tolerance of the linear solve in each fixed-point step.
pub const STEP_SOLVE_TOLERANCE: f64 = 1e-14;

/// Lipschitz constant of the weak form in the energy norm:
/// `(α₁ + max(β₁, α₁β₂/α₂) C_P²) / (α₂ + β₂ C_P²)`.
pub fn lipschitz_constant(alpha1: f64, alpha2: f64, beta1: f64, beta2: f64, poincare: f64) -> Result<f64> {
    let all = [alpha1, alpha2, beta1, beta2, poincare];
    if all.iter().any(|v| !v.is_finite()) {
        return Err(invalid("constants must be finite"));
    }
    if !(alpha2 > 0.0 && alpha1 >= alpha2) {
        return Err(invalid(format!("need alpha1 >= alpha2 > 0, got {alpha1}, {alpha2}")));
    }
    if !(beta2 >= 0.0 && beta1 >= beta2) {
        return Err(invalid(format!("need beta1 >= beta2 >= 0, got {beta1}, {beta2}")));
    }
    if !(poincare > 0.0) {
        return Err(invalid(format!("Poincare constant must be positive, got {poincare}")));
    }
    let cp2 = poincare * poincare;
    if beta2 == 0.0 {
        return Ok((alpha1 + beta1 * cp2) / alpha2);
    }
    Ok((alpha1 + beta1.max(alpha1 * beta2 / alpha2) * cp2) / (alpha2 + beta2 * cp2))
}

/// `k = √(1 − (c₀/L)²)`.
pub fn contraction_constant(c0: f64, lipschitz: f64) -> Result<f64> {
    if !(c0 > 0.0) || !(lipschitz >= c0) || !lipschitz.is_finite() {
        return Err(invalid(format!("need 0 < c0 <= L, got c0 = {c0}, L = {lipschitz}")));
    }
    let r = c0 / lipschitz;
    Ok((1.0 - r * r).max(0.0).sqrt())
}

/// A priori bound `kⁿ/(1−k) |||u⁰ − u¹|||` on the distance to the discrete solution.
pub fn apriori_tail(k: f64, n: usize, d01: f64) -> Result<f64> {
    if !(0.0..1.0).contains(&k) || !(d01 >= 0.0) || n == 0 {
        return Err(invalid(format!("need 0 <= k < 1, n >= 1, d01 >= 0; got k = {k}, n = {n}, d01 = {d01}")));
    }
    Ok(k.powi(n as i32) / (1.0 - k) * d01)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Constants {
    pub c0: f64,
    pub lipschitz: f64,
    pub contraction: f64,
    pub poincare: f64,
}

impl Constants {
    /// Constants of a problem with `c₀ = 1`.
    pub fn for_problem(problem: &ProblemDef) -> Result<Self> {
        let lipschitz = problem.lipschitz()?;
        Ok(Constants {
            c0: 1.0,
            lipschitz,
            contraction: contraction_constant(1.0, lipschitz)?,
            poincare: problem.poincare,
        })
    }

    /// The damping `c₀/L²` of the iteration.
    pub fn damping(&self) -> f64 {
        self.c0 / (self.lipschitz * self.lipschitz)
    }
}

/// Bookkeeping of one fixed-point step.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StepRecord {
    pub n: usize,
    /// `|||uⁿ − uⁿ⁻¹|||`.
    pub increment: f64,
    /// `max_j |A(uⁿ, φ_j)|`.
    pub residual_max: f64,
    /// `kⁿ/(1−k) |||u¹ − u⁰|||`.
    pub tail: f64,
}

/// The state of the iteration on one space.
#[derive(Clone)]
pub struct IterationState {
    space: Arc<FeSpace>,
    problem: Arc<ProblemDef>,
    constants: Constants,
    damping: f64,
    matrix: Arc<SparseMatrix>,
    solver: Arc<SpdSolver>,
    prev: CoefVector,
    curr: CoefVector,
    residual: Vec<f64>,
    n: usize,
    d01: Option<f64>,
    history: Vec<StepRecord>,
}

impl IterationState {
    /// Assembles and factorizes the iteration matrix and starts from `u0`.
    pub fn new(space: Arc<FeSpace>, problem: Arc<ProblemDef>, u0: CoefVector) -> Result<Self> {
        space.check(&u0)?;
        let constants = Constants::for_problem(&problem)?;
        let matrix = assemble_iteration_matrix(&space, problem.alpha2, problem.beta2)?;
        let solver = SpdSolver::new(&matrix)?;
        let residual = assemble_residual(&space, &u0, &problem)?;
        Ok(IterationState {
            damping: constants.damping(),
            constants,
            matrix: Arc::new(matrix),
            solver: Arc::new(solver),
            prev: u0.clone(),
            curr: u0,
            residual,
            n: 0,
            d01: None,
            history: Vec::new(),
            space,
            problem,
        })
    }

    /// Overrides the damping `c₀/L²`. Contraction is only guaranteed for the default.
    pub fn with_damping(mut self, damping: f64) -> Result<Self> {
        if !(damping > 0.0) || !damping.is_finite() {
            return Err(invalid(format!("damping must be positive, got {damping}")));
        }
        self.damping = damping;
        Ok(self)
    }

    pub fn space(&self) -> &Arc<FeSpace> {
        &self.space
    }

    pub fn problem(&self) -> &Arc<ProblemDef> {
        &self.problem
    }

    pub fn constants(&self) -> Constants {
        self.constants
    }

    pub fn damping(&self) -> f64 {
        self.damping
    }

    pub fn matrix(&self) -> &SparseMatrix {
        &self.matrix
    }

    pub fn current(&self) -> &CoefVector {
        &self.curr
    }

    pub fn previous(&self) -> &CoefVector {
        &self.prev
    }

    pub fn iteration(&self) -> usize {
        self.n
    }

    pub fn history(&self) -> &[StepRecord] {
        &self.history
    }

    /// `max_j |A(u_curr, φ_j)|`.
    pub fn residual_max(&self) -> f64 {
        self.residual.iter().fold(0.0, |m, r| m.max(r.abs()))
    }

    /// Performs one step and returns its record.
    ///
    /// Solves `M δ = −damping · A(uⁿ⁻¹)` and sets `αⁿ = αⁿ⁻¹ + δ`, which is the linear
    /// system above with `M αⁿ⁻¹` moved to the left.
    pub fn step(&mut self) -> Result<StepRecord> {
        let rhs: Vec<f64> = self.residual.iter().map(|r| -self.damping * r).collect();
        let delta = self.solver.solve(&self.matrix, &rhs, STEP_SOLVE_TOLERANCE)?;
        let increment = self.matrix.quadratic_form(&delta).max(0.0).sqrt();
        let next = CoefVector {
            space_id: self.curr.space_id,
            values: self.curr.values.iter().zip(&delta).map(|(a, d)| a + d).collect(),
        };
        self.residual = assemble_residual(&self.space, &next, &self.problem)?;
        self.prev = std::mem::replace(&mut self.curr, next);
        self.n += 1;
        let d01 = *self.d01.get_or_insert(increment);
        let k = self.constants.contraction;
        let record = StepRecord {
            n: self.n,
            increment,
            residual_max: self.residual_max(),
            tail: apriori_tail(k, self.n, d01)?,
        };
        self.history.push(record);
        Ok(record)
    }

    /// Steps until `rule` is satisfied.
    pub fn run(&mut self, rule: StopRule) -> Result<()> {
        match rule {
            StopRule::MaxIterations(n) => {
                while self.n < n {
                    self.step()?;
                }
            }
            StopRule::Residual { tol, max_iterations } => {
                while self.residual_max() > tol && self.n < max_iterations {
                    self.step()?;
                }
            }
        }
        Ok(())
    }
}

/// Performs one fixed-point step on `state`.
pub fn fixed_point_step(state: &mut IterationState) -> Result<StepRecord> {
    state.step()
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum StopRule {
    /// Exactly this many steps.
    MaxIterations(usize),
    /// Until `max_j |A(uⁿ, φ_j)| <= tol`, or `max_iterations` steps.
    Residual { tol: f64, max_iterations: usize },
}

/// Runs the iteration from `u0` and returns the final coefficients and the step history.
pub fn run_fixed_point(
    space: Arc<FeSpace>,
    problem: Arc<ProblemDef>,
    u0: CoefVector,
    rule: StopRule,
) -> Result<(CoefVector, Vec<StepRecord>)> {
    let mut state = IterationState::new(space, problem, u0)?;
    state.run(rule)?;
    Ok((state.curr, state.history))
}

/// Writes step records as CSV with header `n,increment,residual_max,tail`.
pub fn write_history_csv<W: Write>(mut w: W, history: &[StepRecord]) -> Result<()> {
    writeln!(w, "n,increment,residual_max,tail")?;
    for r in history {
        writeln!(w, "{},{:.10e},{:.10e},{:.10e}", r.n, r.increment, r.residual_max, r.tail)?;
    }
    Ok(())
}
