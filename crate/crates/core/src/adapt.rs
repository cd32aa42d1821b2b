//! The adaptive loop: on each mesh, iterate until `E_FP <= θ E_FEM`, then mark by fixed
//! fractions, derefine, refine and carry the last iterate over to the new space.

use std::sync::Arc;

use crate::assembly::assembly_count;
use crate::error::{invalid, Result};
use crate::estimator::{local_indicators, IndicatorField};
use crate::mesh::Mesh;
use crate::problems::{exact_energy_norm, true_error, ProblemDef};
use crate::solver::IterationState;
use crate::space::{build_space, transfer, CoefVector, FeSpace};

#[derive(Clone, Debug, PartialEq)]
pub struct AdaptConfig {
    /// Steering parameter of the `E_FP <= θ E_FEM` test.
    pub theta: f64,
    pub refine_fraction: f64,
    pub derefine_fraction: f64,
    /// Number of meshes visited, including the initial one.
    pub max_meshes: usize,
    /// Safety cap on fixed-point steps per mesh; hitting it flags the record.
    pub max_iterations_per_mesh: usize,
    /// Stop once `C_I E_FEM + E_FP` falls below this value.
    pub target_bound: f64,
}

impl AdaptConfig {
    pub fn new(theta: f64) -> Self {
        AdaptConfig {
            theta,
            refine_fraction: 0.25,
            derefine_fraction: 0.05,
            max_meshes: 10,
            max_iterations_per_mesh: 200,
            target_bound: 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.theta > 0.0) || !self.theta.is_finite() {
            return Err(invalid(format!("theta must be positive, got {}", self.theta)));
        }
        for (name, f) in [("refine", self.refine_fraction), ("derefine", self.derefine_fraction)] {
            if !(0.0..1.0).contains(&f) {
                return Err(invalid(format!("{name} fraction must lie in [0, 1), got {f}")));
            }
        }
        if self.refine_fraction + self.derefine_fraction > 1.0 {
            return Err(invalid("refine and derefine fractions overlap"));
        }
        if self.max_meshes == 0 || self.max_iterations_per_mesh == 0 {
            return Err(invalid("max_meshes and max_iterations_per_mesh must be positive"));
        }
        if !(self.target_bound >= 0.0) {
            return Err(invalid("target bound must be non-negative"));
        }
        Ok(())
    }
}

/// One fixed-point step on one mesh.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct IterationRecord {
    pub mesh_index: usize,
    pub n: usize,
    pub dofs: usize,
    pub e_fem: f64,
    pub e_fp: f64,
    pub bound: f64,
    pub true_error: Option<f64>,
    pub effectivity: Option<f64>,
}

/// Summary of one mesh at inner-loop exit.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdaptRecord {
    pub mesh_index: usize,
    pub elements: usize,
    pub dofs: usize,
    /// Fixed-point steps taken on this mesh (`n*`).
    pub iterations: usize,
    pub e_fem: f64,
    pub e_fp: f64,
    pub bound: f64,
    pub true_error: Option<f64>,
    pub relative_error: Option<f64>,
    pub effectivity: Option<f64>,
    /// Derefinement candidates that could not be merged.
    pub derefine_skipped: usize,
    /// The safety cap ended the inner loop before the balance test passed.
    pub flagged: bool,
}

#[derive(Clone, Debug)]
pub struct AdaptReport {
    pub records: Vec<AdaptRecord>,
    pub iterations: Vec<IterationRecord>,
    /// Iteration matrices assembled during the run.
    pub assemblies: usize,
    pub final_space: Arc<FeSpace>,
    pub final_solution: CoefVector,
    pub final_indicators: IndicatorField,
}

/// What the observer sees after the inner loop on each mesh.
pub struct MeshSnapshot<'a> {
    pub record: &'a AdaptRecord,
    pub space: &'a FeSpace,
    pub solution: &'a CoefVector,
    pub indicators: &'a IndicatorField,
}

/// Splits elements into the `⌈r·n⌉` largest and `⌊d·n⌋` smallest indicators.
///
/// Ties are broken by ascending element id. The derefine set is drawn from the elements
/// not selected for refinement. Both returned sets are sorted.
pub fn mark_fixed_fraction(eta: &[f64], refine_fraction: f64, derefine_fraction: f64) -> (Vec<usize>, Vec<usize>) {
    let n = eta.len();
    let n_refine = ((refine_fraction * n as f64).ceil() as usize).min(n);
    let n_derefine = ((derefine_fraction * n as f64).floor() as usize).min(n - n_refine);
    let mut by_desc: Vec<usize> = (0..n).collect();
    by_desc.sort_by(|&a, &b| eta[b].total_cmp(&eta[a]).then(a.cmp(&b)));
    let mut refine: Vec<usize> = by_desc[..n_refine].to_vec();
    let mut chosen = vec![false; n];
    for &k in &refine {
        chosen[k] = true;
    }
    let mut by_asc: Vec<usize> = (0..n).filter(|&k| !chosen[k]).collect();
    by_asc.sort_by(|&a, &b| eta[a].total_cmp(&eta[b]).then(a.cmp(&b)));
    let mut derefine: Vec<usize> = by_asc[..n_derefine].to_vec();
    refine.sort_unstable();
    derefine.sort_unstable();
    (refine, derefine)
}

/// Runs the adaptive loop from a zero initial guess.
pub fn adaptive_solve(problem: Arc<ProblemDef>, mesh: Mesh, p: usize, config: &AdaptConfig) -> Result<AdaptReport> {
    adaptive_solve_with(problem, mesh, p, config, |_| Ok(()))
}

/// [`adaptive_solve`] with a callback invoked once per mesh after the inner loop.
pub fn adaptive_solve_with<F>(
    problem: Arc<ProblemDef>,
    mesh: Mesh,
    p: usize,
    config: &AdaptConfig,
    mut observer: F,
) -> Result<AdaptReport>
where
    F: FnMut(&MeshSnapshot<'_>) -> Result<()>,
{
    config.validate()?;
    let lipschitz = problem.lipschitz()?;
    let assemblies_before = assembly_count();
    let mut space = Arc::new(build_space(Arc::new(mesh), p)?);
    let mut u0 = CoefVector::zeros(&space);
    let mut records = Vec::new();
    let mut iterations = Vec::new();
    let mut skipped_last = 0;

    for i in 0..config.max_meshes {
        let mut state = IterationState::new(space.clone(), problem.clone(), u0)?;
        let exact_norm = match problem.exact {
            Some(_) => Some(exact_energy_norm(&space, &problem)?),
            None => None,
        };
        let (indicators, flagged) = loop {
            state.step()?;
            let ind = local_indicators(&space, state.current(), state.previous(), &problem, lipschitz)?;
            let bound = ind.total_bound();
            let err = match problem.exact {
                Some(_) => Some(true_error(&space, state.current(), &problem)?),
                None => None,
            };
            iterations.push(IterationRecord {
                mesh_index: i,
                n: state.iteration(),
                dofs: space.n_free(),
                e_fem: ind.e_fem,
                e_fp: ind.e_fp,
                bound,
                true_error: err,
                effectivity: err.map(|e| bound / e),
            });
            if ind.e_fp <= config.theta * ind.e_fem {
                break (ind, false);
            }
            if state.iteration() >= config.max_iterations_per_mesh {
                log::warn!(
                    "mesh {i}: balance test not met after {} iterations (E_FP = {:.3e}, E_FEM = {:.3e})",
                    state.iteration(),
                    ind.e_fp,
                    ind.e_fem
                );
                break (ind, true);
            }
        };
        let last = *iterations.last().expect("at least one step per mesh");
        let record = AdaptRecord {
            mesh_index: i,
            elements: space.mesh().n_elements(),
            dofs: space.n_free(),
            iterations: state.iteration(),
            e_fem: last.e_fem,
            e_fp: last.e_fp,
            bound: last.bound,
            true_error: last.true_error,
            relative_error: last.true_error.zip(exact_norm).map(|(e, n)| e / n),
            effectivity: last.effectivity,
            derefine_skipped: skipped_last,
            flagged,
        };
        records.push(record);
        let solution = state.current().clone();
        observer(&MeshSnapshot { record: &record, space: &space, solution: &solution, indicators: &indicators })?;

        if i + 1 == config.max_meshes || record.bound <= config.target_bound {
            return Ok(AdaptReport {
                records,
                iterations,
                assemblies: assembly_count() - assemblies_before,
                final_space: space,
                final_solution: solution,
                final_indicators: indicators,
            });
        }

        let (refine, derefine) = mark_fixed_fraction(&indicators.eta, config.refine_fraction, config.derefine_fraction);
        let coarsened = space.mesh().derefine_mapped(&derefine)?;
        if coarsened.skipped > 0 {
            log::debug!("mesh {i}: {} elements could not be derefined", coarsened.skipped);
        }
        skipped_last = coarsened.skipped;
        let refine: Vec<usize> = refine.iter().map(|&k| coarsened.element_map[k]).collect();
        let next_mesh = coarsened.mesh.refine(&refine)?;
        let next = Arc::new(build_space(Arc::new(next_mesh), p)?);
        u0 = transfer(&space, &solution, &next)?;
        space = next;
    }
    unreachable!("loop returns on the last mesh")
}

/// Writes per-step rows `mesh,n,dofs,e_fem,e_fp,bound,true_error,effectivity`.
pub fn write_iterations_csv<W: std::io::Write>(mut w: W, rows: &[IterationRecord]) -> Result<()> {
    writeln!(w, "mesh,n,dofs,e_fem,e_fp,bound,true_error,effectivity")?;
    for r in rows {
        writeln!(
            w,
            "{},{},{},{:.10e},{:.10e},{:.10e},{},{}",
            r.mesh_index,
            r.n,
            r.dofs,
            r.e_fem,
            r.e_fp,
            r.bound,
            opt(r.true_error),
            opt(r.effectivity)
        )?;
    }
    Ok(())
}

/// Writes per-mesh rows
/// `mesh,elements,dofs,iterations,e_fem,e_fp,bound,true_error,relative_error,effectivity,derefine_skipped,flagged`.
pub fn write_summary_csv<W: std::io::Write>(mut w: W, rows: &[AdaptRecord]) -> Result<()> {
    writeln!(
        w,
        "mesh,elements,dofs,iterations,e_fem,e_fp,bound,true_error,relative_error,effectivity,derefine_skipped,flagged"
    )?;
    for r in rows {
        writeln!(
            w,
            "{},{},{},{},{:.10e},{:.10e},{:.10e},{},{},{},{},{}",
            r.mesh_index,
            r.elements,
            r.dofs,
            r.iterations,
            r.e_fem,
            r.e_fp,
            r.bound,
            opt(r.true_error),
            opt(r.relative_error),
            opt(r.effectivity),
            r.derefine_skipped,
            r.flagged as u8
        )?;
    }
    Ok(())
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.10e}")).unwrap_or_default()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn marking_counts() {
        let eta: Vec<f64> = (0..100).map(|k| ((k * 37) % 100) as f64).collect();
        let (r, d) = mark_fixed_fraction(&eta, 0.25, 0.05);
        assert_eq!((r.len(), d.len()), (25, 5));
        assert!(r.iter().all(|k| eta[*k] >= 75.0));
        assert!(d.iter().all(|k| eta[*k] < 5.0));
        let (r, _) = mark_fixed_fraction(&eta, 0.0, 0.05);
        assert!(r.is_empty());
    }

    #[test]
    fn ties_prefer_low_ids() {
        let eta = vec![1.0; 8];
        let (r, d) = mark_fixed_fraction(&eta, 0.25, 0.25);
        assert_eq!(r, vec![0, 1]);
        assert_eq!(d, vec![2, 3]);
    }

    #[test]
    fn sets_are_disjoint() {
        let eta = vec![3.0, 1.0, 2.0];
        let (r, d) = mark_fixed_fraction(&eta, 0.5, 0.5);
        assert_eq!(r, vec![0, 2]);
        assert_eq!(d, vec![1]);
    }

    #[test]
    fn config_validation() {
        assert!(AdaptConfig::new(0.5).validate().is_ok());
        assert!(AdaptConfig::new(0.0).validate().is_err());
        let mut c = AdaptConfig::new(1.0);
        c.refine_fraction = 1.0;
        assert!(c.validate().is_err());
    }
}
