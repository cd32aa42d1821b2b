/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#ifndef MONOFEM_H
#define MONOFEM_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

// Result of a fallible call.
typedef enum MfStatus {
  MF_STATUS_OK = 0,
  MF_STATUS_INVALID_ARGUMENT = 1,
  MF_STATUS_NUMERIC = 2,
  MF_STATUS_SOLVER = 3,
  MF_STATUS_IO = 4,
  MF_STATUS_NULL_POINTER = 5,
  MF_STATUS_PANIC = 6,
} MfStatus;

// Opaque mesh handle.
typedef struct MfMesh MfMesh;

// Opaque problem handle.
typedef struct MfProblem MfProblem;

// Opaque adaptive run handle.
typedef struct MfReport MfReport;

// Opaque finite element space handle.
typedef struct MfSpace MfSpace;

// Opaque fixed-point iteration handle.
typedef struct MfState MfState;

// Settings of [`mf_adaptive_solve`]; start from [`mf_adapt_default_options`].
typedef struct MfAdaptOptions {
  double theta;
  double refine_fraction;
  double derefine_fraction;
  size_t max_meshes;
  size_t max_iterations_per_mesh;
  double target_bound;
} MfAdaptOptions;

// Per-mesh summary of an adaptive run. Unknown errors are NaN.
typedef struct MfAdaptRecord {
  size_t mesh_index;
  size_t elements;
  size_t dofs;
  size_t iterations;
  double e_fem;
  double e_fp;
  double bound;
  double true_error;
  double effectivity;
  int flagged;
} MfAdaptRecord;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message of the last failed call on this thread; empty if none. Valid until the next
// failing call on the same thread.
const char *mf_last_error(void);

// Uniform mesh of the unit square with `n x n` cells; `quad` nonzero selects quadrilaterals.
//
// # Safety
// `out` must be a valid pointer to writable storage for one handle.
enum MfStatus mf_mesh_unit_square(size_t n, int quad, struct MfMesh **out);

// Reads a mesh in the plain-text format.
//
// # Safety
// `path` must be a NUL-terminated string and `out` valid for one handle.
enum MfStatus mf_mesh_read(const char *path, struct MfMesh **out);

// Refines the listed elements (with conformity closure) into a new mesh.
//
// # Safety
// `marked` must point to `n_marked` ids (or be null when `n_marked` is 0).
enum MfStatus mf_mesh_refine(const struct MfMesh *mesh,
                             const size_t *marked,
                             size_t n_marked,
                             struct MfMesh **out);

// Number of elements, or 0 for a null handle.
//
// # Safety
// `mesh` must be null or a live handle.
size_t mf_mesh_n_elements(const struct MfMesh *mesh);

// Number of vertices, or 0 for a null handle.
//
// # Safety
// `mesh` must be null or a live handle.
size_t mf_mesh_n_vertices(const struct MfMesh *mesh);

// # Safety
// `mesh` must be null or a handle not yet freed.
void mf_mesh_free(struct MfMesh *mesh);

// Built-in problem `apriori`, `ex1`, `ex2` or `ex3`. A non-positive or NaN `eps` keeps the
// problem default.
//
// # Safety
// `name` must be a NUL-terminated string and `out` valid for one handle.
enum MfStatus mf_problem_builtin(const char *name, double eps, struct MfProblem **out);

// Writes the Lipschitz constant `L`, the contraction constant `k` and the default `θ`.
// Any output pointer may be null.
//
// # Safety
// Non-null pointers must be valid for writes.
enum MfStatus mf_problem_constants(const struct MfProblem *problem,
                                   double *lipschitz,
                                   double *contraction,
                                   double *theta);

// # Safety
// `problem` must be null or a handle not yet freed.
void mf_problem_free(struct MfProblem *problem);

// Continuous degree-`p` Lagrange space with zero boundary values on a copy of `mesh`.
//
// # Safety
// `mesh` must be a live handle and `out` valid for one handle.
enum MfStatus mf_space_new(const struct MfMesh *mesh, size_t p, struct MfSpace **out);

// Number of free DOFs, or 0 for a null handle.
//
// # Safety
// `space` must be null or a live handle.
size_t mf_space_n_free(const struct MfSpace *space);

// # Safety
// `space` must be null or a handle not yet freed.
void mf_space_free(struct MfSpace *space);

// Starts the fixed-point iteration from zero; assembles and factors the iteration matrix.
//
// # Safety
// Handles must be live and `out` valid for one handle.
enum MfStatus mf_state_new(const struct MfSpace *space,
                           const struct MfProblem *problem,
                           struct MfState **out);

// Performs one step; writes `|||uⁿ − uⁿ⁻¹|||` to `increment` unless it is null.
//
// # Safety
// `state` must be a live handle; `increment` null or valid for writes.
enum MfStatus mf_state_step(struct MfState *state, double *increment);

// Steps taken so far, or 0 for a null handle.
//
// # Safety
// `state` must be null or a live handle.
size_t mf_state_iteration(const struct MfState *state);

// Copies the free-DOF coefficients of the current iterate into `buf`.
//
// # Safety
// `buf` must be valid for `len` writes.
enum MfStatus mf_state_coefficients(const struct MfState *state, double *buf, size_t len);

// `|||u* − uⁿ|||` for problems with a known solution.
//
// # Safety
// `state` must be a live handle and `out` valid for writes.
enum MfStatus mf_state_true_error(const struct MfState *state, double *out);

// Error indicators of the last step: `η_K` per element into `eta` (length at least the
// element count), and the totals `E_FEM`, `E_FP` unless null.
//
// # Safety
// `eta` must be valid for `len` writes; the totals null or valid for writes.
enum MfStatus mf_state_indicators(const struct MfState *state,
                                  double *eta,
                                  size_t len,
                                  double *e_fem,
                                  double *e_fp);

// # Safety
// `state` must be null or a handle not yet freed.
void mf_state_free(struct MfState *state);

// Default adaptive settings for steering parameter `theta`.
struct MfAdaptOptions mf_adapt_default_options(double theta);

// Runs the adaptive loop from a zero initial guess on a copy of `mesh`.
//
// # Safety
// Handles and `options` must be valid; `out` valid for one handle.
enum MfStatus mf_adaptive_solve(const struct MfProblem *problem,
                                const struct MfMesh *mesh,
                                size_t p,
                                const struct MfAdaptOptions *options,
                                struct MfReport **out);

// Number of meshes visited, or 0 for a null handle.
//
// # Safety
// `report` must be null or a live handle.
size_t mf_report_len(const struct MfReport *report);

// Iteration matrices assembled during the run, or 0 for a null handle.
//
// # Safety
// `report` must be null or a live handle.
size_t mf_report_assemblies(const struct MfReport *report);

// Copies record `index` into `out`.
//
// # Safety
// `report` must be a live handle and `out` valid for writes.
enum MfStatus mf_report_record(const struct MfReport *report,
                               size_t index,
                               struct MfAdaptRecord *out);

// # Safety
// `report` must be null or a handle not yet freed.
void mf_report_free(struct MfReport *report);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* MONOFEM_H */
