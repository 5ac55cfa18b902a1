#ifndef GRIDLATTICE_H
#define GRIDLATTICE_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stdint.h>
#include <stdlib.h>

// Result code of every fallible call.
typedef enum GlStatus {
  GL_STATUS_OK = 0,
  GL_STATUS_NULL_POINTER = 1,
  GL_STATUS_INVALID_ARGUMENT = 2,
  GL_STATUS_IO = 3,
  GL_STATUS_PARSE = 4,
  GL_STATUS_INVALID_SYSTEM = 5,
  GL_STATUS_SOLVER = 6,
  GL_STATUS_NO_FAILED_REGION = 7,
  GL_STATUS_NUMERICAL = 8,
  GL_STATUS_PANIC = 9,
} GlStatus;

// Outcome of a dichotomy run.
typedef struct GlLedger GlLedger;

// A loaded system together with its OPF engine and shedding cache.
typedef struct GlSystem GlSystem;

// Stopping rule for [`gl_dichotomy_run`]. Unused rules are switched off
// with `has_dn = false`, `max_opf = 0` and `mixed_mass <= 0`; at least one
// must be active.
typedef struct GlStopCriteria {
  bool has_dn;
  // Stop once the average probability of the last failed lattices is
  // below `10^-dn`.
  int32_t dn;
  uint64_t max_opf;
  double mixed_mass;
} GlStopCriteria;

// One entry of the failed-lattice table.
typedef struct GlFailedLattice {
  double shed_mw;
  double probability;
  // Number of free components, so the lattice holds `2^num_states_log2` states.
  uint32_t num_states_log2;
  // Number of components failed in the minimum element.
  uint32_t min_failed_count;
} GlFailedLattice;

// Reliability indices. `beta` is NaN when undefined and `eens` is NaN
// when the method does not estimate it.
typedef struct GlIndexReport {
  double lolp;
  double eens;
  double eens_stderr;
  double beta;
  uint64_t opf_evaluations;
  uint64_t samples;
} GlIndexReport;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message describing the last failure on this thread, or an empty string.
// The pointer stays valid until the next call into this library on the
// same thread.
const char *gl_last_error_message(void);

// Library version as a static NUL-terminated string.
const char *gl_version(void);

// Loads a system from a JSON file, or a bundled fixture by name
// (`rbts`, `rbts-rated`, `rts79`, `rts79-continuous`).
//
// # Safety
// `source` must be a NUL-terminated string and `out_system` a valid pointer.
enum GlStatus gl_system_load(const char *source, struct GlSystem **out_system);

// Parses a system from a JSON document held in memory.
//
// # Safety
// `json` must be a NUL-terminated string and `out_system` a valid pointer.
enum GlStatus gl_system_from_json(const char *json, struct GlSystem **out_system);

// Releases a system. Null is ignored.
//
// # Safety
// `system` must come from this library and not be used afterwards.
void gl_system_free(struct GlSystem *system);

// Number of components (generators then lines); valid ids are `1..=n`.
//
// # Safety
// Pointers must be valid.
enum GlStatus gl_system_component_count(const struct GlSystem *system, uintptr_t *out_count);

// Probability of the state with exactly `failed_ids` failed.
//
// # Safety
// `failed_ids` must point to `len` ids (may be null when `len` is 0).
enum GlStatus gl_state_probability(const struct GlSystem *system,
                                   const uintptr_t *failed_ids,
                                   uintptr_t len,
                                   double *out_probability);

// Minimum load shedding in MW of the state with `failed_ids` failed.
//
// # Safety
// `failed_ids` must point to `len` ids (may be null when `len` is 0).
enum GlStatus gl_state_shed(const struct GlSystem *system,
                            const uintptr_t *failed_ids,
                            uintptr_t len,
                            double *out_shed_mw);

// Partitions the state space by dichotomy until `stop` fires.
//
// # Safety
// Pointers must be valid.
enum GlStatus gl_dichotomy_run(const struct GlSystem *system,
                               const struct GlStopCriteria *stop,
                               bool classify_max,
                               struct GlLedger **out_ledger);

// Releases a ledger. Null is ignored.
//
// # Safety
// `ledger` must come from this library and not be used afterwards.
void gl_ledger_free(struct GlLedger *ledger);

// Analytic LOLP lower bound: the probability of the failed lattices.
//
// # Safety
// Pointers must be valid.
enum GlStatus gl_ledger_lolp(const struct GlLedger *ledger, double *out_lolp);

// Probability mass still unclassified.
//
// # Safety
// Pointers must be valid.
enum GlStatus gl_ledger_mixed_mass(const struct GlLedger *ledger, double *out_mass);

// OPF evaluations spent by the run.
//
// # Safety
// Pointers must be valid.
enum GlStatus gl_ledger_opf_count(const struct GlLedger *ledger, uint64_t *out_count);

// Number of failed lattices found.
//
// # Safety
// Pointers must be valid.
enum GlStatus gl_ledger_failed_count(const struct GlLedger *ledger, uintptr_t *out_count);

// Failed lattice `index` in discovery order. When `ids` is non-null, up to
// `capacity` failed ids of its minimum element are copied into it.
//
// # Safety
// `ids` must have room for `capacity` values when non-null.
enum GlStatus gl_ledger_failed_lattice(const struct GlLedger *ledger,
                                       uintptr_t index,
                                       struct GlFailedLattice *out_lattice,
                                       uintptr_t *ids,
                                       uintptr_t capacity);

// EENS by sampling inside the failed lattices of `ledger` until the
// coefficient of variation drops below `beta`. `max_samples = 0` means no
// cap. The ledger must come from a run on `system`.
//
// # Safety
// Pointers must be valid.
enum GlStatus gl_fmcs(const struct GlSystem *system,
                      const struct GlLedger *ledger,
                      double beta,
                      uint64_t max_samples,
                      uint64_t seed,
                      struct GlIndexReport *out_report);

// Crude Monte Carlo over the whole state space until the coefficient of
// variation of EENS drops below `beta`. `max_samples = 0` means no cap.
//
// # Safety
// Pointers must be valid.
enum GlStatus gl_mcs(const struct GlSystem *system,
                     double beta,
                     uint64_t max_samples,
                     uint64_t seed,
                     struct GlIndexReport *out_report);

// State enumeration up to `max_level` simultaneous failures; a negative
// level enumerates the whole space.
//
// # Safety
// Pointers must be valid.
enum GlStatus gl_se(const struct GlSystem *system,
                    int32_t max_level,
                    struct GlIndexReport *out_report);

// Fills `out_report` with the dichotomy LOLP; EENS fields are NaN.
//
// # Safety
// Pointers must be valid.
enum GlStatus gl_ledger_report(const struct GlLedger *ledger, struct GlIndexReport *out_report);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* GRIDLATTICE_H */
