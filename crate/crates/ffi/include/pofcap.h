#ifndef POFCAP_H
#define POFCAP_H

#pragma once

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

#define POFCAP_OK 0

// A required pointer argument was null or a buffer was too small.
#define POFCAP_ERR_ARGUMENT 1

// Bad configuration, missing file or invalid UTF-8.
#define POFCAP_ERR_CONFIG 2

// Malformed data file.
#define POFCAP_ERR_FORMAT 3

// Joint sets or dimensions do not match.
#define POFCAP_ERR_MISMATCH 4

// The solver could not produce a result.
#define POFCAP_ERR_NUMERIC 5

// A Rust panic was caught at the boundary.
#define POFCAP_ERR_PANIC 6

// The outcome of fitting one frame.
typedef struct PofcapFitResult PofcapFitResult;

// A fitter bound to a model and its priors.
typedef struct PofcapFitter PofcapFitter;

// An opened sequence directory.
typedef struct PofcapSequence PofcapSequence;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Library version as a static NUL-terminated string.
const char *pofcap_version(void);

// Message for the last failed call on this thread, or null.
const char *pofcap_last_error(void);

// Generate a synthetic sequence directory from a JSON configuration.
//
// # Safety
// `config_json` and `out_dir` must be null or NUL-terminated strings.
int32_t pofcap_synth(const char *config_json, const char *out_dir);

// Open a sequence directory written by `pofcap_synth` or the CLI.
//
// # Safety
// `dir` must be null or a NUL-terminated string; `out` must be null or writable.
int32_t pofcap_sequence_open(const char *dir, struct PofcapSequence **out);

// Number of frames, or 0 for a null handle.
//
// # Safety
// `seq` must be null or a live handle.
size_t pofcap_sequence_len(const struct PofcapSequence *seq);

// Number of joints of the sequence's model, or 0 for a null handle.
//
// # Safety
// `seq` must be null or a live handle.
size_t pofcap_sequence_joint_count(const struct PofcapSequence *seq);

// Copy the ground-truth joints of `frame` as `x, y, z` triples (cm).
//
// # Safety
// `seq` must be a live handle; `xyz` must hold `capacity` doubles.
int32_t pofcap_sequence_ground_truth(const struct PofcapSequence *seq,
                                     size_t frame,
                                     double *xyz,
                                     size_t capacity);

// # Safety
// `seq` must be null or a handle from `pofcap_sequence_open`, not yet freed.
void pofcap_sequence_free(struct PofcapSequence *seq);

// Create a fitter for the sequence's model and priors. `config_json` may
// be null for defaults; the model and camera always come from the sequence.
//
// # Safety
// `seq` must be a live handle; `config_json` null or NUL-terminated; `out` writable.
int32_t pofcap_fitter_new(const struct PofcapSequence *seq,
                          const char *config_json,
                          struct PofcapFitter **out);

// # Safety
// `fitter` must be null or a handle from `pofcap_fitter_new`, not yet freed.
void pofcap_fitter_free(struct PofcapFitter *fitter);

// Fit one frame of `seq` from scratch.
//
// # Safety
// `fitter` and `seq` must be live handles; `out` must be writable.
int32_t pofcap_fit_frame(const struct PofcapFitter *fitter,
                         const struct PofcapSequence *seq,
                         size_t frame,
                         struct PofcapFitResult **out);

// Final objective value, or NaN for a null handle.
//
// # Safety
// `result` must be null or a live handle.
double pofcap_result_cost(const struct PofcapFitResult *result);

// Whether the solver converged: 1, 0, or -1 for a null handle.
//
// # Safety
// `result` must be null or a live handle.
int32_t pofcap_result_converged(const struct PofcapFitResult *result);

// Number of joints, or 0 for a null handle.
//
// # Safety
// `result` must be null or a live handle.
size_t pofcap_result_joint_count(const struct PofcapFitResult *result);

// Copy fitted joints as `x, y, z` triples (cm).
//
// # Safety
// `result` must be a live handle; `xyz` must hold `capacity` doubles.
int32_t pofcap_result_joints(const struct PofcapFitResult *result, double *xyz, size_t capacity);

// Fitted parameters as JSON; release with `pofcap_string_free`.
//
// # Safety
// `result` must be a live handle; `out` must be writable.
int32_t pofcap_result_params_json(const struct PofcapFitResult *result, char **out);

// # Safety
// `result` must be null or a handle from `pofcap_fit_frame`, not yet freed.
void pofcap_result_free(struct PofcapFitResult *result);

// # Safety
// `s` must be null or a string returned by this library, not yet freed.
void pofcap_string_free(char *s);

// Mean per-joint position error between two `x, y, z` arrays of `joints`
// points, optionally after aligning joint `root`.
//
// # Safety
// `pred` and `gt` must hold `3 * joints` doubles; `out` must be writable.
int32_t pofcap_mpjpe(const double *pred,
                     const double *gt,
                     size_t joints,
                     size_t root,
                     bool align_root,
                     double *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* POFCAP_H */
