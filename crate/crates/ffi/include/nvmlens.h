#ifndef NVMLENS_H
#define NVMLENS_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum NvmStatus {
  NVM_STATUS_OK = 0,
  NVM_STATUS_NULL_ARGUMENT = 1,
  NVM_STATUS_INVALID_ARGUMENT = 2,
  NVM_STATUS_IO = 3,
  NVM_STATUS_PARSE = 4,
  NVM_STATUS_INSUFFICIENT_DATA = 5,
  NVM_STATUS_BUFFER_TOO_SMALL = 6,
  NVM_STATUS_PANIC = 7,
} NvmStatus;

typedef enum NvmTier {
  NVM_TIER_INSENSITIVE = 0,
  NVM_TIER_SCALED = 1,
  NVM_TIER_BOTTLENECKED = 2,
} NvmTier;

typedef enum NvmThrottle {
  NVM_THROTTLE_LOW = 0,
  NVM_THROTTLE_HIGH = 1,
} NvmThrottle;

typedef enum NvmStrategy {
  NVM_STRATEGY_GREEDY_DENSITY = 0,
  NVM_STRATEGY_EXACT_DP = 1,
} NvmStrategy;

/**
 * Fitted IPC model.
 */
typedef struct NvmModel NvmModel;

/**
 * Per-interval bandwidth parsed from a counter trace.
 */
typedef struct NvmTrace NvmTrace;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Copies the last error message of this thread into `buf` as a
 * NUL-terminated string and stores the full length (without NUL) in
 * `len_out`. Returns `BufferTooSmall` when the message was truncated.
 *
 * # Safety
 * `buf` must be valid for `cap` bytes (or null when `cap` is 0) and
 * `len_out` must be null or point to writable storage.
 */
enum NvmStatus nvm_last_error(char *buf, size_t cap, size_t *len_out);

/**
 * Write share of total traffic, in [0, 1].
 *
 * # Safety
 * `out` must point to writable storage.
 */
enum NvmStatus nvm_write_ratio(double read_mbps, double write_mbps, double *out);

/**
 * Sensitivity tier with default thresholds. Pass NaN for unknown inputs.
 * With a slowdown the measured tier is reported, otherwise the
 * bandwidth-only advisory label; `borderline_out` is 0 for advisory labels.
 *
 * # Safety
 * `tier_out` and `borderline_out` must point to writable storage.
 */
enum NvmStatus nvm_classify(double read_mbps,
                            double write_mbps,
                            double slowdown,
                            enum NvmTier *tier_out,
                            uint8_t *borderline_out);

/**
 * Write-throttling risk of a phase with default thresholds.
 *
 * # Safety
 * `out` must point to writable storage.
 */
enum NvmStatus nvm_throttle_risk(double avg_write_mbps, double rw_ratio, enum NvmThrottle *out);

/**
 * Sets `*out` to 1 when the uncached-NVM scaling ratio trails the DRAM
 * ratio by at least `gap_threshold`.
 *
 * # Safety
 * `out` must point to writable storage.
 */
enum NvmStatus nvm_contention(double ratio_dram,
                              double ratio_uncached,
                              double gap_threshold,
                              uint8_t *out);

/**
 * Chooses objects to keep in DRAM. `in_dram_out[i]` is set to 1 for each
 * chosen object and `captured_write_out` to the captured write share.
 *
 * # Safety
 * `sizes`, `write_shares` and `in_dram_out` must be valid for `n` elements;
 * `captured_write_out` must point to writable storage.
 */
enum NvmStatus nvm_place(const uint64_t *sizes,
                         const double *write_shares,
                         size_t n,
                         int64_t budget_bytes,
                         enum NvmStrategy strategy,
                         uint8_t *in_dram_out,
                         double *captured_write_out);

/**
 * Parses `<stem>.mem.csv`, `<stem>.core.csv` and `<stem>.meta`. `path` may
 * be the stem or the `.mem.csv` file.
 *
 * # Safety
 * `path` must be a NUL-terminated string and `out` writable.
 */
enum NvmStatus nvm_trace_open(const char *path, struct NvmTrace **out);

/**
 * # Safety
 * `trace` must come from [`nvm_trace_open`] and not be used afterwards.
 */
void nvm_trace_free(struct NvmTrace *trace);

/**
 * Number of bandwidth intervals in the trace.
 *
 * # Safety
 * `trace` must be a live handle and `out` writable.
 */
enum NvmStatus nvm_trace_len(const struct NvmTrace *trace, size_t *out);

/**
 * Copies per-interval read and write bandwidth (MB/s). Both buffers must
 * hold at least [`nvm_trace_len`] values.
 *
 * # Safety
 * `trace` must be a live handle; the buffers must be valid for `cap` values.
 */
enum NvmStatus nvm_trace_bandwidth(const struct NvmTrace *trace,
                                   double *read_out,
                                   double *write_out,
                                   size_t cap);

/**
 * Loads a model written by `nvmlens predict-train`.
 *
 * # Safety
 * `path` must be a NUL-terminated string and `out` writable.
 */
enum NvmStatus nvm_model_load(const char *path, struct NvmModel **out);

/**
 * # Safety
 * `model` must come from [`nvm_model_load`] and not be used afterwards.
 */
void nvm_model_free(struct NvmModel *model);

/**
 * Predicted IPC for one window given its six per-thread event counts and
 * the single-thread IPC.
 *
 * # Safety
 * `model` must be a live handle, `counts` valid for six values and `out`
 * writable.
 */
enum NvmStatus nvm_model_predict(const struct NvmModel *model,
                                 const double *counts,
                                 double ipc_single,
                                 double *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* NVMLENS_H */
