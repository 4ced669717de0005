#ifndef EMS_EQUITY_H
#define EMS_EQUITY_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stddef.h>
#include <stdint.h>
#include <stdbool.h>

/*
 Status codes.
 */
typedef enum EqStatus {
  EQ_STATUS_OK = 0,
  EQ_STATUS_NULL_POINTER = 1,
  EQ_STATUS_INVALID_INPUT = 2,
  EQ_STATUS_DOMAIN = 3,
  EQ_STATUS_CONFIG = 4,
  EQ_STATUS_UNDEFINED_MEDIAN = 5,
  EQ_STATUS_RANK_DEFICIENT = 6,
  EQ_STATUS_SEPARATION = 7,
  EQ_STATUS_IO = 8,
  EQ_STATUS_PARSE = 9,
  EQ_STATUS_PANIC = 10,
} EqStatus;

/*
 A fitted logistic model. Opaque to C.
 */
typedef struct EqModel EqModel;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/*
 Great-circle distance in miles on a 3959-mile sphere.

 # Safety
 `out_miles` must be null or valid for one write.
 */
enum EqStatus eq_great_circle_miles(double lat1,
                                    double lon1,
                                    double lat2,
                                    double lon2,
                                    double *out_miles);

/*
 Upper-tail probability of a chi-square variable with `df` degrees of freedom.

 # Safety
 `out_p` must be null or valid for one write.
 */
enum EqStatus eq_chi_square_sf(double x, uint32_t df, double *out_p);

/*
 Median income bracket (1..6) from six filer counts.

 # Safety
 `counts` must be null or valid for six reads; `out_bracket` for one write.
 */
enum EqStatus eq_assign_bracket(const uint64_t *counts, uint8_t *out_bracket);

/*
 Fits a dummy-coded logistic model of `outcomes` (0 or non-zero) on
 `brackets` (1..6). `reference` is the omitted bracket, or 0 for the
 lowest bracket present.

 # Safety
 `brackets` and `outcomes` must be valid for `n` reads; `out_model` for one write.
 */
enum EqStatus eq_model_fit(const uint8_t *brackets,
                           const uint8_t *outcomes,
                           size_t n,
                           uint8_t reference,
                           struct EqModel **out_model);

/*
 Fitted probability for a bracket in the model.

 # Safety
 `model` must come from [`eq_model_fit`]; `out_p` must be valid for one write.
 */
enum EqStatus eq_model_predict(const struct EqModel *model, uint8_t bracket_index, double *out_p);

/*
 Copies up to `capacity` coefficients (intercept first, then one per
 non-reference bracket in ascending order) and stores the full count in
 `out_len`. Pass `capacity` 0 to query the count.

 # Safety
 `model` must come from [`eq_model_fit`]; `out` must be valid for
 `capacity` writes; `out_len` for one write.
 */
enum EqStatus eq_model_coefficients(const struct EqModel *model,
                                    double *out,
                                    size_t capacity,
                                    size_t *out_len);

/*
 Whether the fit met its convergence criteria.

 # Safety
 `model` must come from [`eq_model_fit`]; `out` must be valid for one write.
 */
enum EqStatus eq_model_converged(const struct EqModel *model, bool *out);

/*
 Releases a model. Null is ignored.

 # Safety
 `model` must be null or come from [`eq_model_fit`] and not be freed twice.
 */
void eq_model_free(struct EqModel *model);

/*
 Hosmer-Lemeshow statistic with one group per bracket.

 # Safety
 `model` must come from [`eq_model_fit`]; the arrays must be valid for `n`
 reads; each out-pointer for one write.
 */
enum EqStatus eq_hosmer_lemeshow(const struct EqModel *model,
                                 const uint8_t *brackets,
                                 const uint8_t *outcomes,
                                 size_t n,
                                 double *out_chi2,
                                 uint32_t *out_df,
                                 double *out_p);

/*
 Runs the full analysis described by a configuration file and writes the
 outputs under `out_dir`.

 # Safety
 Both arguments must be valid NUL-terminated strings.
 */
enum EqStatus eq_analyze(const char *config_path, const char *out_dir);

/*
 Copies the calling thread's last error message into `buf` (truncated and
 NUL-terminated) and returns the buffer size needed for the whole message,
 including the terminator.

 # Safety
 `buf` must be null or valid for `capacity` writes.
 */
size_t eq_last_error_message(char *buf, size_t capacity);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* EMS_EQUITY_H */
