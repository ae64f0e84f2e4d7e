#ifndef IONSQZ_H
#define IONSQZ_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stddef.h>
#include <stdint.h>

typedef enum IonsqzStatus {
  IONSQZ_STATUS_OK = 0,
  IONSQZ_STATUS_INVALID_INPUT = 1,
  IONSQZ_STATUS_NUMERICAL = 2,
  IONSQZ_STATUS_IO = 3,
  IONSQZ_STATUS_NULL_POINTER = 4,
  IONSQZ_STATUS_BUFFER_TOO_SMALL = 5,
  IONSQZ_STATUS_PANIC = 6,
} IonsqzStatus;

/**
 * Motional state handle.
 */
typedef struct IonsqzState IonsqzState;

/**
 * Harmonic approximation of the dressed trap.
 */
typedef struct IonsqzDerived {
  double omega_e;
  double eta_e;
  double g_rate;
  double sigma_ratio;
  double frame_squeeze;
} IonsqzDerived;

/**
 * Heralded X-state preparation result.
 */
typedef struct IonsqzOutcome {
  /**
   * 0 for `g`, 1 for `e`.
   */
  int32_t branch;
  /**
   * 0 for the even state `X+`, 1 for the odd state `X-`.
   */
  int32_t parity;
  double probability;
  double fidelity;
} IonsqzOutcome;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Library version as a static NUL-terminated string.
 */
const char *ionsqz_version(void);

/**
 * Byte length of the last error message on this thread, without the NUL.
 */
size_t ionsqz_last_error_length(void);

/**
 * Copy the last error message into `buf` (NUL-terminated, truncated to
 * `len - 1` bytes). Returns the full message length.
 *
 * # Safety
 * `buf` must be null or point to `len` writable bytes.
 */
size_t ionsqz_last_error_message(char *buf, size_t len);

/**
 * Dressed-trap frequency, Lamb-Dicke parameter and squeezing rate.
 *
 * # Safety
 * `out` must be null or valid for writes.
 */
enum IonsqzStatus ionsqz_derive_params(double omega_t,
                                       double eta_g,
                                       double phi,
                                       double epsilon,
                                       struct IonsqzDerived *out);

/**
 * Normalized state from amplitude arrays of length `dim`.
 *
 * # Safety
 * `re` and `im` must point to `dim` readable doubles; `out` must be valid.
 */
enum IonsqzStatus ionsqz_state_from_amplitudes(const double *re,
                                               const double *im,
                                               size_t dim,
                                               struct IonsqzState **out);

/**
 * Squeezed vacuum `S(r e^{iθ})|0⟩` on `dim` Fock states.
 *
 * # Safety
 * `out` must be valid for writes.
 */
enum IonsqzStatus ionsqz_state_squeezed(double r,
                                        double theta,
                                        size_t dim,
                                        struct IonsqzState **out);

/**
 * `|X±(r)⟩`; `parity` is 0 for even, 1 for odd.
 *
 * # Safety
 * `out` must be valid for writes.
 */
enum IonsqzStatus ionsqz_state_xstate(int32_t parity,
                                      double r,
                                      size_t dim,
                                      struct IonsqzState **out);

/**
 * Release a state; null is ignored.
 *
 * # Safety
 * `state` must come from this library and not be used afterwards.
 */
void ionsqz_state_free(struct IonsqzState *state);

/**
 * Number of Fock states, or 0 for null.
 *
 * # Safety
 * `state` must be null or a live handle.
 */
size_t ionsqz_state_dim(const struct IonsqzState *state);

/**
 * Copy amplitudes out; `len` must be at least the state dimension.
 *
 * # Safety
 * `re`, `im` must point to `len` writable doubles.
 */
enum IonsqzStatus ionsqz_state_amplitudes(const struct IonsqzState *state,
                                          double *re,
                                          double *im,
                                          size_t len);

/**
 * `⟨a|b⟩`.
 *
 * # Safety
 * Handles must be live; `re`, `im` valid for writes.
 */
enum IonsqzStatus ionsqz_state_inner(const struct IonsqzState *a,
                                     const struct IonsqzState *b,
                                     double *re,
                                     double *im);

/**
 * Closed-form characteristic function `C±(x, p)` of `|X±(r)⟩`.
 *
 * # Safety
 * `out` must be valid for writes.
 */
enum IonsqzStatus ionsqz_charfun_closed(int32_t parity, double r, double x, double p, double *out);

/**
 * `⟨ψ|D(x + ip)|ψ⟩` on a uniform grid, row-major with `x` slow.
 *
 * # Safety
 * `re`, `im` must point to `nx * np` writable doubles.
 */
enum IonsqzStatus ionsqz_charfun_numeric(const struct IonsqzState *state,
                                         double x_start,
                                         double x_stop,
                                         size_t nx,
                                         double p_start,
                                         double p_stop,
                                         size_t np,
                                         double *re,
                                         double *im);

/**
 * Diagonal zeros `x > 0` of `C±`. `count` receives the number found; when it
 * exceeds `cap`, nothing is written and `BufferTooSmall` is returned.
 *
 * # Safety
 * `out` must point to `cap` writable doubles; `count` valid for writes.
 */
enum IonsqzStatus ionsqz_diagonal_zeros(int32_t parity,
                                        double r,
                                        double u_max,
                                        double du,
                                        double *out,
                                        size_t cap,
                                        size_t *count);

/**
 * Run the ideal X-state protocol and measure the qubit with `seed`.
 * `out_state` (optional) receives the heralded motional state.
 *
 * # Safety
 * `out` must be valid; `out_state` null or valid for writes.
 */
enum IonsqzStatus ionsqz_prepare_xstate(double r,
                                        size_t dim,
                                        uint64_t seed,
                                        struct IonsqzOutcome *out,
                                        struct IonsqzState **out_state);

/**
 * Run a TOML scenario config into `out_dir`, as `ionsqz run` does.
 *
 * # Safety
 * Both arguments must be NUL-terminated strings.
 */
enum IonsqzStatus ionsqz_run_scenario(const char *config_path, const char *out_dir);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* IONSQZ_H */
