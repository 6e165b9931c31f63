#ifndef AFGAME_H
#define AFGAME_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum AfgStatus {
  AFG_STATUS_OK = 0,
  AFG_STATUS_NULL_POINTER = 1,
  AFG_STATUS_INVALID_ARGUMENT = 2,
  AFG_STATUS_CONFIG = 3,
  AFG_STATUS_NUMERICAL = 4,
  AFG_STATUS_IO = 5,
  AFG_STATUS_BUFFER_TOO_SMALL = 6,
  AFG_STATUS_PANIC = 7,
} AfgStatus;

/**
 * Which sensitivities and which model of player B enter a variance.
 */
typedef enum AfgKind {
  /**
   * B's actual control with the true sensitivities.
   */
  AFG_KIND_TRUE = 0,
  /**
   * A's model of B with the proxy sensitivities.
   */
  AFG_KIND_PROXY = 1,
} AfgKind;

/**
 * A configured game with its belief-averaged coefficients.
 */
typedef struct AfgGame AfgGame;

/**
 * Result of the alignment-faking optimization on one game.
 */
typedef struct AfgSolution AfgSolution;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Library version as a static NUL-terminated string.
 */
const char *afg_version(void);

/**
 * Message of the last failing call on this thread; empty if none. The
 * pointer stays valid until the next failing call on the same thread.
 */
const char *afg_last_error(void);

/**
 * Builds a game from a JSON config; `config_json` may be null for the
 * defaults.
 *
 * # Safety
 * `config_json` must be null or a valid NUL-terminated string; `out_game` must
 * be a valid pointer to writable storage for one handle.
 */
enum AfgStatus afg_game_new(const char *config_json, struct AfgGame **out_game);

/**
 * # Safety
 * `game` must be null or a handle from [`afg_game_new`] not yet freed.
 */
void afg_game_free(struct AfgGame *game);

/**
 * Number of grid intervals.
 *
 * # Safety
 * `game` must be a live handle and `steps` writable.
 */
enum AfgStatus afg_game_steps(const struct AfgGame *game, size_t *steps);

/**
 * Full-information `theta_A`, `theta_B` at the grid nodes, each node as a
 * row-major 2x2 block. Both buffers need `4 * (steps + 1)` entries.
 *
 * # Safety
 * `game` must be a live handle; `theta_a` and `theta_b` must point to `len`
 * writable doubles each.
 */
enum AfgStatus afg_game_riccati(const struct AfgGame *game,
                                double *theta_a,
                                double *theta_b,
                                size_t len);

/**
 * Asymptotic variance of `m_B` under baseline play. `ridged` may be null.
 *
 * # Safety
 * `game` must be a live handle; `value` writable; `ridged` null or writable.
 */
enum AfgStatus afg_game_baseline_variance(const struct AfgGame *game,
                                          enum AfgKind kind,
                                          double *value,
                                          bool *ridged);

/**
 * Runs the alignment-faking optimization with the game's configuration.
 *
 * # Safety
 * `game` must be a live handle and `out_solution` writable.
 */
enum AfgStatus afg_optimize(const struct AfgGame *game, struct AfgSolution **out_solution);

/**
 * # Safety
 * `solution` must be null or a handle from [`afg_optimize`] not yet freed.
 */
void afg_solution_free(struct AfgSolution *solution);

/**
 * Final `z`, iteration count and convergence flag. Any output may be null.
 *
 * # Safety
 * `solution` must be a live handle; `z` null or two writable doubles.
 */
enum AfgStatus afg_solution_summary(const struct AfgSolution *solution,
                                    double *z,
                                    size_t *iterations,
                                    bool *converged,
                                    double *value);

/**
 * Asymptotic variance of `m_B` with A playing the AF control.
 *
 * # Safety
 * `game` and `solution` must be live handles with `solution` obtained from
 * `game`; `value` writable; `ridged` null or writable.
 */
enum AfgStatus afg_solution_variance(const struct AfgGame *game,
                                     const struct AfgSolution *solution,
                                     enum AfgKind kind,
                                     double *value,
                                     bool *ridged);

/**
 * Runs the validation suite at default sizes.
 *
 * # Safety
 * `passed` must be writable; `failed_checks` null or writable.
 */
enum AfgStatus afg_validate(uint64_t seed, bool *passed, size_t *failed_checks);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* AFGAME_H */
