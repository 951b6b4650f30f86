#ifndef HTRACK_H
#define HTRACK_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdbool.h>
#include <stdint.h>

#define HT_FIELD_FIRST_NAME (1 << 0)

#define HT_FIELD_MIDDLE_NAME (1 << 1)

#define HT_FIELD_LAST_NAME (1 << 2)

#define HT_FIELD_ADDRESS (1 << 3)

#define HT_FIELD_PIN_CODE (1 << 4)

#define HT_FIELD_DATE_OF_BIRTH (1 << 5)

#define HT_FIELD_GENDER (1 << 6)

typedef enum HtStatus {
  HT_STATUS_OK = 0,
  HT_STATUS_NULL_ARGUMENT = 1,
  HT_STATUS_INVALID_UTF8 = 2,
  /**
   * Malformed track, scenario, application or log text.
   */
  HT_STATUS_PARSE = 3,
  /**
   * Well-formed input with values out of range.
   */
  HT_STATUS_INVALID = 4,
  HT_STATUS_SIMULATION = 5,
  /**
   * A Rust panic was caught at the boundary.
   */
  HT_STATUS_INTERNAL = 6,
} HtStatus;

typedef enum HtVerdict {
  HT_VERDICT_PASSED = 0,
  HT_VERDICT_FAILED = 1,
  HT_VERDICT_UNDECIDED = 2,
} HtVerdict;

typedef enum HtFailReason {
  HT_FAIL_REASON_NONE = 0,
  HT_FAIL_REASON_SENSORS_MISALIGNED = 1,
  HT_FAIL_REASON_VEHICLE_HALT = 2,
  HT_FAIL_REASON_INCOMPLETE_DRIVE = 3,
} HtFailReason;

/**
 * Opaque result of one simulation run.
 */
typedef struct HtOutcome HtOutcome;

/**
 * Opaque parsed scenario.
 */
typedef struct HtScenario HtScenario;

/**
 * Opaque track layout.
 */
typedef struct HtTrack HtTrack;

/**
 * Link model; see `ht_link_ideal` for the lossless default.
 */
typedef struct HtLinkParams {
  double base_latency;
  double jitter;
  double drop_probability;
  uint64_t seed;
  bool in_order;
} HtLinkParams;

typedef struct HtSimOptions {
  /**
   * Simulation step in seconds; 0 selects the default.
   */
  double dt;
  bool strict_stop;
  bool strict_order;
} HtSimOptions;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message for the last failed call on this thread, or null. Valid until the
 * next call into the library on this thread.
 */
const char *ht_last_error(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *ht_version(void);

struct HtLinkParams ht_link_ideal(void);

struct HtSimOptions ht_sim_options_default(void);

/**
 * Built-in H track.
 */
enum HtStatus ht_track_default(struct HtTrack **out_track);

/**
 * Track from TOML configuration text.
 *
 * # Safety
 * `toml` must be null or a NUL-terminated string.
 */
enum HtStatus ht_track_from_toml(const char *toml, struct HtTrack **out_track);

/**
 * # Safety
 * `track` must be null or a handle from this library, not yet freed.
 */
void ht_track_free(struct HtTrack *track);

/**
 * Parses scenario text.
 *
 * # Safety
 * `source` must be null or a NUL-terminated string.
 */
enum HtStatus ht_scenario_parse(const char *source, struct HtScenario **out_scenario);

/**
 * # Safety
 * `scenario` must be null or a handle from this library, not yet freed.
 */
void ht_scenario_free(struct HtScenario *scenario);

/**
 * Runs a scenario to its verdict. `link` and `options` may be null for the
 * defaults.
 *
 * # Safety
 * Handles must come from this library; struct pointers must be null or valid.
 */
enum HtStatus ht_simulate(const struct HtTrack *track,
                          const struct HtScenario *scenario,
                          const struct HtLinkParams *link,
                          const struct HtSimOptions *options,
                          struct HtOutcome **out_outcome);

/**
 * # Safety
 * `outcome` must be null or a handle from this library, not yet freed.
 */
void ht_outcome_free(struct HtOutcome *outcome);

/**
 * Verdict, failure reason, final gate count and verdict time of a run.
 * Any output pointer may be null.
 *
 * # Safety
 * `outcome` must be a live handle; outputs must be null or writable.
 */
enum HtStatus ht_outcome_summary(const struct HtOutcome *outcome,
                                 enum HtVerdict *out_verdict,
                                 enum HtFailReason *out_reason,
                                 uint8_t *out_gate_count,
                                 double *out_end_t);

/**
 * Event log of a run as JSON lines. Free with `ht_string_free`.
 *
 * # Safety
 * `outcome` must be a live handle; `out_jsonl` must be writable.
 */
enum HtStatus ht_outcome_log(const struct HtOutcome *outcome, char **out_jsonl);

/**
 * Re-derives the verdict of a JSON-lines event log. `out_agrees` is set to
 * whether it matches the recorded end of the run (true when none is recorded).
 *
 * # Safety
 * `jsonl` must be null or NUL-terminated; outputs must be null or writable.
 */
enum HtStatus ht_replay(const char *jsonl,
                        enum HtVerdict *out_verdict,
                        enum HtFailReason *out_reason,
                        bool *out_agrees);

/**
 * Checks an application given as TOML. `today` is `YYYY-MM-DD`.
 * `out_invalid_fields` receives a mask of `HT_FIELD_*` bits, 0 when valid;
 * `out_popup` (nullable) the operator pop-up text, freed with `ht_string_free`.
 *
 * # Safety
 * String arguments must be null or NUL-terminated; outputs null or writable.
 */
enum HtStatus ht_validate_application(const char *toml,
                                      const char *today,
                                      uint32_t *out_invalid_fields,
                                      char **out_popup);

/**
 * Releases a string returned by this library. Null is ignored.
 *
 * # Safety
 * `s` must be null or a string from this library, not yet freed.
 */
void ht_string_free(char *s);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* HTRACK_H */
