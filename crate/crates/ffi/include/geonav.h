#ifndef GEONAV_H
#define GEONAV_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

// Result code of every call.
typedef enum GeonavStatus {
  GEONAV_STATUS_OK = 0,
  GEONAV_STATUS_NULL_POINTER = 1,
  GEONAV_STATUS_INVALID_UTF8 = 2,
  GEONAV_STATUS_INVALID_ARGUMENT = 3,
  GEONAV_STATUS_IO = 4,
  GEONAV_STATUS_PARSE = 5,
  GEONAV_STATUS_SIMULATION = 6,
  GEONAV_STATUS_PANIC = 7,
} GeonavStatus;

// Controller variant selector.
typedef enum GeonavVariant {
  GEONAV_VARIANT_LTI = 0,
  GEONAV_VARIANT_LTV = 1,
  GEONAV_VARIANT_FC = 2,
} GeonavVariant;

// Spherical-harmonic coefficient set.
typedef struct GeonavModel GeonavModel;

// Outcome of one navigation run.
typedef struct GeonavResult GeonavResult;

// Loaded, validated scenario.
typedef struct GeonavScenario GeonavScenario;

// Scalar outcome of one run.
typedef struct GeonavSummary {
  // 1 when the termination test fired.
  int32_t reached;
  size_t iterations;
  size_t samples;
  double length_km;
  // Distance from the true terminal position to the destination.
  double terminal_distance_km;
  double terminal_lon;
  double terminal_lat;
  size_t fusion_events;
} GeonavSummary;

// One visited point, degrees.
typedef struct GeonavSample {
  double time_h;
  double lon;
  double lat;
  double estimate_lon;
  double estimate_lat;
  double declination;
  double inclination;
  double east_kmh;
  double north_kmh;
} GeonavSample;

// The seven field elements in nT and degrees.
typedef struct GeonavElements {
  double bx;
  double by;
  double bz;
  double bh;
  double bf;
  double d;
  double i;
} GeonavElements;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message of the last failed call on this thread; empty after a success.
// Valid until the next call on the same thread.
const char *geonav_last_error(void);

// Library version as a static string.
const char *geonav_version(void);

// Releases a string returned by this library.
//
// # Safety
// `s` is null or a pointer returned by this library and not yet freed.
void geonav_string_free(char *s);

// Loads a scenario JSON file; relative data paths resolve against its directory.
//
// # Safety
// `path` is a NUL-terminated string; `out` is writable.
enum GeonavStatus geonav_scenario_load(const char *path, struct GeonavScenario **out);

// Parses a scenario from JSON text; relative data paths resolve against `base_dir`
// (null means the current directory).
//
// # Safety
// `json` and a non-null `base_dir` are NUL-terminated strings; `out` is writable.
enum GeonavStatus geonav_scenario_from_json(const char *json,
                                            const char *base_dir,
                                            struct GeonavScenario **out);

// Overrides the random seed of a scenario.
//
// # Safety
// `sc` is a live scenario handle.
enum GeonavStatus geonav_scenario_set_seed(struct GeonavScenario *sc, uint64_t seed);

// Overrides the measurement noise standard deviation, degrees.
//
// # Safety
// `sc` is a live scenario handle.
enum GeonavStatus geonav_scenario_set_noise(struct GeonavScenario *sc, double noise_deg);

// Releases a scenario handle.
//
// # Safety
// `sc` is null or a live scenario handle.
void geonav_scenario_free(struct GeonavScenario *sc);

// Runs one navigation with the given controller variant.
//
// # Safety
// `sc` is a live scenario handle; `out` is writable.
enum GeonavStatus geonav_run(const struct GeonavScenario *sc,
                             enum GeonavVariant variant,
                             struct GeonavResult **out);

// Scalar outcome of a run.
//
// # Safety
// `res` is a live result handle; `out` is writable.
enum GeonavStatus geonav_result_summary(const struct GeonavResult *res, struct GeonavSummary *out);

// Visited point `index` of a run.
//
// # Safety
// `res` is a live result handle; `out` is writable.
enum GeonavStatus geonav_result_sample(const struct GeonavResult *res,
                                       size_t index,
                                       struct GeonavSample *out);

// Trajectory of a run as CSV text; release with [`geonav_string_free`].
//
// # Safety
// `res` is a live result handle; `out` is writable.
enum GeonavStatus geonav_result_trajectory_csv(const struct GeonavResult *res, char **out);

// Releases a result handle.
//
// # Safety
// `res` is null or a live result handle.
void geonav_result_free(struct GeonavResult *res);

// Monte Carlo ensemble; the report is JSON text released with [`geonav_string_free`].
//
// # Safety
// `sc` is a live scenario handle; `out_json` is writable.
enum GeonavStatus geonav_monte_carlo(const struct GeonavScenario *sc,
                                     enum GeonavVariant variant,
                                     size_t runs,
                                     uint64_t master_seed,
                                     char **out_json);

// The bundled WMM2020 coefficients.
//
// # Safety
// `out` is writable.
enum GeonavStatus geonav_model_wmm2020(struct GeonavModel **out);

// Parses coefficient-file text.
//
// # Safety
// `text` is a NUL-terminated string; `out` is writable.
enum GeonavStatus geonav_model_parse(const char *text, struct GeonavModel **out);

// Field elements at (lon, lat) degrees, altitude km, decimal-year date.
//
// # Safety
// `model` is a live model handle; `out` is writable.
enum GeonavStatus geonav_model_elements(const struct GeonavModel *model,
                                        double lon,
                                        double lat,
                                        double alt_km,
                                        double date,
                                        struct GeonavElements *out);

// Releases a model handle.
//
// # Safety
// `model` is null or a live model handle.
void geonav_model_free(struct GeonavModel *model);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* GEONAV_H */
