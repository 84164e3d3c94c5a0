#ifndef ODA_H
#define ODA_H

/* Generated by cbindgen; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum OdaStatus {
  ODA_STATUS_OK = 0,
  ODA_STATUS_NULL_ARGUMENT = 1,
  ODA_STATUS_INVALID_UTF8 = 2,
  ODA_STATUS_INVALID_ARGUMENT = 3,
  ODA_STATUS_NO_DATASET = 4,
  /**
   * The question cannot be answered; see the error message.
   */
  ODA_STATUS_REJECTED = 5,
  /**
   * The datalake, graph store or LLM endpoint failed.
   */
  ODA_STATUS_UNAVAILABLE = 6,
  ODA_STATUS_NOT_FOUND = 7,
  ODA_STATUS_INTERNAL = 8,
} OdaStatus;

/**
 * Opaque backend handle.
 */
typedef struct OdaBackend OdaBackend;

/**
 * Creates a backend from TOML config text (NULL for defaults).
 *
 * # Safety
 * `config_toml` is NULL or a valid C string; `out` is a valid pointer.
 */
enum OdaStatus oda_backend_new(const char *config_toml, struct OdaBackend **out);

/**
 * # Safety
 * `backend` is NULL or a handle from [`oda_backend_new`] not yet freed.
 */
void oda_backend_free(struct OdaBackend *backend);

/**
 * Message of the last failed call on `backend`; empty when none. Valid
 * until the next call on the same handle.
 *
 * # Safety
 * `backend` is NULL or a live handle.
 */
const char *oda_last_error(const struct OdaBackend *backend);

/**
 * Selects a local columnar dataset: `root` holds the topology and
 * metadata, `root/subset` the telemetry.
 *
 * # Safety
 * `backend` is a live handle; `root` and `subset` are valid C strings.
 */
enum OdaStatus oda_select_dataset(struct OdaBackend *backend, const char *root, const char *subset);

/**
 * Answers `question`; on success `*out_json` receives the response as JSON.
 *
 * # Safety
 * `backend` is a live handle; `question` is a valid C string; `out_json`
 * is a valid pointer.
 */
enum OdaStatus oda_ask(struct OdaBackend *backend, const char *question, char **out_json);

/**
 * Full CSV of an earlier answer, by its response id.
 *
 * # Safety
 * `backend` is a live handle; `id` is a valid C string; `out_csv` is a
 * valid pointer.
 */
enum OdaStatus oda_result_csv(struct OdaBackend *backend, const char *id, char **out_csv);

/**
 * Runs the query refinement rules over raw generator output. The report
 * (refined text, applied rules, unresolved issues) is written as JSON.
 *
 * # Safety
 * `raw` is a valid C string; `out_json` is a valid pointer.
 */
enum OdaStatus oda_refine(const char *raw, char **out_json);

/**
 * # Safety
 * `s` is NULL or a string returned by this library, not yet freed.
 */
void oda_string_free(char *s);

const char *oda_version(void);

#endif  /* ODA_H */
