#ifndef FRESHREC_C_H
#define FRESHREC_C_H

#include <stddef.h>
#include <stdint.h>

#ifdef __cplusplus
extern "C" {
#endif

/* C surface over the freshrec engine. All functions return fr_status;
 * FR_OK is 0. On error, fr_last_error(engine) holds a message (or
 * fr_global_last_error() for calls without an engine). Returned buffers
 * are NUL-terminated text documents owned by the caller; release them
 * with fr_buffer_free. */

typedef enum fr_status {
  FR_OK = 0,
  FR_ERR_IO = 1,
  FR_ERR_CONFIG = 2,
  FR_ERR_INVALID_ARG = 3,
  FR_ERR_STATE = 4,
  FR_ERR_INTERNAL = 5
} fr_status;

typedef struct fr_engine fr_engine;

/* Creates an engine from a key=value config file and loads any artifacts
 * whose paths are present (catalog_path, events_path, store_path,
 * model_path, arms_path). */
fr_status fr_engine_create(const char* config_path, fr_engine** out);
void fr_engine_destroy(fr_engine* engine);

const char* fr_last_error(const fr_engine* engine);
const char* fr_global_last_error(void);

/* Factorizes the trailing 7-day interaction window ending at window_end
 * and writes the store to store_path when configured. */
fr_status fr_train_cf(fr_engine* engine, int64_t window_end);
/* Trains the cold-start network on the current store and writes it to
 * model_path when configured. */
fr_status fr_train_coldstart(fr_engine* engine);
/* Runs one scheduler tick at `now`; saves the arm table when configured.
 * `report_out` (optional) receives a text record describing the tick. */
fr_status fr_tick(fr_engine* engine, int64_t now, char** report_out);

/* Builds a carousel (or the view-all list) and returns the slate as a
 * text document. */
fr_status fr_carousel(fr_engine* engine, const char* user_id, int64_t now,
                      const char* policy, int view_all, char** doc_out);
/* Records that a slate was rendered; click_position < 1 means no click. */
fr_status fr_feedback(fr_engine* engine, const char* slate_id,
                      int click_position, int64_t ts);

/* Serves the HTTP API; blocks until fr_serve_stop. */
fr_status fr_serve(fr_engine* engine, const char* host, int port);
void fr_serve_stop(fr_engine* engine);

/* Generates a synthetic world from the config, replays the configured
 * policy comparison and writes the metrics report to out_path.
 * Standalone: does not need an engine handle. */
fr_status fr_simulate(const char* config_path, uint64_t seed,
                      const char* out_path);

void fr_buffer_free(char* buffer);

#ifdef __cplusplus
}
#endif

#endif /* FRESHREC_C_H */
