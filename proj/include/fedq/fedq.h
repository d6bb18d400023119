// Copyright 2026 The fedqssl Authors. All Rights Reserved.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.


/* C interface to the fedq library. All handles are opaque; every call that
 * can fail returns a fedq_status, and fedq_last_error() holds the message of
 * the most recent failure on the calling thread. Strings returned through
 * char** out-parameters are released with fedq_string_free. */

#ifndef FEDQ_FEDQ_H_
#define FEDQ_FEDQ_H_

#include <stddef.h>
#include <stdint.h>

#if defined(_WIN32)
#if defined(FEDQ_BUILDING_LIBRARY)
#define FEDQ_API __declspec(dllexport)
#else
#define FEDQ_API __declspec(dllimport)
#endif
#else
#define FEDQ_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum fedq_status {
  FEDQ_OK = 0,
  FEDQ_INVALID_ARGUMENT = 1,
  FEDQ_PARSE = 2,
  FEDQ_VALIDATION = 3,
  FEDQ_IO = 4,
  FEDQ_NUMERIC = 5,
  FEDQ_INTERNAL = 6
} fedq_status;

typedef struct fedq_config fedq_config;
typedef struct fedq_run_result fedq_run_result;

FEDQ_API const char* fedq_version(void);
FEDQ_API const char* fedq_status_string(fedq_status status);
/* Message of the last failure on this thread; empty after success. */
FEDQ_API const char* fedq_last_error(void);
FEDQ_API void fedq_string_free(char* s);

/* Reads a JSON config file and applies the FEDQ_SEED override. */
FEDQ_API fedq_status fedq_config_load(const char* path, fedq_config** out);
/* Parses JSON text. No environment override is applied. */
FEDQ_API fedq_status fedq_config_from_json(const char* json, fedq_config** out);
FEDQ_API fedq_status fedq_config_to_json(const fedq_config* cfg, char** out);
FEDQ_API void fedq_config_free(fedq_config* cfg);

/* Runs an experiment. out_dir NULL uses the config's output_dir; threads 0
 * picks min(n_clients, hardware threads). result may be NULL. */
FEDQ_API fedq_status fedq_run(const fedq_config* cfg, const char* out_dir, int threads,
                              fedq_run_result** result);
FEDQ_API int fedq_run_result_rounds(const fedq_run_result* r);
/* round 0 is the initial model. Returns NaN for an out-of-range round. */
FEDQ_API double fedq_run_result_global_loss(const fedq_run_result* r, int round);
FEDQ_API double fedq_run_result_moreau_surrogate(const fedq_run_result* r, int round);
FEDQ_API double fedq_run_result_eckart_young_loss(const fedq_run_result* r);
FEDQ_API void fedq_run_result_free(fedq_run_result* r);

/* Writes client shards and params.json into out_dir. */
FEDQ_API fedq_status fedq_datagen(const fedq_config* cfg, const char* out_dir);

/* Rate/MSE probe on clipped N(0,1). out_csv may be NULL; out_mse, if not
 * NULL, receives n_rates values. */
FEDQ_API fedq_status fedq_quantprobe(const int* rates, size_t n_rates, uint64_t samples,
                                     uint64_t seed, const char* out_csv, double* out_mse);

/* Closed-form optimum report as text. */
FEDQ_API fedq_status fedq_oracle(const fedq_config* cfg, char** report);

/* Summarizes metrics_csv; writes long-format CSV to long_out if not NULL. */
FEDQ_API fedq_status fedq_report(const char* metrics_csv, const char* long_out, char** summary);

#ifdef __cplusplus
}
#endif

#endif /* FEDQ_FEDQ_H_ */
