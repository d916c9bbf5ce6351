/* Copyright Contributors to the rayrope project
 * SPDX-License-Identifier: Apache-2.0
 *
 * C API of the rayrope shared library. All functions return rayrope_status;
 * on failure rayrope_last_error() holds a message for the calling thread.
 * Strings returned through char** are heap-allocated; release them with
 * rayrope_string_free().
 */

#ifndef RAYROPE_CAPI_H
#define RAYROPE_CAPI_H

#ifdef __cplusplus
extern "C" {
#endif

typedef enum {
    RAYROPE_OK = 0,
    RAYROPE_ERR_CONFIG = 2,  /* bad configuration, arguments, or input files */
    RAYROPE_ERR_RUNTIME = 3  /* runtime or numeric failure                   */
} rayrope_status;

/* Opaque configuration handle: a JSON document with strict key checking. */
typedef struct rayrope_config rayrope_config;

rayrope_status rayrope_config_new(rayrope_config** out);
rayrope_status rayrope_config_load(const char* json_path, rayrope_config** out);
/* assignment is "dotted.key=value"; value parsed as JSON, else as a string. */
rayrope_status rayrope_config_set(rayrope_config* cfg, const char* assignment);
rayrope_status rayrope_config_json(const rayrope_config* cfg, char** out_json);
rayrope_status rayrope_config_hash(const rayrope_config* cfg, char** out_hash);
void rayrope_config_free(rayrope_config* cfg);

void rayrope_string_free(char* s);
const char* rayrope_last_error(void);
const char* rayrope_version(void);

/* Commands mirror the CLI subcommands. Each writes its artifacts to disk and
 * returns a one-object JSON summary through out_summary (may be NULL).
 * rayrope_cmd_grad_check returns RAYROPE_ERR_RUNTIME when the check fails. */
rayrope_status rayrope_cmd_gen_data(const rayrope_config* cfg, char** out_summary);
rayrope_status rayrope_cmd_train(const rayrope_config* cfg, char** out_summary);
rayrope_status rayrope_cmd_eval(const rayrope_config* cfg, char** out_summary);
rayrope_status rayrope_cmd_similarity_sweep(const rayrope_config* cfg, char** out_summary);
rayrope_status rayrope_cmd_bench(const rayrope_config* cfg, char** out_summary);
rayrope_status rayrope_cmd_grad_check(const rayrope_config* cfg, char** out_summary);
rayrope_status rayrope_cmd_dump_depth(const rayrope_config* cfg, char** out_summary);

#ifdef __cplusplus
}
#endif

#endif /* RAYROPE_CAPI_H */
