/* C interface to the c2lab core. Objects are opaque handles owned by the
 * caller and released with the matching *_free function. Every call that can
 * fail returns a c2lab_status; the message of the last failure on the calling
 * thread is available from c2lab_last_error(). */
#ifndef C2LAB_H
#define C2LAB_H

#include <stddef.h>
#include <stdint.h>

#ifdef __cplusplus
extern "C" {
#endif

#if defined(_WIN32)
#define C2LAB_API __declspec(dllexport)
#else
#define C2LAB_API __attribute__((visibility("default")))
#endif

typedef enum c2lab_status {
  C2LAB_OK = 0,
  C2LAB_E_INVALID_ARGUMENT = 1,
  C2LAB_E_PARSE = 2,
  C2LAB_E_IO = 3,
  C2LAB_E_CONFIG = 4,
  C2LAB_E_SHAPE_MISMATCH = 5,
  C2LAB_E_PROTOCOL = 6,
  C2LAB_E_INTERNAL = 7
} c2lab_status;

#define C2LAB_FEATURES 20

typedef struct c2lab_config c2lab_config;
typedef struct c2lab_dataset c2lab_dataset;
typedef struct c2lab_detector c2lab_detector;
typedef struct c2lab_plans c2lab_plans;

C2LAB_API const char* c2lab_version(void);
/* Empty string when the last call on this thread succeeded. */
C2LAB_API const char* c2lab_last_error(void);
C2LAB_API void c2lab_string_free(char* s);

/* Experiment configuration (JSON). */
C2LAB_API c2lab_status c2lab_config_default(c2lab_config** out);
C2LAB_API c2lab_status c2lab_config_load(const char* path, c2lab_config** out);
C2LAB_API c2lab_status c2lab_config_parse(const char* json_text, c2lab_config** out);
C2LAB_API c2lab_status c2lab_config_set_seed(c2lab_config* cfg, uint64_t seed);
C2LAB_API c2lab_status c2lab_config_to_json(const c2lab_config* cfg, char** out);
C2LAB_API void c2lab_config_free(c2lab_config* cfg);

/* Datasets. `provenance` is one of regular, stuff50, stuffRand, fixed3Req,
 * randReq, advFramework, advPayload, advTwoSide, web. Adversarial provenances
 * need a plan library. */
C2LAB_API c2lab_status c2lab_dataset_generate(const c2lab_config* cfg, const char* provenance, const char* split,
                                              size_t flows, const c2lab_plans* plans, c2lab_dataset** out);
/* Like generate, and also writes the capture and the JSON event log (either path may be NULL). */
C2LAB_API c2lab_status c2lab_dataset_simulate(const c2lab_config* cfg, const char* provenance, const char* split,
                                              size_t flows, const c2lab_plans* plans, const char* pcap_path,
                                              const char* event_log_path, c2lab_dataset** out);
/* Extracts AppData record-size features from a classic pcap, labelling every flow with `provenance`. */
C2LAB_API c2lab_status c2lab_dataset_from_pcap(const char* pcap_path, const char* provenance, c2lab_dataset** out);
C2LAB_API c2lab_status c2lab_dataset_read_csv(const char* path, c2lab_dataset** out);
C2LAB_API c2lab_status c2lab_dataset_write_csv(const c2lab_dataset* ds, const char* path);
C2LAB_API c2lab_status c2lab_dataset_append(c2lab_dataset* dst, const c2lab_dataset* src);
C2LAB_API size_t c2lab_dataset_size(const c2lab_dataset* ds);
/* Copies sample `index`; label is 0 for c2, 1 for web. */
C2LAB_API c2lab_status c2lab_dataset_sample(const c2lab_dataset* ds, size_t index, double features[C2LAB_FEATURES],
                                            int* label);
C2LAB_API void c2lab_dataset_free(c2lab_dataset* ds);

/* Detector training uses the config's training section; `seed` overrides its seed. */
C2LAB_API c2lab_status c2lab_detector_train(const c2lab_config* cfg, const c2lab_dataset* ds, uint64_t seed,
                                            c2lab_detector** out);
C2LAB_API c2lab_status c2lab_detector_load(const char* path, c2lab_detector** out);
C2LAB_API c2lab_status c2lab_detector_save(const c2lab_detector* det, const char* path);
/* Writes one label per sample into `labels` (capacity c2lab_dataset_size). */
C2LAB_API c2lab_status c2lab_detector_predict(const c2lab_detector* det, const c2lab_dataset* ds, int* labels);
/* Probability of C2 for one raw feature vector (-1 for padding). */
C2LAB_API c2lab_status c2lab_detector_score(const c2lab_detector* det, const double features[C2LAB_FEATURES],
                                            double* p_c2);
C2LAB_API void c2lab_detector_free(c2lab_detector* det);

typedef struct c2lab_eval_result {
  size_t total;
  size_t correct;
  double accuracy;
  size_t c2_total;
  size_t c2_evaded;
  double evasion_rate; /* 0 when the dataset has no C2 samples */
} c2lab_eval_result;

C2LAB_API c2lab_status c2lab_evaluate(const c2lab_detector* det, const c2lab_dataset* ds, c2lab_eval_result* out);

/* FGSM plan library from the C2 samples of `source`. */
C2LAB_API c2lab_status c2lab_plans_build(const c2lab_detector* det, const c2lab_dataset* source, double epsilon,
                                         c2lab_plans** out);
C2LAB_API c2lab_status c2lab_plans_load(const char* path, c2lab_plans** out);
C2LAB_API c2lab_status c2lab_plans_save(const c2lab_plans* plans, const char* path);
C2LAB_API size_t c2lab_plans_size(const c2lab_plans* plans);
C2LAB_API void c2lab_plans_free(c2lab_plans* plans);

typedef struct c2lab_overhead_summary {
  uint64_t regular_appdata_bytes;
  uint64_t adversarial_appdata_bytes;
  uint64_t regular_wire_bytes;
  uint64_t adversarial_wire_bytes;
  size_t regular_connections;
  size_t adversarial_connections;
  double regular_runtime;
  double adversarial_runtime;
} c2lab_overhead_summary;

/* Runs the 12-command overhead script; exports report files into `out_dir` unless NULL. */
C2LAB_API c2lab_status c2lab_run_overhead(const c2lab_config* cfg, const c2lab_plans* plans, size_t repetitions,
                                          const char* out_dir, c2lab_overhead_summary* out);

/* Full experiment: both threat models and overhead, per the config switches.
 * Persists datasets, predictions, models and plans, then exports the report into `out_dir`. */
C2LAB_API c2lab_status c2lab_run_experiment(const c2lab_config* cfg, const char* out_dir);

#ifdef __cplusplus
}
#endif

#endif
