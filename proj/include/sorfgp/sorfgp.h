#ifndef SORFGP_SORFGP_H
#define SORFGP_SORFGP_H

#include <stddef.h>
#include <stdint.h>

#if defined(_WIN32)
#define SORFGP_API __declspec(dllexport)
#else
#define SORFGP_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

/* Status codes. They match the CLI exit codes. */
#define SORFGP_OK 0
#define SORFGP_ERR_INTERNAL 1
#define SORFGP_ERR_VALIDATION 2
#define SORFGP_ERR_NUMERICAL 3
#define SORFGP_ERR_IO 4

#define SORFGP_CALIBRATION_LEVELS 100

enum sorfgp_kernel {
  SORFGP_KERNEL_RBF = 0,
  SORFGP_KERNEL_ARCCOS1 = 1,
  SORFGP_KERNEL_FHT_CONV1D = 2,
  SORFGP_KERNEL_FAST_CONV1D = 3,
  SORFGP_KERNEL_GRAPH_RBF = 4
};

enum sorfgp_input_kind {
  SORFGP_INPUT_FIXED_VECTOR = 0,
  SORFGP_INPUT_SEQUENCE = 1,
  SORFGP_INPUT_GRAPH = 2
};

enum sorfgp_solver { SORFGP_SOLVER_PCG = 0, SORFGP_SOLVER_CG = 1, SORFGP_SOLVER_DENSE = 2 };

enum sorfgp_sketch { SORFGP_SKETCH_GAUSS = 0, SORFGP_SKETCH_SRHT = 1, SORFGP_SKETCH_SRHT2 = 2 };

enum sorfgp_acquisition { SORFGP_ACQ_UCB = 0, SORFGP_ACQ_RANDOM = 1 };

enum sorfgp_retrieval { SORFGP_RETRIEVE_FULL_SCAN = 0, SORFGP_RETRIEVE_CLUSTER = 1 };

typedef struct sorfgp_dataset sorfgp_dataset;
typedef struct sorfgp_model sorfgp_model;
typedef struct sorfgp_tune_result sorfgp_tune_result;
typedef struct sorfgp_cluster_index sorfgp_cluster_index;
typedef struct sorfgp_retriever sorfgp_retriever;

typedef struct sorfgp_spec {
  int kernel;
  size_t input_width;     /* 0: take it from the dataset */
  size_t window;
  size_t num_rffs;
  size_t variance_rffs;   /* 0: default */
  size_t stage1_features; /* Fast-Conv-1d only, 0: default */
  double lambda;
  double beta;
  double sigma;
  uint64_t seed;
} sorfgp_spec;

typedef struct sorfgp_fit_options {
  int solver;
  double tol;
  size_t maxiter;
  size_t precond_rank;
  int variant;
} sorfgp_fit_options;

typedef struct sorfgp_approx_options {
  size_t precond_rank;
  size_t n_v;
  double tol;
  size_t maxiter;
  int variant;
  uint64_t seed;
} sorfgp_approx_options;

typedef struct sorfgp_bayes_options {
  double log10_sigma_lo;
  double log10_sigma_hi;
  size_t n_init;
  size_t maxiter;
  size_t n_candidates;
  size_t m_samples;
  double tol;
  uint64_t seed;
} sorfgp_bayes_options;

typedef struct sorfgp_tune_point {
  double lambda;
  double beta;
  double sigma;
  double nmll;
} sorfgp_tune_point;

typedef struct sorfgp_bo_options {
  size_t init_size;
  size_t batch_size;
  size_t iterations;
  int acquisition;
  double multiplier;
  uint64_t seed;
  int tune; /* re-tune lambda and beta over the grids on every refit */
} sorfgp_bo_options;

typedef struct sorfgp_iteration_row {
  size_t rank;
  int variant;
  size_t cg_iterations;
  size_t pcg_iterations;
  int cg_converged;
  int pcg_converged;
  double ratio;
} sorfgp_iteration_row;

typedef struct sorfgp_synth_options {
  int kind; /* 0: GP regression draw, 1: combinatorial landscape */
  size_t n;
  size_t d;
  double sigma;
  double beta;
  double noise;
  size_t sites;
  size_t options;
  double scale;
  uint64_t seed;
} sorfgp_synth_options;

/* ---- library ---- */
SORFGP_API const char* sorfgp_version(void);
/* Message of the last failed call on this thread, "" if none. */
SORFGP_API const char* sorfgp_last_error(void);
SORFGP_API void sorfgp_set_threads(size_t n);
SORFGP_API size_t sorfgp_get_threads(void);

SORFGP_API void sorfgp_spec_init(sorfgp_spec* spec);
SORFGP_API void sorfgp_fit_options_init(sorfgp_fit_options* opts);
SORFGP_API void sorfgp_approx_options_init(sorfgp_approx_options* opts);
SORFGP_API void sorfgp_bayes_options_init(sorfgp_bayes_options* opts);
SORFGP_API void sorfgp_bo_options_init(sorfgp_bo_options* opts);
SORFGP_API void sorfgp_synth_options_init(sorfgp_synth_options* opts);

/* Name lookups; -1 when unknown. */
SORFGP_API int sorfgp_kernel_from_name(const char* name);
SORFGP_API const char* sorfgp_kernel_name(int kernel);
SORFGP_API int sorfgp_solver_from_name(const char* name);
SORFGP_API const char* sorfgp_solver_name(int solver);
SORFGP_API int sorfgp_sketch_from_name(const char* name);
SORFGP_API const char* sorfgp_sketch_name(int variant);

/* ---- datasets ---- */
SORFGP_API int sorfgp_dataset_open(const char* dir, sorfgp_dataset** out);
SORFGP_API void sorfgp_dataset_free(sorfgp_dataset* ds);
SORFGP_API size_t sorfgp_dataset_num_records(const sorfgp_dataset* ds);
SORFGP_API size_t sorfgp_dataset_width(const sorfgp_dataset* ds);
SORFGP_API int sorfgp_dataset_kind(const sorfgp_dataset* ds);
SORFGP_API size_t sorfgp_dataset_num_chunks(const sorfgp_dataset* ds);
SORFGP_API const char* sorfgp_dataset_hash(const sorfgp_dataset* ds);
SORFGP_API const char* sorfgp_dataset_path(const sorfgp_dataset* ds);
/* *ok = 1 when the chunk files still match the manifest hash. */
SORFGP_API int sorfgp_dataset_verify(const sorfgp_dataset* ds, int* ok);
SORFGP_API int sorfgp_dataset_targets(const sorfgp_dataset* ds, double* out, size_t n);

SORFGP_API int sorfgp_ingest_tabular(const char* csv_path, const char* target_column,
                                     size_t chunk_rows, const char* out_dir, sorfgp_dataset** out);
/* alphabet NULL selects the 20 amino acids. */
SORFGP_API int sorfgp_ingest_sequences(const char* path, const char* alphabet, size_t chunk_rows,
                                       const char* out_dir, sorfgp_dataset** out);
/* elements: comma-separated symbols, e.g. "H,C,N,O". */
SORFGP_API int sorfgp_ingest_xyz(const char* path, const char* elements, size_t max_neighbors,
                                 size_t chunk_rows, const char* out_dir, sorfgp_dataset** out);
/* Row-major n x d fixed vectors. */
SORFGP_API int sorfgp_write_matrix(const double* x, const double* y, size_t n, size_t d,
                                   size_t chunk_rows, const char* out_dir, sorfgp_dataset** out);
SORFGP_API int sorfgp_synthesize(const sorfgp_synth_options* opts, size_t chunk_rows,
                                 const char* out_dir, sorfgp_dataset** out);

/* ---- models ---- */
SORFGP_API int sorfgp_fit(const sorfgp_dataset* ds, const sorfgp_spec* spec,
                          const sorfgp_fit_options* opts, sorfgp_model** out);
SORFGP_API int sorfgp_model_save(const sorfgp_model* model, const char* path);
SORFGP_API int sorfgp_model_load(const char* path, sorfgp_model** out);
SORFGP_API void sorfgp_model_free(sorfgp_model* model);
SORFGP_API void sorfgp_model_spec(const sorfgp_model* model, sorfgp_spec* spec);
SORFGP_API int sorfgp_model_converged(const sorfgp_model* model);
SORFGP_API size_t sorfgp_model_iterations(const sorfgp_model* model);
SORFGP_API size_t sorfgp_model_num_warnings(const sorfgp_model* model);
SORFGP_API const char* sorfgp_model_warning(const sorfgp_model* model, size_t i);
/* Manifest entries are stored with the model; get returns NULL when absent. */
SORFGP_API const char* sorfgp_model_get_meta(const sorfgp_model* model, const char* key);
SORFGP_API int sorfgp_model_set_meta(sorfgp_model* model, const char* key, const char* value);
SORFGP_API size_t sorfgp_model_num_meta(const sorfgp_model* model);
SORFGP_API const char* sorfgp_model_meta_key(const sorfgp_model* model, size_t i);

/* mean and variance hold n = sorfgp_dataset_num_records(ds) values. */
SORFGP_API int sorfgp_predict(const sorfgp_model* model, const sorfgp_dataset* ds, double* mean,
                              double* variance, size_t n);
SORFGP_API int sorfgp_predict_matrix(const sorfgp_model* model, const double* x, size_t n,
                                     size_t d, double* mean, double* variance);

/* ---- tuning ---- */
SORFGP_API int sorfgp_nmll_exact(const sorfgp_dataset* ds, const sorfgp_spec* spec, double* nmll);
SORFGP_API int sorfgp_nmll_approx(const sorfgp_dataset* ds, const sorfgp_spec* spec,
                                  const sorfgp_approx_options* opts, double* nmll);
SORFGP_API int sorfgp_tune_grid(const sorfgp_dataset* ds, const sorfgp_spec* family,
                                const double* sigmas, size_t n_sigma, const double* lambdas,
                                size_t n_lambda, const double* betas, size_t n_beta,
                                sorfgp_tune_result** out);
SORFGP_API int sorfgp_tune_approx(const sorfgp_dataset* ds, const sorfgp_spec* family,
                                  const double* sigmas, size_t n_sigma, const double* lambdas,
                                  size_t n_lambda, const double* betas, size_t n_beta,
                                  const sorfgp_approx_options* opts, sorfgp_tune_result** out);
SORFGP_API int sorfgp_tune_bayes(const sorfgp_dataset* ds, const sorfgp_spec* family,
                                 const sorfgp_bayes_options* opts, const double* lambdas,
                                 size_t n_lambda, const double* betas, size_t n_beta,
                                 sorfgp_tune_result** out);
SORFGP_API void sorfgp_tune_result_best(const sorfgp_tune_result* r, sorfgp_tune_point* best);
SORFGP_API size_t sorfgp_tune_result_size(const sorfgp_tune_result* r);
SORFGP_API int sorfgp_tune_result_get(const sorfgp_tune_result* r, size_t i,
                                      sorfgp_tune_point* point);
SORFGP_API void sorfgp_tune_result_free(sorfgp_tune_result* r);

/* ---- calibration ---- */
/* levels and coverage may be NULL, else hold SORFGP_CALIBRATION_LEVELS values. */
SORFGP_API int sorfgp_auce(const double* means, const double* stds, const double* truths,
                           size_t n, double* auce, double* levels, double* coverage);
SORFGP_API int sorfgp_ucb(const double* means, const double* stds, size_t n, double multiplier,
                          double* out);
SORFGP_API int sorfgp_spearman(const double* a, const double* b, size_t n, double* rho);

/* ---- clustering, kPCA, retrieval (in the model's feature space) ---- */
SORFGP_API int sorfgp_cluster(const sorfgp_model* model, const sorfgp_dataset* ds, size_t k,
                              size_t max_iter, uint64_t seed, sorfgp_cluster_index** out);
/* objectives holds k_hi - k_lo + 1 values. */
SORFGP_API int sorfgp_elbow(const sorfgp_model* model, const sorfgp_dataset* ds, size_t k_lo,
                            size_t k_hi, size_t max_iter, uint64_t seed, double* objectives);
SORFGP_API int sorfgp_cluster_save(const sorfgp_cluster_index* index, const char* path);
SORFGP_API int sorfgp_cluster_load(const char* path, sorfgp_cluster_index** out);
SORFGP_API void sorfgp_cluster_free(sorfgp_cluster_index* index);
SORFGP_API size_t sorfgp_cluster_k(const sorfgp_cluster_index* index);
SORFGP_API size_t sorfgp_cluster_num_points(const sorfgp_cluster_index* index);
SORFGP_API size_t sorfgp_cluster_iterations(const sorfgp_cluster_index* index);
SORFGP_API double sorfgp_cluster_objective(const sorfgp_cluster_index* index);
SORFGP_API int sorfgp_cluster_assignments(const sorfgp_cluster_index* index, size_t* out,
                                          size_t n);

/* projections: N x num_components row-major; *got components were computed. */
SORFGP_API int sorfgp_kpca(const sorfgp_model* model, const sorfgp_dataset* ds,
                           size_t num_components, double* projections, double* explained,
                           size_t* got);

/* Holds the store's features; index may be NULL for full-scan only. */
SORFGP_API int sorfgp_retriever_create(const sorfgp_model* model,
                                       const sorfgp_cluster_index* index,
                                       const sorfgp_dataset* store, sorfgp_retriever** out);
SORFGP_API void sorfgp_retriever_free(sorfgp_retriever* r);
/* Query is record `row` of `queries`. ids and scores hold top_k values. */
SORFGP_API int sorfgp_retrieve(const sorfgp_retriever* r, const sorfgp_dataset* queries,
                               size_t row, size_t top_k, int mode, size_t clusters, size_t* ids,
                               double* scores, size_t* count, int* truncated);

/* ---- simulated active learning ---- */
/* The pool is a fixed-vector dataset whose targets are the fitness values.
   best_so_far holds iterations + 1 values. */
SORFGP_API int sorfgp_bo_loop(const sorfgp_dataset* pool, const sorfgp_spec* spec,
                              const sorfgp_bo_options* opts, const double* lambdas,
                              size_t n_lambda, const double* betas, size_t n_beta,
                              double* best_so_far, int* exhausted);

/* ---- benchmarks ---- */
SORFGP_API int sorfgp_bench_sorf(size_t rows, size_t dim, const size_t* num_rffs, size_t count,
                                 uint64_t seed, int dense_baseline, size_t repeats,
                                 double* sorf_seconds, double* dense_seconds);
/* Synthetic n x m features with condition number cond; out holds
   n_ranks * n_variants rows, variant-major. */
SORFGP_API int sorfgp_bench_iterations(size_t n, size_t m, double cond, double lambda,
                                       const size_t* ranks, size_t n_ranks, const int* variants,
                                       size_t n_variants, double tol, size_t maxiter,
                                       uint64_t seed, sorfgp_iteration_row* out);

#ifdef __cplusplus
}
#endif

#endif
