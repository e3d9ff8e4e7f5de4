#include "sorfgp/sorfgp.h"

#include <exception>
#include <filesystem>
#include <memory>
#include <new>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "analysis/bench.hpp"
#include "analysis/bo_loop.hpp"
#include "analysis/calibration.hpp"
#include "analysis/clustering.hpp"
#include "analysis/synthetic.hpp"
#include "data/dataset.hpp"
#include "data/encoders.hpp"
#include "features/feature_map.hpp"
#include "gp/model.hpp"
#include "gp/nmll.hpp"
#include "gp/tuning.hpp"
#include "util/error.hpp"
#include "util/parallel.hpp"

using namespace sorfgp;

struct sorfgp_dataset {
  ChunkedDataset data;
  std::string hash;
  std::string path;
};

struct sorfgp_model {
  GPModel model;
  std::vector<std::string> meta_keys;  // refreshed on each key listing
};

struct sorfgp_tune_result {
  TuneResult result;
};

struct sorfgp_cluster_index {
  ClusterIndex index;
};

struct sorfgp_retriever {
  GPModel model;
  std::optional<ClusterIndex> index;
  RowMatrix store;
};

namespace {

thread_local std::string g_last_error;

int fail(int code, const std::string& msg) {
  g_last_error = msg;
  return code;
}

template <class F>
int guarded(F&& fn) {
  try {
    g_last_error.clear();
    fn();
    return SORFGP_OK;
  } catch (const Error& e) {
    return fail(static_cast<int>(e.kind()), e.what());
  } catch (const std::bad_alloc&) {
    return fail(SORFGP_ERR_NUMERICAL, "out of memory");
  } catch (const std::exception& e) {
    return fail(SORFGP_ERR_INTERNAL, e.what());
  } catch (...) {
    return fail(SORFGP_ERR_INTERNAL, "unknown error");
  }
}

template <class T>
void need(const T* p, const char* what) {
  if (p == nullptr) throw ValidationError(std::string(what) + " must not be null");
}

sorfgp_dataset* wrap(ChunkedDataset ds) {
  auto* out = new sorfgp_dataset{std::move(ds), {}, {}};
  out->hash = out->data.content_hash();
  out->path = out->data.directory().string();
  return out;
}

FeatureMapSpec to_spec(const sorfgp_spec& s, const DataSource* data) {
  FeatureMapSpec spec;
  require(s.kernel >= 0 && s.kernel <= 4, "unknown kernel code " + std::to_string(s.kernel));
  spec.kernel = static_cast<KernelKind>(s.kernel);
  spec.input_width = s.input_width;
  if (spec.input_width == 0 && data != nullptr) spec.input_width = data->width();
  spec.window = s.window;
  spec.num_rffs = s.num_rffs;
  spec.variance_rffs = s.variance_rffs;
  spec.stage1_features = s.stage1_features;
  spec.hyper = {s.lambda, s.beta, s.sigma};
  spec.seed = s.seed;
  return spec;
}

void from_spec(const FeatureMapSpec& spec, sorfgp_spec& s) {
  s.kernel = static_cast<int>(spec.kernel);
  s.input_width = spec.input_width;
  s.window = spec.window;
  s.num_rffs = spec.num_rffs;
  s.variance_rffs = spec.variance_rffs;
  s.stage1_features = spec.stage1_features;
  s.lambda = spec.hyper.lambda;
  s.beta = spec.hyper.beta;
  s.sigma = spec.hyper.sigma;
  s.seed = spec.seed;
}

SketchVariant to_variant(int v) {
  require(v >= 0 && v <= 2, "unknown sketch variant code " + std::to_string(v));
  return static_cast<SketchVariant>(v);
}

ApproxNmllOptions to_approx(const sorfgp_approx_options& o) {
  ApproxNmllOptions a;
  a.precond_rank = o.precond_rank;
  a.n_v = o.n_v;
  a.tol = o.tol;
  a.maxiter = o.maxiter;
  a.variant = to_variant(o.variant);
  a.seed = o.seed;
  return a;
}

std::vector<double> to_vec(const double* p, std::size_t n, const char* what) {
  if (n > 0) need(p, what);
  return n ? std::vector<double>(p, p + n) : std::vector<double>{};
}

Vector to_eigen(const double* p, std::size_t n) {
  return Eigen::Map<const Vector>(p, static_cast<Eigen::Index>(n));
}

/// Features of every record, N x M (in-memory; analysis-sized datasets).
RowMatrix all_features(const FeatureMap& map, const DataSource& data) {
  RowMatrix out(static_cast<Eigen::Index>(data.num_records()),
                static_cast<Eigen::Index>(map.num_features()));
  Eigen::Index row = 0;
  for (std::size_t c = 0; c < data.num_chunks(); ++c) {
    const Chunk chunk = data.load_chunk(c);
    if (chunk.empty()) continue;
    const RowMatrix z = map.transform(chunk);
    out.middleRows(row, z.rows()) = z;
    row += z.rows();
  }
  return out;
}

RowMatrix model_features(const GPModel& model, const DataSource& data) {
  if (data.kind() != model.spec().input_kind() || data.width() != model.spec().input_width) {
    throw ValidationError("feature width mismatch: model expects " +
                          std::to_string(model.spec().input_width) + " " +
                          to_string(model.spec().input_kind()) + ", input has " +
                          std::to_string(data.width()) + " " + to_string(data.kind()));
  }
  return all_features(model.map(), data);
}

void fixed_pool(const DataSource& data, RowMatrix& x, Vector& y) {
  require(data.kind() == InputKind::FixedVector, "pool must hold fixed vectors");
  x.resize(static_cast<Eigen::Index>(data.num_records()), static_cast<Eigen::Index>(data.width()));
  y.resize(static_cast<Eigen::Index>(data.num_records()));
  Eigen::Index row = 0;
  std::vector<double> buf;
  for (std::size_t c = 0; c < data.num_chunks(); ++c) {
    const Chunk chunk = data.load_chunk(c);
    for (std::size_t i = 0; i < chunk.size(); ++i, ++row) {
      const RecordView v = chunk.record(i, buf);
      for (std::size_t j = 0; j < v.width; ++j) x(row, static_cast<Eigen::Index>(j)) = v.data[j];
      y[row] = chunk.targets()[i];
    }
  }
}

std::vector<std::string> split_commas(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    const auto b = item.find_first_not_of(" \t");
    const auto e = item.find_last_not_of(" \t");
    if (b != std::string::npos) out.push_back(item.substr(b, e - b + 1));
  }
  return out;
}

template <class Parse>
int lookup(const char* name, Parse parse) {
  if (name == nullptr) return -1;
  try {
    return static_cast<int>(parse(std::string(name)));
  } catch (...) {
    return -1;
  }
}

}  // namespace

extern "C" {

const char* sorfgp_version(void) { return "1.0.0"; }
const char* sorfgp_last_error(void) { return g_last_error.c_str(); }
void sorfgp_set_threads(size_t n) { set_num_threads(n); }
size_t sorfgp_get_threads(void) { return num_threads(); }

void sorfgp_spec_init(sorfgp_spec* s) {
  if (s == nullptr) return;
  FeatureMapSpec d;
  d.num_rffs = 1024;
  from_spec(d, *s);
}

void sorfgp_fit_options_init(sorfgp_fit_options* o) {
  if (o == nullptr) return;
  FitOptions d;
  *o = {static_cast<int>(d.mode), d.tol, d.maxiter, d.precond_rank, static_cast<int>(d.variant)};
}

void sorfgp_approx_options_init(sorfgp_approx_options* o) {
  if (o == nullptr) return;
  ApproxNmllOptions d;
  *o = {d.precond_rank, d.n_v, d.tol, d.maxiter, static_cast<int>(d.variant), d.seed};
}

void sorfgp_bayes_options_init(sorfgp_bayes_options* o) {
  if (o == nullptr) return;
  BayesOptions d;
  *o = {d.log10_sigma_lo, d.log10_sigma_hi, d.n_init, d.maxiter, d.n_candidates, d.m_samples,
        d.tol, d.seed};
}

void sorfgp_bo_options_init(sorfgp_bo_options* o) {
  if (o == nullptr) return;
  BoOptions d;
  *o = {d.init_size, d.batch_size, d.iterations, static_cast<int>(d.acquisition), d.multiplier,
        d.seed, d.tune ? 1 : 0};
}

void sorfgp_synth_options_init(sorfgp_synth_options* o) {
  if (o == nullptr) return;
  *o = {0, 1000, 4, 1.0, 1.0, 0.1, 4, 10, 1.0, 0};
}

int sorfgp_kernel_from_name(const char* name) { return lookup(name, parse_kernel); }
const char* sorfgp_kernel_name(int k) {
  return (k >= 0 && k <= 4) ? to_string(static_cast<KernelKind>(k)) : nullptr;
}
int sorfgp_solver_from_name(const char* name) { return lookup(name, parse_solver_mode); }
const char* sorfgp_solver_name(int s) {
  return (s >= 0 && s <= 2) ? to_string(static_cast<SolverMode>(s)) : nullptr;
}
int sorfgp_sketch_from_name(const char* name) { return lookup(name, parse_sketch_variant); }
const char* sorfgp_sketch_name(int v) {
  return (v >= 0 && v <= 2) ? to_string(static_cast<SketchVariant>(v)) : nullptr;
}

// ---- datasets ----

int sorfgp_dataset_open(const char* dir, sorfgp_dataset** out) {
  return guarded([&] {
    need(dir, "dir");
    need(out, "out");
    // A path that does not exist is a usage error; a damaged dataset is io.
    if (!std::filesystem::exists(dir)) throw ValidationError(std::string("dataset not found: ") + dir);
    *out = wrap(ChunkedDataset::open(dir));
  });
}

void sorfgp_dataset_free(sorfgp_dataset* ds) { delete ds; }
size_t sorfgp_dataset_num_records(const sorfgp_dataset* ds) {
  return ds ? ds->data.num_records() : 0;
}
size_t sorfgp_dataset_width(const sorfgp_dataset* ds) { return ds ? ds->data.width() : 0; }
int sorfgp_dataset_kind(const sorfgp_dataset* ds) {
  return ds ? static_cast<int>(ds->data.kind()) : -1;
}
size_t sorfgp_dataset_num_chunks(const sorfgp_dataset* ds) {
  return ds ? ds->data.num_chunks() : 0;
}
const char* sorfgp_dataset_hash(const sorfgp_dataset* ds) { return ds ? ds->hash.c_str() : ""; }
const char* sorfgp_dataset_path(const sorfgp_dataset* ds) { return ds ? ds->path.c_str() : ""; }

int sorfgp_dataset_verify(const sorfgp_dataset* ds, int* ok) {
  return guarded([&] {
    need(ds, "dataset");
    need(ok, "ok");
    *ok = ds->data.verify() ? 1 : 0;
  });
}

int sorfgp_dataset_targets(const sorfgp_dataset* ds, double* out, size_t n) {
  return guarded([&] {
    need(ds, "dataset");
    need(out, "out");
    require(n == ds->data.num_records(), "targets buffer holds " + std::to_string(n) +
                                             " values, dataset has " +
                                             std::to_string(ds->data.num_records()));
    std::size_t k = 0;
    for (std::size_t c = 0; c < ds->data.num_chunks(); ++c) {
      const Chunk chunk = ds->data.load_chunk(c);
      for (double t : chunk.targets()) out[k++] = t;
    }
  });
}

int sorfgp_ingest_tabular(const char* csv_path, const char* target_column, size_t chunk_rows,
                          const char* out_dir, sorfgp_dataset** out) {
  return guarded([&] {
    need(csv_path, "csv_path");
    need(target_column, "target_column");
    need(out_dir, "out_dir");
    need(out, "out");
    *out = wrap(ingest_tabular(csv_path, target_column, chunk_rows, out_dir));
  });
}

int sorfgp_ingest_sequences(const char* path, const char* alphabet, size_t chunk_rows,
                            const char* out_dir, sorfgp_dataset** out) {
  return guarded([&] {
    need(path, "path");
    need(out_dir, "out_dir");
    need(out, "out");
    const std::string_view alpha = alphabet ? std::string_view(alphabet) : kAminoAlphabet;
    *out = wrap(ingest_sequences(path, alpha, chunk_rows, out_dir));
  });
}

int sorfgp_ingest_xyz(const char* path, const char* elements, size_t max_neighbors,
                      size_t chunk_rows, const char* out_dir, sorfgp_dataset** out) {
  return guarded([&] {
    need(path, "path");
    need(elements, "elements");
    need(out_dir, "out_dir");
    need(out, "out");
    *out = wrap(ingest_xyz(path, split_commas(elements), max_neighbors, chunk_rows, out_dir));
  });
}

int sorfgp_write_matrix(const double* x, const double* y, size_t n, size_t d, size_t chunk_rows,
                        const char* out_dir, sorfgp_dataset** out) {
  return guarded([&] {
    need(x, "x");
    need(y, "y");
    need(out_dir, "out_dir");
    need(out, "out");
    require(chunk_rows > 0, "chunk_rows must be positive");
    const RowMatrix xm = Eigen::Map<const RowMatrix>(x, static_cast<Eigen::Index>(n),
                                                     static_cast<Eigen::Index>(d));
    const auto src = InMemorySource::from_matrix(xm, to_eigen(y, n), chunk_rows);
    *out = wrap(write_chunks(src, chunk_rows, out_dir));
  });
}

int sorfgp_synthesize(const sorfgp_synth_options* o, size_t chunk_rows, const char* out_dir,
                      sorfgp_dataset** out) {
  return guarded([&] {
    need(o, "options");
    need(out_dir, "out_dir");
    need(out, "out");
    require(chunk_rows > 0, "chunk_rows must be positive");
    SyntheticSet set;
    Manifest extra;
    if (o->kind == 0) {
      set = make_gp_regression(o->n, o->d, o->sigma, o->beta, o->noise, o->seed);
      extra["synthetic"] = "gp_regression";
    } else if (o->kind == 1) {
      set = make_landscape(o->sites, o->options, o->scale, o->seed);
      extra["synthetic"] = "landscape";
    } else {
      throw ValidationError("unknown synthetic kind " + std::to_string(o->kind));
    }
    extra["synthetic_seed"] = std::to_string(o->seed);
    const auto src = InMemorySource::from_matrix(set.x, set.y, chunk_rows);
    *out = wrap(write_chunks(src, chunk_rows, out_dir, extra));
  });
}

// ---- models ----

int sorfgp_fit(const sorfgp_dataset* ds, const sorfgp_spec* spec, const sorfgp_fit_options* opts,
               sorfgp_model** out) {
  return guarded([&] {
    need(ds, "dataset");
    need(spec, "spec");
    need(out, "out");
    FitOptions fo;
    if (opts != nullptr) {
      require(opts->solver >= 0 && opts->solver <= 2,
              "unknown solver code " + std::to_string(opts->solver));
      fo.mode = static_cast<SolverMode>(opts->solver);
      fo.tol = opts->tol;
      fo.maxiter = opts->maxiter;
      fo.precond_rank = opts->precond_rank;
      fo.variant = to_variant(opts->variant);
    }
    GPModel m = fit(ds->data, to_spec(*spec, &ds->data), fo);
    *out = new sorfgp_model{std::move(m), {}};
  });
}

int sorfgp_model_save(const sorfgp_model* model, const char* path) {
  return guarded([&] {
    need(model, "model");
    need(path, "path");
    save_model(model->model, path);
  });
}

int sorfgp_model_load(const char* path, sorfgp_model** out) {
  return guarded([&] {
    need(path, "path");
    need(out, "out");
    *out = new sorfgp_model{load_model(path), {}};
  });
}

void sorfgp_model_free(sorfgp_model* model) { delete model; }

void sorfgp_model_spec(const sorfgp_model* model, sorfgp_spec* spec) {
  if (model && spec) from_spec(model->model.spec(), *spec);
}

int sorfgp_model_converged(const sorfgp_model* model) {
  return model && model->model.converged() ? 1 : 0;
}

size_t sorfgp_model_iterations(const sorfgp_model* model) {
  return model ? model->model.report.iterations : 0;
}

size_t sorfgp_model_num_warnings(const sorfgp_model* model) {
  return model ? model->model.warnings.size() : 0;
}

const char* sorfgp_model_warning(const sorfgp_model* model, size_t i) {
  if (!model || i >= model->model.warnings.size()) return nullptr;
  return model->model.warnings[i].c_str();
}

const char* sorfgp_model_get_meta(const sorfgp_model* model, const char* key) {
  if (!model || !key) return nullptr;
  const auto it = model->model.manifest.find(key);
  return it == model->model.manifest.end() ? nullptr : it->second.c_str();
}

int sorfgp_model_set_meta(sorfgp_model* model, const char* key, const char* value) {
  return guarded([&] {
    need(model, "model");
    need(key, "key");
    need(value, "value");
    const std::string k(key), v(value);
    require(!k.empty() && k.find_first_of("=\n") == std::string::npos,
            "meta key must be non-empty without '=' or newlines");
    require(v.find('\n') == std::string::npos, "meta value must not contain newlines");
    model->model.manifest[k] = v;
  });
}

size_t sorfgp_model_num_meta(const sorfgp_model* model) {
  return model ? model->model.manifest.size() : 0;
}

const char* sorfgp_model_meta_key(const sorfgp_model* model, size_t i) {
  if (!model || i >= model->model.manifest.size()) return nullptr;
  auto* m = const_cast<sorfgp_model*>(model);
  m->meta_keys.clear();
  for (const auto& kv : m->model.manifest) m->meta_keys.push_back(kv.first);
  return m->meta_keys[i].c_str();
}

int sorfgp_predict(const sorfgp_model* model, const sorfgp_dataset* ds, double* mean,
                   double* variance, size_t n) {
  return guarded([&] {
    need(model, "model");
    need(ds, "dataset");
    require(n == ds->data.num_records(), "prediction buffers hold " + std::to_string(n) +
                                             " values, dataset has " +
                                             std::to_string(ds->data.num_records()));
    const Prediction p = predict(model->model, ds->data);
    if (mean) std::copy(p.mean.data(), p.mean.data() + p.mean.size(), mean);
    if (variance) std::copy(p.variance.data(), p.variance.data() + p.variance.size(), variance);
  });
}

int sorfgp_predict_matrix(const sorfgp_model* model, const double* x, size_t n, size_t d,
                          double* mean, double* variance) {
  return guarded([&] {
    need(model, "model");
    need(x, "x");
    require(d == model->model.spec().input_width,
            "feature width mismatch: model expects " +
                std::to_string(model->model.spec().input_width) + ", input has " +
                std::to_string(d));
    const RowMatrix xm = Eigen::Map<const RowMatrix>(x, static_cast<Eigen::Index>(n),
                                                     static_cast<Eigen::Index>(d));
    const Prediction p = predict(model->model, xm);
    if (mean) std::copy(p.mean.data(), p.mean.data() + p.mean.size(), mean);
    if (variance) std::copy(p.variance.data(), p.variance.data() + p.variance.size(), variance);
  });
}

// ---- tuning ----

int sorfgp_nmll_exact(const sorfgp_dataset* ds, const sorfgp_spec* spec, double* nmll) {
  return guarded([&] {
    need(ds, "dataset");
    need(spec, "spec");
    need(nmll, "nmll");
    *nmll = nmll_exact(ds->data, to_spec(*spec, &ds->data)).total;
  });
}

int sorfgp_nmll_approx(const sorfgp_dataset* ds, const sorfgp_spec* spec,
                       const sorfgp_approx_options* opts, double* nmll) {
  return guarded([&] {
    need(ds, "dataset");
    need(spec, "spec");
    need(opts, "options");
    need(nmll, "nmll");
    *nmll = nmll_approx(ds->data, to_spec(*spec, &ds->data), to_approx(*opts)).total;
  });
}

int sorfgp_tune_grid(const sorfgp_dataset* ds, const sorfgp_spec* family, const double* sigmas,
                     size_t n_sigma, const double* lambdas, size_t n_lambda, const double* betas,
                     size_t n_beta, sorfgp_tune_result** out) {
  return guarded([&] {
    need(ds, "dataset");
    need(family, "spec");
    need(out, "out");
    TuneResult r = tune_grid(ds->data, to_spec(*family, &ds->data),
                             to_vec(sigmas, n_sigma, "sigmas"),
                             to_vec(lambdas, n_lambda, "lambdas"), to_vec(betas, n_beta, "betas"));
    *out = new sorfgp_tune_result{std::move(r)};
  });
}

int sorfgp_tune_approx(const sorfgp_dataset* ds, const sorfgp_spec* family, const double* sigmas,
                       size_t n_sigma, const double* lambdas, size_t n_lambda,
                       const double* betas, size_t n_beta, const sorfgp_approx_options* opts,
                       sorfgp_tune_result** out) {
  return guarded([&] {
    need(ds, "dataset");
    need(family, "spec");
    need(opts, "options");
    need(out, "out");
    TuneResult r = tune_approx(ds->data, to_spec(*family, &ds->data),
                               to_vec(sigmas, n_sigma, "sigmas"),
                               to_vec(lambdas, n_lambda, "lambdas"),
                               to_vec(betas, n_beta, "betas"), to_approx(*opts));
    *out = new sorfgp_tune_result{std::move(r)};
  });
}

int sorfgp_tune_bayes(const sorfgp_dataset* ds, const sorfgp_spec* family,
                      const sorfgp_bayes_options* opts, const double* lambdas, size_t n_lambda,
                      const double* betas, size_t n_beta, sorfgp_tune_result** out) {
  return guarded([&] {
    need(ds, "dataset");
    need(family, "spec");
    need(opts, "options");
    need(out, "out");
    BayesOptions bo;
    bo.log10_sigma_lo = opts->log10_sigma_lo;
    bo.log10_sigma_hi = opts->log10_sigma_hi;
    bo.n_init = opts->n_init;
    bo.maxiter = opts->maxiter;
    bo.n_candidates = opts->n_candidates;
    bo.m_samples = opts->m_samples;
    bo.tol = opts->tol;
    bo.seed = opts->seed;
    TuneResult r = tune_bayes(ds->data, to_spec(*family, &ds->data), bo,
                              to_vec(lambdas, n_lambda, "lambdas"), to_vec(betas, n_beta, "betas"));
    *out = new sorfgp_tune_result{std::move(r)};
  });
}

void sorfgp_tune_result_best(const sorfgp_tune_result* r, sorfgp_tune_point* best) {
  if (!r || !best) return;
  const auto& b = r->result.best;
  *best = {b.lambda, b.beta, b.sigma, r->result.best_nmll};
}

size_t sorfgp_tune_result_size(const sorfgp_tune_result* r) {
  return r ? r->result.trace.size() : 0;
}

int sorfgp_tune_result_get(const sorfgp_tune_result* r, size_t i, sorfgp_tune_point* point) {
  return guarded([&] {
    need(r, "result");
    need(point, "point");
    require(i < r->result.trace.size(), "trace index out of range");
    const auto& e = r->result.trace[i];
    *point = {e.hyper.lambda, e.hyper.beta, e.hyper.sigma, e.nmll};
  });
}

void sorfgp_tune_result_free(sorfgp_tune_result* r) { delete r; }

// ---- calibration ----

int sorfgp_auce(const double* means, const double* stds, const double* truths, size_t n,
                double* value, double* levels, double* coverage) {
  return guarded([&] {
    need(means, "means");
    need(stds, "stds");
    need(truths, "truths");
    need(value, "auce");
    const CalibrationCurve c = auce(to_eigen(means, n), to_eigen(stds, n), to_eigen(truths, n));
    *value = c.auce;
    if (levels) std::copy(c.levels.begin(), c.levels.end(), levels);
    if (coverage) std::copy(c.coverage.begin(), c.coverage.end(), coverage);
  });
}

int sorfgp_ucb(const double* means, const double* stds, size_t n, double multiplier,
               double* out) {
  return guarded([&] {
    need(means, "means");
    need(stds, "stds");
    need(out, "out");
    const Vector u = ucb(to_eigen(means, n), to_eigen(stds, n), multiplier);
    std::copy(u.data(), u.data() + u.size(), out);
  });
}

int sorfgp_spearman(const double* a, const double* b, size_t n, double* rho) {
  return guarded([&] {
    need(a, "a");
    need(b, "b");
    need(rho, "rho");
    *rho = spearman(to_eigen(a, n), to_eigen(b, n));
  });
}

// ---- clustering, kPCA, retrieval ----

int sorfgp_cluster(const sorfgp_model* model, const sorfgp_dataset* ds, size_t k,
                   size_t max_iter, uint64_t seed, sorfgp_cluster_index** out) {
  return guarded([&] {
    need(model, "model");
    need(ds, "dataset");
    need(out, "out");
    const RowMatrix z = model_features(model->model, ds->data);
    ClusterIndex idx = kmeans_rf(z, k, max_iter, seed);
    if (const char* ref = sorfgp_model_get_meta(model, "model_path")) idx.model_ref = ref;
    *out = new sorfgp_cluster_index{std::move(idx)};
  });
}

int sorfgp_elbow(const sorfgp_model* model, const sorfgp_dataset* ds, size_t k_lo, size_t k_hi,
                 size_t max_iter, uint64_t seed, double* objectives) {
  return guarded([&] {
    need(model, "model");
    need(ds, "dataset");
    need(objectives, "objectives");
    const RowMatrix z = model_features(model->model, ds->data);
    const auto obj = elbow(z, k_lo, k_hi, max_iter, seed);
    std::copy(obj.begin(), obj.end(), objectives);
  });
}

int sorfgp_cluster_save(const sorfgp_cluster_index* index, const char* path) {
  return guarded([&] {
    need(index, "index");
    need(path, "path");
    save_cluster_index(index->index, path);
  });
}

int sorfgp_cluster_load(const char* path, sorfgp_cluster_index** out) {
  return guarded([&] {
    need(path, "path");
    need(out, "out");
    *out = new sorfgp_cluster_index{load_cluster_index(path)};
  });
}

void sorfgp_cluster_free(sorfgp_cluster_index* index) { delete index; }
size_t sorfgp_cluster_k(const sorfgp_cluster_index* index) { return index ? index->index.k : 0; }
size_t sorfgp_cluster_num_points(const sorfgp_cluster_index* index) {
  return index ? index->index.assignments.size() : 0;
}
size_t sorfgp_cluster_iterations(const sorfgp_cluster_index* index) {
  return index ? index->index.iterations : 0;
}
double sorfgp_cluster_objective(const sorfgp_cluster_index* index) {
  return index ? index->index.objective() : 0.0;
}

int sorfgp_cluster_assignments(const sorfgp_cluster_index* index, size_t* out, size_t n) {
  return guarded([&] {
    need(index, "index");
    need(out, "out");
    require(n == index->index.assignments.size(), "assignment buffer size mismatch");
    std::copy(index->index.assignments.begin(), index->index.assignments.end(), out);
  });
}

int sorfgp_kpca(const sorfgp_model* model, const sorfgp_dataset* ds, size_t num_components,
                double* projections, double* explained, size_t* got) {
  return guarded([&] {
    need(model, "model");
    need(ds, "dataset");
    need(got, "got");
    const RowMatrix z = model_features(model->model, ds->data);
    const KpcaResult r = kpca_rf(z, num_components);
    const auto k = static_cast<std::size_t>(r.explained_variance.size());
    *got = k;
    if (explained) std::copy(r.explained_variance.data(), r.explained_variance.data() + k, explained);
    if (projections) {
      // Rows stay num_components wide; missing components are zero.
      for (Eigen::Index i = 0; i < r.projections.rows(); ++i) {
        for (std::size_t j = 0; j < num_components; ++j) {
          projections[static_cast<std::size_t>(i) * num_components + j] =
              j < k ? r.projections(i, static_cast<Eigen::Index>(j)) : 0.0;
        }
      }
    }
  });
}

int sorfgp_retriever_create(const sorfgp_model* model, const sorfgp_cluster_index* index,
                            const sorfgp_dataset* store, sorfgp_retriever** out) {
  return guarded([&] {
    need(model, "model");
    need(store, "store");
    need(out, "out");
    RowMatrix z = model_features(model->model, store->data);
    std::optional<ClusterIndex> idx;
    if (index != nullptr) {
      require(index->index.assignments.size() == store->data.num_records(),
              "cluster index covers " + std::to_string(index->index.assignments.size()) +
                  " points, store has " + std::to_string(store->data.num_records()));
      require(static_cast<std::size_t>(index->index.centroids.cols()) ==
                  model->model.map().num_features(),
              "cluster index was built with a different feature count");
      idx = index->index;
    }
    *out = new sorfgp_retriever{model->model, std::move(idx), std::move(z)};
  });
}

void sorfgp_retriever_free(sorfgp_retriever* r) { delete r; }

int sorfgp_retrieve(const sorfgp_retriever* r, const sorfgp_dataset* queries, size_t row,
                    size_t top_k, int mode, size_t clusters, size_t* ids, double* scores,
                    size_t* count, int* truncated) {
  return guarded([&] {
    need(r, "retriever");
    need(queries, "queries");
    need(ids, "ids");
    need(scores, "scores");
    need(count, "count");
    require(row < queries->data.num_records(), "query row out of range");
    require(mode == SORFGP_RETRIEVE_FULL_SCAN || mode == SORFGP_RETRIEVE_CLUSTER,
            "unknown retrieval mode " + std::to_string(mode));
    const auto rmode = static_cast<RetrievalMode>(mode);
    require(rmode == RetrievalMode::FullScan || r->index.has_value(),
            "cluster-restricted retrieval needs a cluster index");
    const auto& spec = r->model.spec();
    require(queries->data.kind() == spec.input_kind() && queries->data.width() == spec.input_width,
            "query feature width mismatch: model expects " + std::to_string(spec.input_width) +
                ", queries have " + std::to_string(queries->data.width()));
    // Locate the chunk holding the row.
    std::size_t base = 0, c = 0;
    const auto& rows = queries->data.chunk_rows();
    while (base + rows[c] <= row) base += rows[c++];
    const Chunk chunk = queries->data.load_chunk(c);
    std::vector<double> buf;
    const RecordView rec = chunk.record(row - base, buf);
    Vector q(static_cast<Eigen::Index>(r->model.map().num_features()));
    r->model.map().transform_record(rec, std::span<double>(q.data(), static_cast<std::size_t>(q.size())));
    const ClusterIndex empty;  // full scan ignores the index
    const RetrievalResult res =
        retrieve_similar(r->index ? *r->index : empty, r->store, q, top_k, rmode, clusters);
    *count = res.ids.size();
    std::copy(res.ids.begin(), res.ids.end(), ids);
    std::copy(res.scores.begin(), res.scores.end(), scores);
    if (truncated) *truncated = res.truncated ? 1 : 0;
  });
}

// ---- active learning ----

int sorfgp_bo_loop(const sorfgp_dataset* pool, const sorfgp_spec* spec,
                   const sorfgp_bo_options* opts, const double* lambdas, size_t n_lambda,
                   const double* betas, size_t n_beta, double* best_so_far, int* exhausted) {
  return guarded([&] {
    need(pool, "pool");
    need(spec, "spec");
    need(opts, "options");
    need(best_so_far, "best_so_far");
    RowMatrix x;
    Vector y;
    fixed_pool(pool->data, x, y);
    BoOptions bo;
    bo.init_size = opts->init_size;
    bo.batch_size = opts->batch_size;
    bo.iterations = opts->iterations;
    require(opts->acquisition == SORFGP_ACQ_UCB || opts->acquisition == SORFGP_ACQ_RANDOM,
            "unknown acquisition code " + std::to_string(opts->acquisition));
    bo.acquisition = opts->acquisition == SORFGP_ACQ_UCB ? Acquisition::Ucb : Acquisition::Random;
    bo.multiplier = opts->multiplier;
    bo.seed = opts->seed;
    bo.tune = opts->tune != 0;
    bo.spec = to_spec(*spec, &pool->data);
    bo.lambda_grid = to_vec(lambdas, n_lambda, "lambdas");
    bo.beta_grid = to_vec(betas, n_beta, "betas");
    const BoTrajectory t = run_bo_loop(x, y, bo);
    // Pad with the last value when the pool ran out early.
    for (std::size_t i = 0; i <= opts->iterations; ++i) {
      best_so_far[i] = t.best_so_far[std::min(i, t.best_so_far.size() - 1)];
    }
    if (exhausted) *exhausted = t.exhausted ? 1 : 0;
  });
}

// ---- benchmarks ----

int sorfgp_bench_sorf(size_t rows, size_t dim, const size_t* num_rffs, size_t count,
                      uint64_t seed, int dense_baseline, size_t repeats, double* sorf_seconds,
                      double* dense_seconds) {
  return guarded([&] {
    need(num_rffs, "num_rffs");
    need(sorf_seconds, "sorf_seconds");
    const auto t = bench_sorf(rows, dim, std::vector<std::size_t>(num_rffs, num_rffs + count),
                              seed, dense_baseline != 0, repeats);
    for (std::size_t i = 0; i < t.size(); ++i) {
      sorf_seconds[i] = t[i].sorf_seconds;
      if (dense_seconds) dense_seconds[i] = t[i].dense_seconds;
    }
  });
}

int sorfgp_bench_iterations(size_t n, size_t m, double cond, double lambda, const size_t* ranks,
                            size_t n_ranks, const int* variants, size_t n_variants, double tol,
                            size_t maxiter, uint64_t seed, sorfgp_iteration_row* out) {
  return guarded([&] {
    need(ranks, "ranks");
    need(variants, "variants");
    need(out, "out");
    std::vector<SketchVariant> vs;
    for (std::size_t i = 0; i < n_variants; ++i) vs.push_back(to_variant(variants[i]));
    SyntheticSet set = make_spectrum_features(n, m, cond, seed);
    DenseFeatureStream stream(std::move(set.x), std::move(set.y), 2000);
    const auto rows = bench_iterations(stream, lambda, std::vector<std::size_t>(ranks, ranks + n_ranks),
                                       vs, tol, maxiter, seed);
    for (std::size_t i = 0; i < rows.size(); ++i) {
      const auto& r = rows[i];
      out[i] = {r.rank, static_cast<int>(r.variant), r.cg_iterations, r.pcg_iterations,
                r.cg_converged ? 1 : 0, r.pcg_converged ? 1 : 0, r.ratio};
    }
  });
}

}  // extern "C"
