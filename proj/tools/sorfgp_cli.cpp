// Command-line front end. Every command is a thin wrapper over the C API.

#include <CLI11.hpp>
#include <json.hpp>

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <memory>
#include <sstream>
#include <string>
#include <vector>

#include "sorfgp/sorfgp.h"

namespace {

struct CliError {
  int code;
  std::string message;
};

void check(int status) {
  if (status != SORFGP_OK) throw CliError{status, sorfgp_last_error()};
}

[[noreturn]] void usage_error(const std::string& msg) { throw CliError{SORFGP_ERR_VALIDATION, msg}; }

const char* kind_name(int code) {
  switch (code) {
    case SORFGP_ERR_VALIDATION: return "validation";
    case SORFGP_ERR_NUMERICAL: return "numerical";
    case SORFGP_ERR_IO: return "io";
    default: return "internal";
  }
}

struct DatasetDel { void operator()(sorfgp_dataset* p) const { sorfgp_dataset_free(p); } };
struct ModelDel { void operator()(sorfgp_model* p) const { sorfgp_model_free(p); } };
struct TuneDel { void operator()(sorfgp_tune_result* p) const { sorfgp_tune_result_free(p); } };
struct ClusterDel { void operator()(sorfgp_cluster_index* p) const { sorfgp_cluster_free(p); } };
struct RetrieverDel { void operator()(sorfgp_retriever* p) const { sorfgp_retriever_free(p); } };
using Dataset = std::unique_ptr<sorfgp_dataset, DatasetDel>;
using Model = std::unique_ptr<sorfgp_model, ModelDel>;
using Tune = std::unique_ptr<sorfgp_tune_result, TuneDel>;
using Cluster = std::unique_ptr<sorfgp_cluster_index, ClusterDel>;
using Retriever = std::unique_ptr<sorfgp_retriever, RetrieverDel>;

Dataset open_dataset(const std::string& path) {
  if (path.empty()) usage_error("a dataset path is required");
  sorfgp_dataset* ds = nullptr;
  check(sorfgp_dataset_open(path.c_str(), &ds));
  return Dataset(ds);
}

Model load_model(const std::string& path) {
  if (path.empty()) usage_error("--model is required");
  sorfgp_model* m = nullptr;
  check(sorfgp_model_load(path.c_str(), &m));
  return Model(m);
}

std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

/// "lo:hi:count" in log10 units, or a single log10 value.
std::vector<double> log10_values(const std::string& text, const std::string& what) {
  if (text.empty()) return {};
  std::vector<std::string> parts;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ':')) parts.push_back(item);
  try {
    if (parts.size() == 1) return {std::pow(10.0, std::stod(parts[0]))};
    if (parts.size() != 3) throw std::invalid_argument(text);
    const double lo = std::stod(parts[0]), hi = std::stod(parts[1]);
    const auto count = static_cast<std::size_t>(std::stoul(parts[2]));
    if (count == 0) throw std::invalid_argument(text);
    std::vector<double> out(count);
    for (std::size_t i = 0; i < count; ++i) {
      const double t = count == 1 ? 0.0 : static_cast<double>(i) / static_cast<double>(count - 1);
      out[i] = std::pow(10.0, lo + (hi - lo) * t);
    }
    return out;
  } catch (const std::invalid_argument&) {
    usage_error(what + ": expected lo:hi:count in log10 units, got '" + text + "'");
  } catch (const std::out_of_range&) {
    usage_error(what + ": value out of range in '" + text + "'");
  }
}

std::pair<double, double> bounds(const std::string& text, const std::string& what) {
  const auto c = text.find(':');
  try {
    if (c == std::string::npos) throw std::invalid_argument(text);
    return {std::stod(text.substr(0, c)), std::stod(text.substr(c + 1))};
  } catch (const std::exception&) {
    usage_error(what + ": expected lo:hi, got '" + text + "'");
  }
}

int named(int code, const std::string& name, const char* what) {
  if (code < 0) usage_error(std::string("unknown ") + what + " '" + name + "'");
  return code;
}

// ---- options shared between commands ----

struct SpecFlags {
  std::string kernel;  // empty: chosen from the dataset kind
  std::size_t num_rffs = 1024;
  std::size_t variance_rffs = 0;
  std::size_t window = 1;
  std::size_t stage1_features = 0;
  std::uint64_t seed = 0;
  double lambda = 1.0;
  double beta = 1.0;
  double sigma = 1.0;

  void add(CLI::App* app) {
    app->add_option("--kernel", kernel, "rbf, arccos1, fht_conv1d, fast_conv1d or graph_rbf");
    app->add_option("--num-rffs", num_rffs, "random features M");
    app->add_option("--variance-rffs", variance_rffs, "features for the variance path (0: default)");
    app->add_option("--window", window, "convolution window width");
    app->add_option("--stage1-features", stage1_features, "fast_conv1d filters (0: default)");
    app->add_option("--seed", seed, "feature seed");
    app->add_option("--lambda", lambda, "noise level");
    app->add_option("--beta", beta, "amplitude");
    app->add_option("--sigma", sigma, "inverse lengthscale");
  }

  sorfgp_spec build(const sorfgp_dataset* ds) const {
    sorfgp_spec s;
    sorfgp_spec_init(&s);
    std::string k = kernel;
    if (k.empty()) {
      const int kind = sorfgp_dataset_kind(ds);
      k = kind == SORFGP_INPUT_SEQUENCE ? "fht_conv1d" : kind == SORFGP_INPUT_GRAPH ? "graph_rbf" : "rbf";
    }
    s.kernel = named(sorfgp_kernel_from_name(k.c_str()), k, "kernel");
    s.input_width = sorfgp_dataset_width(ds);
    s.num_rffs = num_rffs;
    s.variance_rffs = variance_rffs;
    s.window = window;
    s.stage1_features = stage1_features;
    s.seed = seed;
    s.lambda = lambda;
    s.beta = beta;
    s.sigma = sigma;
    return s;
  }
};

struct SolverFlags {
  std::string solver = "pcg";
  double tol = 1e-6;
  std::size_t maxiter = 500;
  std::size_t precond_rank = 256;
  std::string variant = "srht_2";
  std::size_t n_v = 25;

  void add(CLI::App* app, bool with_probes) {
    app->add_option("--solver", solver, "pcg, cg or dense");
    app->add_option("--tol", tol, "relative residual tolerance");
    app->add_option("--maxiter", maxiter, "iteration cap");
    app->add_option("--precond-rank", precond_rank, "Nystrom rank");
    app->add_option("--variant", variant, "gauss, srht or srht_2");
    if (with_probes) app->add_option("--n-v", n_v, "SLQ probe vectors");
  }

  sorfgp_fit_options fit() const {
    sorfgp_fit_options o;
    sorfgp_fit_options_init(&o);
    o.solver = named(sorfgp_solver_from_name(solver.c_str()), solver, "solver");
    o.tol = tol;
    o.maxiter = maxiter;
    o.precond_rank = precond_rank;
    o.variant = named(sorfgp_sketch_from_name(variant.c_str()), variant, "sketch variant");
    return o;
  }

  sorfgp_approx_options approx(std::uint64_t seed) const {
    sorfgp_approx_options o;
    sorfgp_approx_options_init(&o);
    o.precond_rank = precond_rank;
    o.n_v = n_v;
    o.tol = tol;
    o.maxiter = maxiter;
    o.variant = named(sorfgp_sketch_from_name(variant.c_str()), variant, "sketch variant");
    o.seed = seed;
    return o;
  }
};

// ---- output ----

/// Provenance header: the command, every option value, then extra lines.
class Report {
 public:
  Report(const CLI::App* sub, std::string command) {
    out_ << "# sorfgp " << sorfgp_version() << " " << command << "\n";
    std::map<std::string, std::string> cfg;
    for (const CLI::Option* opt : sub->get_options()) {
      const std::string name = opt->get_single_name();
      if (name.empty() || name == "help") continue;
      std::string value;
      if (opt->count() > 0) {
        for (const auto& r : opt->results()) value += (value.empty() ? "" : ",") + r;
      } else {
        value = opt->get_default_str();
      }
      cfg[name] = value;
    }
    for (const auto& [k, v] : cfg) out_ << "# config." << k << "=" << v << "\n";
  }

  void meta(const std::string& key, const std::string& value) {
    out_ << "# " << key << "=" << value << "\n";
  }
  void dataset(const std::string& role, const sorfgp_dataset* ds) {
    meta(role + ".path", sorfgp_dataset_path(ds));
    meta(role + ".hash", sorfgp_dataset_hash(ds));
  }
  void model(const std::string& path, const sorfgp_model* m) {
    meta("model.path", path);
    if (const char* h = sorfgp_model_get_meta(m, "dataset_hash")) meta("model.dataset_hash", h);
  }
  std::ostringstream& body() { return out_; }

  void write(const std::string& path) const {
    if (path.empty() || path == "-") {
      std::cout << out_.str();
      std::cout.flush();
      return;
    }
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw CliError{SORFGP_ERR_IO, "cannot write " + path};
    f << out_.str();
    if (!f) throw CliError{SORFGP_ERR_IO, "write failed: " + path};
  }

 private:
  std::ostringstream out_;
};

// ---- key=value config files ----

std::map<std::string, std::string> read_config(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw CliError{SORFGP_ERR_VALIDATION, "config file not found: " + path};
  std::map<std::string, std::string> out;
  std::string line;
  while (std::getline(f, line)) {
    const auto b = line.find_first_not_of(" \t\r");
    if (b == std::string::npos || line[b] == '#') continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) continue;  // table rows in tune output
    auto trim = [](std::string s) {
      const auto x = s.find_first_not_of(" \t\r");
      const auto y = s.find_last_not_of(" \t\r");
      return x == std::string::npos ? std::string() : s.substr(x, y - x + 1);
    };
    std::string key = trim(line.substr(0, eq));
    for (char& c : key) if (c == '_') c = '-';
    out[key] = trim(line.substr(eq + 1));
  }
  return out;
}

/// Appends "--key=value" for config entries the subcommand knows and the
/// command line does not already set.
std::vector<std::string> apply_config(const std::vector<std::string>& args, CLI::App& app) {
  std::string config_path;
  std::size_t sub_pos = args.size();
  for (std::size_t i = 1; i < args.size(); ++i) {
    const std::string& a = args[i];
    if (a == "--config" && i + 1 < args.size()) {
      config_path = args[++i];
    } else if (a.rfind("--config=", 0) == 0) {
      config_path = a.substr(9);
    } else if (a == "--threads") {
      ++i;
    } else if (sub_pos == args.size() && !a.empty() && a[0] != '-') {
      sub_pos = i;
    }
  }
  if (config_path.empty() || sub_pos == args.size()) return args;
  CLI::App* sub = nullptr;
  try {
    sub = app.get_subcommand(args[sub_pos]);
  } catch (const CLI::OptionNotFound&) {
    return args;
  }
  std::vector<std::string> out = args;
  for (const auto& [key, value] : read_config(config_path)) {
    if (key == "config" || key == "threads") continue;
    const std::string flag = "--" + key;
    if (sub->get_option_no_throw(flag) == nullptr) continue;
    bool given = false;
    for (std::size_t i = sub_pos + 1; i < args.size(); ++i) {
      if (args[i] == flag || args[i].rfind(flag + "=", 0) == 0) given = true;
    }
    if (!given) out.push_back(flag + "=" + value);
  }
  return out;
}

// ---- commands ----

struct IngestCmd {
  std::string format, input, out, target, alphabet, elements = "H,C,N,O,F", report;
  std::size_t max_neighbors = 15, chunk_rows = 2000;
  sorfgp_synth_options synth{};

  void add(CLI::App* app) {
    sorfgp_synth_options_init(&synth);
    app->add_option("--format", format, "tabular, sequences, xyz, synthetic_gp or synthetic_landscape")->required();
    app->add_option("--input", input, "input file");
    app->add_option("--out", out, "output dataset directory")->required();
    app->add_option("--target", target, "tabular target column (name or index)");
    app->add_option("--alphabet", alphabet, "sequence alphabet (default: 20 amino acids)");
    app->add_option("--elements", elements, "comma-separated element symbols for xyz");
    app->add_option("--max-neighbors", max_neighbors, "neighbor blocks per atom");
    app->add_option("--chunk-rows", chunk_rows, "records per chunk");
    app->add_option("--n", synth.n, "synthetic_gp: rows");
    app->add_option("--d", synth.d, "synthetic_gp: input dimension");
    app->add_option("--sigma", synth.sigma, "synthetic_gp: inverse lengthscale");
    app->add_option("--beta", synth.beta, "synthetic_gp: amplitude");
    app->add_option("--noise", synth.noise, "synthetic_gp: noise std");
    app->add_option("--sites", synth.sites, "synthetic_landscape: positions");
    app->add_option("--options", synth.options, "synthetic_landscape: choices per position");
    app->add_option("--scale", synth.scale, "synthetic_landscape: fitness scale");
    app->add_option("--seed", synth.seed, "synthetic seed");
    app->add_option("--report", report, "summary file (default stdout)");
  }

  void run(const CLI::App* sub) {
    sorfgp_dataset* raw = nullptr;
    auto need_input = [&] {
      if (input.empty()) usage_error("--input is required for format " + format);
      if (!std::filesystem::exists(input)) usage_error("input not found: " + input);
    };
    if (format == "tabular") {
      need_input();
      if (target.empty()) usage_error("--target is required for tabular input");
      check(sorfgp_ingest_tabular(input.c_str(), target.c_str(), chunk_rows, out.c_str(), &raw));
    } else if (format == "sequences") {
      need_input();
      check(sorfgp_ingest_sequences(input.c_str(), alphabet.empty() ? nullptr : alphabet.c_str(),
                                    chunk_rows, out.c_str(), &raw));
    } else if (format == "xyz") {
      need_input();
      check(sorfgp_ingest_xyz(input.c_str(), elements.c_str(), max_neighbors, chunk_rows,
                              out.c_str(), &raw));
    } else if (format == "synthetic_gp" || format == "synthetic_landscape") {
      synth.kind = format == "synthetic_gp" ? 0 : 1;
      check(sorfgp_synthesize(&synth, chunk_rows, out.c_str(), &raw));
    } else {
      usage_error("unknown format '" + format + "'");
    }
    Dataset ds(raw);
    Report r(sub, "ingest");
    r.dataset("dataset", ds.get());
    const int kind = sorfgp_dataset_kind(ds.get());
    r.body() << "records=" << sorfgp_dataset_num_records(ds.get()) << "\n"
             << "width=" << sorfgp_dataset_width(ds.get()) << "\n"
             << "kind=" << (kind == 0 ? "fixed_vector" : kind == 1 ? "sequence" : "graph") << "\n"
             << "chunks=" << sorfgp_dataset_num_chunks(ds.get()) << "\n"
             << "content_hash=" << sorfgp_dataset_hash(ds.get()) << "\n";
    r.write(report);
  }
};

struct TuneCmd {
  std::string data, method = "grid", out;
  std::string lambda_grid = "-3:1:9", beta_grid = "-1:1:5", sigma_grid = "-2:1:7";
  std::string sigma_bounds = "-2:1";
  sorfgp_bayes_options bayes{};
  SpecFlags spec;
  SolverFlags solver;

  void add(CLI::App* app) {
    sorfgp_bayes_options_init(&bayes);
    app->add_option("--data", data, "dataset directory")->required();
    app->add_option("--method", method, "grid, bayes or approx_mll");
    app->add_option("--lambda-grid", lambda_grid, "log10 lo:hi:count");
    app->add_option("--beta-grid", beta_grid, "log10 lo:hi:count");
    app->add_option("--sigma-grid", sigma_grid, "log10 lo:hi:count (grid, approx_mll)");
    app->add_option("--sigma-bounds", sigma_bounds, "log10 lo:hi (bayes)");
    app->add_option("--bayes-init", bayes.n_init, "initial evaluations");
    app->add_option("--bayes-maxiter", bayes.maxiter, "total evaluations");
    app->add_option("--bayes-candidates", bayes.n_candidates, "candidate points per proposal");
    app->add_option("--bayes-samples", bayes.m_samples, "posterior draws per proposal");
    app->add_option("--bayes-tol", bayes.tol, "stop when a proposal repeats the incumbent");
    app->add_option("--bayes-seed", bayes.seed, "surrogate seed");
    app->add_option("--out", out, "result file (default stdout)");
    spec.add(app);
    solver.add(app, true);
  }

  void run(const CLI::App* sub) {
    Dataset ds = open_dataset(data);
    const sorfgp_spec s = spec.build(ds.get());
    const auto lambdas = log10_values(lambda_grid, "--lambda-grid");
    const auto betas = log10_values(beta_grid, "--beta-grid");
    std::vector<double> sigmas;
    if (s.kernel != SORFGP_KERNEL_ARCCOS1) sigmas = log10_values(sigma_grid, "--sigma-grid");
    sorfgp_tune_result* raw = nullptr;
    if (method == "grid") {
      check(sorfgp_tune_grid(ds.get(), &s, sigmas.data(), sigmas.size(), lambdas.data(),
                             lambdas.size(), betas.data(), betas.size(), &raw));
    } else if (method == "approx_mll") {
      const sorfgp_approx_options ao = solver.approx(s.seed);
      check(sorfgp_tune_approx(ds.get(), &s, sigmas.data(), sigmas.size(), lambdas.data(),
                               lambdas.size(), betas.data(), betas.size(), &ao, &raw));
    } else if (method == "bayes") {
      std::tie(bayes.log10_sigma_lo, bayes.log10_sigma_hi) = bounds(sigma_bounds, "--sigma-bounds");
      check(sorfgp_tune_bayes(ds.get(), &s, &bayes, lambdas.data(), lambdas.size(), betas.data(),
                              betas.size(), &raw));
    } else {
      usage_error("unknown tuning method '" + method + "' (expected grid, bayes or approx_mll)");
    }
    Tune result(raw);
    sorfgp_tune_point best;
    sorfgp_tune_result_best(result.get(), &best);

    Report r(sub, "tune");
    r.dataset("dataset", ds.get());
    // Plain key=value lines so the file can be passed to fit --config.
    auto& b = r.body();
    b << "method=" << method << "\n"
      << "kernel=" << sorfgp_kernel_name(s.kernel) << "\n"
      << "num-rffs=" << s.num_rffs << "\n"
      << "variance-rffs=" << s.variance_rffs << "\n"
      << "window=" << s.window << "\n"
      << "stage1-features=" << s.stage1_features << "\n"
      << "seed=" << s.seed << "\n"
      << "lambda=" << num(best.lambda) << "\n"
      << "beta=" << num(best.beta) << "\n"
      << "sigma=" << num(best.sigma) << "\n"
      << "nmll=" << num(best.nmll) << "\n"
      << "# trace\n# lambda beta sigma nmll\n";
    const std::size_t n = sorfgp_tune_result_size(result.get());
    for (std::size_t i = 0; i < n; ++i) {
      sorfgp_tune_point p;
      check(sorfgp_tune_result_get(result.get(), i, &p));
      b << num(p.lambda) << " " << num(p.beta) << " " << num(p.sigma) << " " << num(p.nmll) << "\n";
    }
    r.write(out);
  }
};

struct FitCmd {
  std::string data, out;
  SpecFlags spec;
  SolverFlags solver;

  void add(CLI::App* app) {
    app->add_option("--data", data, "dataset directory")->required();
    app->add_option("--out", out, "model artifact path")->required();
    spec.add(app);
    solver.add(app, false);
  }

  void run(const CLI::App* sub) {
    Dataset ds = open_dataset(data);
    const sorfgp_spec s = spec.build(ds.get());
    const sorfgp_fit_options fo = solver.fit();
    sorfgp_model* raw = nullptr;
    check(sorfgp_fit(ds.get(), &s, &fo, &raw));
    Model model(raw);
    Report r(sub, "fit");
    // Run config goes into the artifact's manifest.
    for (const CLI::Option* opt : sub->get_options()) {
      const std::string name = opt->get_single_name();
      if (name.empty() || name == "help") continue;
      const std::string value = opt->count() ? opt->results().front() : opt->get_default_str();
      check(sorfgp_model_set_meta(model.get(), ("config." + name).c_str(), value.c_str()));
    }
    check(sorfgp_model_set_meta(model.get(), "model_path", out.c_str()));
    check(sorfgp_model_save(model.get(), out.c_str()));
    for (std::size_t i = 0; i < sorfgp_model_num_warnings(model.get()); ++i) {
      std::cerr << "warning: " << sorfgp_model_warning(model.get(), i) << "\n";
    }
    r.dataset("dataset", ds.get());
    r.body() << "model=" << out << "\n"
             << "converged=" << (sorfgp_model_converged(model.get()) ? "true" : "false") << "\n"
             << "iterations=" << sorfgp_model_iterations(model.get()) << "\n";
    r.write("");
  }
};

struct Predictions {
  std::vector<double> mean, std, target;
};

/// Latent std by default; observation_noise adds lambda^2 for the spread of y.
Predictions predict_all(const sorfgp_model* model, const sorfgp_dataset* ds,
                        bool observation_noise) {
  const std::size_t n = sorfgp_dataset_num_records(ds);
  Predictions p;
  std::vector<double> var(n);
  p.mean.resize(n);
  p.std.resize(n);
  p.target.resize(n);
  check(sorfgp_predict(model, ds, p.mean.data(), var.data(), n));
  check(sorfgp_dataset_targets(ds, p.target.data(), n));
  sorfgp_spec spec;
  sorfgp_model_spec(model, &spec);
  const double noise = observation_noise ? spec.lambda * spec.lambda : 0.0;
  for (std::size_t i = 0; i < n; ++i) p.std[i] = std::sqrt(std::max(var[i], 0.0) + noise);
  return p;
}

struct PredictCmd {
  std::string model, data, out;
  bool observation_noise = false;

  void add(CLI::App* app) {
    app->add_option("--observation-noise", observation_noise, "add lambda^2 to the variance");
    app->add_option("--model", model, "model artifact")->required();
    app->add_option("--data", data, "dataset directory")->required();
    app->add_option("--out", out, "prediction table (default stdout)");
  }

  void run(const CLI::App* sub) {
    Model m = load_model(model);
    Dataset ds = open_dataset(data);
    const Predictions p = predict_all(m.get(), ds.get(), observation_noise);
    Report r(sub, "predict");
    r.model(model, m.get());
    r.dataset("dataset", ds.get());
    r.body() << "# id mean std target\n";
    for (std::size_t i = 0; i < p.mean.size(); ++i) {
      r.body() << i << " " << num(p.mean[i]) << " " << num(p.std[i]) << " " << num(p.target[i])
               << "\n";
    }
    r.write(out);
  }
};

/// Reads "id mean std target" rows, skipping comments.
Predictions read_predictions(const std::string& path) {
  std::ifstream f(path);
  if (!f) usage_error("predictions file not found: " + path);
  Predictions p;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(f, line)) {
    ++lineno;
    if (line.empty() || line[0] == '#') continue;
    std::istringstream ss(line);
    std::string id;
    double mean, sd, target;
    if (!(ss >> id >> mean >> sd >> target)) {
      usage_error(path + ":" + std::to_string(lineno) + ": expected 'id mean std target'");
    }
    p.mean.push_back(mean);
    p.std.push_back(sd);
    p.target.push_back(target);
  }
  return p;
}

struct CalibrateCmd {
  std::string predictions, model, data, out;
  bool observation_noise = false;

  void add(CLI::App* app) {
    app->add_option("--observation-noise", observation_noise, "add lambda^2 to the variance (with --model)");
    app->add_option("--predictions", predictions, "table from predict (id mean std target)");
    app->add_option("--model", model, "model artifact (with --data)");
    app->add_option("--data", data, "dataset directory (with --model)");
    app->add_option("--out", out, "report (default stdout)");
  }

  void run(const CLI::App* sub) {
    Report r(sub, "calibrate");
    Predictions p;
    if (!predictions.empty()) {
      p = read_predictions(predictions);
    } else {
      if (model.empty() || data.empty()) usage_error("give --predictions or both --model and --data");
      Model m = load_model(model);
      Dataset ds = open_dataset(data);
      r.model(model, m.get());
      r.dataset("dataset", ds.get());
      p = predict_all(m.get(), ds.get(), observation_noise);
    }
    std::vector<double> levels(SORFGP_CALIBRATION_LEVELS), coverage(SORFGP_CALIBRATION_LEVELS);
    double value = 0.0;
    check(sorfgp_auce(p.mean.data(), p.std.data(), p.target.data(), p.mean.size(), &value,
                      levels.data(), coverage.data()));
    r.body() << "n=" << p.mean.size() << "\n" << "auce=" << num(value) << "\n"
             << "# level coverage\n";
    for (std::size_t i = 0; i < levels.size(); ++i) {
      r.body() << num(levels[i]) << " " << num(coverage[i]) << "\n";
    }
    r.write(out);
  }
};

struct ClusterCmd {
  std::string model, data, out, index_out, elbow_range;
  std::size_t k = 0, max_iter = 100;
  std::uint64_t seed = 0;

  void add(CLI::App* app) {
    app->add_option("--model", model, "model artifact")->required();
    app->add_option("--data", data, "dataset directory")->required();
    app->add_option("--k", k, "clusters (0: elbow only)");
    app->add_option("--max-iter", max_iter, "Lloyd iterations");
    app->add_option("--seed", seed, "seeding tie-break seed");
    app->add_option("--elbow", elbow_range, "k range lo:hi for the elbow table");
    app->add_option("--index-out", index_out, "cluster index path (default <model>.sgpk)");
    app->add_option("--out", out, "report (default stdout)");
  }

  void run(const CLI::App* sub) {
    if (k == 0 && elbow_range.empty()) usage_error("give --k, --elbow or both");
    Model m = load_model(model);
    Dataset ds = open_dataset(data);
    Report r(sub, "cluster");
    r.model(model, m.get());
    r.dataset("dataset", ds.get());
    if (!elbow_range.empty()) {
      const auto [lo, hi] = bounds(elbow_range, "--elbow");
      if (lo < 1 || hi < lo) usage_error("--elbow: need 1 <= lo <= hi");
      const auto klo = static_cast<std::size_t>(lo), khi = static_cast<std::size_t>(hi);
      std::vector<double> obj(khi - klo + 1);
      check(sorfgp_elbow(m.get(), ds.get(), klo, khi, max_iter, seed, obj.data()));
      r.body() << "# elbow\n# k objective\n";
      for (std::size_t i = 0; i < obj.size(); ++i) r.body() << klo + i << " " << num(obj[i]) << "\n";
    }
    if (k > 0) {
      sorfgp_cluster_index* raw = nullptr;
      check(sorfgp_cluster(m.get(), ds.get(), k, max_iter, seed, &raw));
      Cluster idx(raw);
      const std::string path = index_out.empty() ? model + ".sgpk" : index_out;
      check(sorfgp_cluster_save(idx.get(), path.c_str()));
      const std::size_t n = sorfgp_cluster_num_points(idx.get());
      std::vector<std::size_t> assign(n);
      check(sorfgp_cluster_assignments(idx.get(), assign.data(), n));
      r.body() << "k=" << k << "\n"
               << "objective=" << num(sorfgp_cluster_objective(idx.get())) << "\n"
               << "iterations=" << sorfgp_cluster_iterations(idx.get()) << "\n"
               << "index=" << path << "\n"
               << "# id cluster\n";
      for (std::size_t i = 0; i < n; ++i) r.body() << i << " " << assign[i] << "\n";
    }
    r.write(out);
  }
};

struct KpcaCmd {
  std::string model, data, out;
  std::size_t components = 2;

  void add(CLI::App* app) {
    app->add_option("--model", model, "model artifact")->required();
    app->add_option("--data", data, "dataset directory")->required();
    app->add_option("--components", components, "principal components");
    app->add_option("--out", out, "report (default stdout)");
  }

  void run(const CLI::App* sub) {
    if (components == 0) usage_error("--components must be >= 1");
    Model m = load_model(model);
    Dataset ds = open_dataset(data);
    const std::size_t n = sorfgp_dataset_num_records(ds.get());
    std::vector<double> proj(n * components), explained(components);
    std::size_t got = 0;
    check(sorfgp_kpca(m.get(), ds.get(), components, proj.data(), explained.data(), &got));
    Report r(sub, "kpca");
    r.model(model, m.get());
    r.dataset("dataset", ds.get());
    r.body() << "components=" << got << "\n";
    if (got < components) r.body() << "truncated=true\n";
    r.body() << "# component explained_variance\n";
    for (std::size_t j = 0; j < got; ++j) r.body() << j + 1 << " " << num(explained[j]) << "\n";
    r.body() << "# id projections\n";
    for (std::size_t i = 0; i < n; ++i) {
      r.body() << i;
      for (std::size_t j = 0; j < got; ++j) r.body() << " " << num(proj[i * components + j]);
      r.body() << "\n";
    }
    r.write(out);
  }
};

struct RetrieveCmd {
  std::string model, store, queries, index, mode = "full_scan", out;
  std::size_t top_k = 10, clusters = 1;

  void add(CLI::App* app) {
    app->add_option("--model", model, "model artifact")->required();
    app->add_option("--store", store, "dataset to search")->required();
    app->add_option("--queries", queries, "dataset of queries")->required();
    app->add_option("--index", index, "cluster index from the cluster command");
    app->add_option("--mode", mode, "full_scan or cluster_restricted");
    app->add_option("--top-k", top_k, "results per query");
    app->add_option("--clusters", clusters, "nearest clusters searched in restricted mode");
    app->add_option("--out", out, "report (default stdout)");
  }

  void run(const CLI::App* sub) {
    int code = -1;
    if (mode == "full_scan") code = SORFGP_RETRIEVE_FULL_SCAN;
    if (mode == "cluster_restricted") code = SORFGP_RETRIEVE_CLUSTER;
    named(code, mode, "retrieval mode");
    if (code == SORFGP_RETRIEVE_CLUSTER && index.empty()) {
      usage_error("cluster_restricted retrieval needs --index");
    }
    Model m = load_model(model);
    Dataset st = open_dataset(store);
    Dataset qs = open_dataset(queries);
    Cluster idx;
    if (!index.empty()) {
      sorfgp_cluster_index* raw = nullptr;
      check(sorfgp_cluster_load(index.c_str(), &raw));
      idx.reset(raw);
    }
    sorfgp_retriever* rraw = nullptr;
    check(sorfgp_retriever_create(m.get(), idx.get(), st.get(), &rraw));
    Retriever ret(rraw);
    Report r(sub, "retrieve");
    r.model(model, m.get());
    r.dataset("store", st.get());
    r.dataset("queries", qs.get());
    r.body() << "# query rank id score\n";
    std::vector<std::size_t> ids(top_k);
    std::vector<double> scores(top_k);
    for (std::size_t q = 0; q < sorfgp_dataset_num_records(qs.get()); ++q) {
      std::size_t count = 0;
      int truncated = 0;
      check(sorfgp_retrieve(ret.get(), qs.get(), q, top_k, code, clusters, ids.data(),
                            scores.data(), &count, &truncated));
      for (std::size_t j = 0; j < count; ++j) {
        r.body() << q << " " << j + 1 << " " << ids[j] << " " << num(scores[j]) << "\n";
      }
      if (truncated) r.body() << "# query " << q << " truncated at " << count << "\n";
    }
    r.write(out);
  }
};

struct BoLoopCmd {
  std::string data, acquisition = "ucb", out;
  std::string lambda_grid = "-3:0:7", beta_grid = "-1:1:5";
  std::size_t seeds = 20;
  std::uint64_t seed_start = 0;
  double threshold = 0.99;
  bool tune = true;
  sorfgp_bo_options bo{};
  SpecFlags spec;

  void add(CLI::App* app) {
    sorfgp_bo_options_init(&bo);
    app->add_option("--data", data, "labeled pool (fixed vectors)")->required();
    app->add_option("--init", bo.init_size, "random initial picks");
    app->add_option("--batch", bo.batch_size, "picks per iteration");
    app->add_option("--iterations", bo.iterations, "acquisition rounds");
    app->add_option("--acquisition", acquisition, "ucb or random");
    app->add_option("--multiplier", bo.multiplier, "UCB std multiplier");
    app->add_option("--seeds", seeds, "independent runs");
    app->add_option("--seed-start", seed_start, "seed of the first run");
    app->add_option("--tune", tune, "re-tune lambda and beta on each refit");
    app->add_option("--lambda-grid", lambda_grid, "log10 lo:hi:count");
    app->add_option("--beta-grid", beta_grid, "log10 lo:hi:count");
    app->add_option("--threshold", threshold, "normalized fitness counted as a hit");
    app->add_option("--out", out, "report (default stdout)");
    spec.add(app);
  }

  void run(const CLI::App* sub) {
    if (acquisition == "ucb") {
      bo.acquisition = SORFGP_ACQ_UCB;
    } else if (acquisition == "random") {
      bo.acquisition = SORFGP_ACQ_RANDOM;
    } else {
      usage_error("unknown acquisition '" + acquisition + "' (expected ucb or random)");
    }
    if (seeds == 0) usage_error("--seeds must be >= 1");
    bo.tune = tune ? 1 : 0;
    Dataset ds = open_dataset(data);
    const sorfgp_spec s = spec.build(ds.get());
    const auto lambdas = log10_values(lambda_grid, "--lambda-grid");
    const auto betas = log10_values(beta_grid, "--beta-grid");
    Report r(sub, "boloop");
    r.dataset("dataset", ds.get());
    std::vector<double> mean(bo.iterations + 1, 0.0), best(bo.iterations + 1);
    std::size_t hits = 0;
    std::ostringstream rows;
    for (std::size_t k = 0; k < seeds; ++k) {
      bo.seed = seed_start + k;
      int exhausted = 0;
      check(sorfgp_bo_loop(ds.get(), &s, &bo, lambdas.data(), lambdas.size(), betas.data(),
                           betas.size(), best.data(), &exhausted));
      rows << bo.seed;
      for (std::size_t i = 0; i < best.size(); ++i) {
        rows << " " << num(best[i]);
        mean[i] += best[i] / static_cast<double>(seeds);
      }
      rows << " " << exhausted << "\n";
      if (best.back() >= threshold) ++hits;
    }
    r.body() << "seeds=" << seeds << "\n" << "hits=" << hits << "\n" << "# mean best-so-far\n";
    for (std::size_t i = 0; i < mean.size(); ++i) r.body() << i << " " << num(mean[i]) << "\n";
    r.body() << "# trajectories: seed best_after_init best_after_iter... exhausted\n" << rows.str();
    r.write(out);
  }
};

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) if (!item.empty()) out.push_back(item);
  return out;
}

struct BenchCmd {
  std::string what = "all", m_list = "4096,16384", ranks = "64,128,256,512";
  std::string variants = "gauss,srht,srht_2", out;
  std::size_t rows = 2000, dim = 1024, repeats = 3, n = 4000, m = 512, maxiter = 5000;
  double cond = 1e6, lambda = 1e-3, tol = 1e-6;
  bool dense = true;
  std::uint64_t seed = 0;

  void add(CLI::App* app) {
    app->add_option("--what", what, "sorf, iterations or all");
    app->add_option("--rows", rows, "sorf: batch rows");
    app->add_option("--dim", dim, "sorf: input dimension");
    app->add_option("--m-list", m_list, "sorf: feature counts");
    app->add_option("--dense", dense, "sorf: time the dense projection too");
    app->add_option("--repeats", repeats, "sorf: timing repeats (best kept)");
    app->add_option("--n", n, "iterations: rows");
    app->add_option("--m", m, "iterations: features");
    app->add_option("--cond", cond, "iterations: condition number of Z^T Z");
    app->add_option("--lambda", lambda, "iterations: noise level");
    app->add_option("--ranks", ranks, "iterations: preconditioner ranks");
    app->add_option("--variants", variants, "iterations: sketch variants");
    app->add_option("--tol", tol, "iterations: tolerance");
    app->add_option("--maxiter", maxiter, "iterations: cap");
    app->add_option("--seed", seed, "seed");
    app->add_option("--out", out, "report (default stdout)");
  }

  void run(const CLI::App* sub) {
    if (what != "all" && what != "sorf" && what != "iterations") {
      usage_error("unknown bench '" + what + "' (expected sorf, iterations or all)");
    }
    Report r(sub, "bench");
    auto parse_sizes = [](const std::string& s, const char* flag) {
      std::vector<std::size_t> v;
      for (const auto& t : split_list(s)) {
        try {
          v.push_back(static_cast<std::size_t>(std::stoul(t)));
        } catch (const std::exception&) {
          usage_error(std::string(flag) + ": not an integer: " + t);
        }
      }
      if (v.empty()) usage_error(std::string(flag) + " is empty");
      return v;
    };
    if (what != "iterations") {
      const auto ms = parse_sizes(m_list, "--m-list");
      std::vector<double> ts(ms.size()), td(ms.size());
      check(sorfgp_bench_sorf(rows, dim, ms.data(), ms.size(), seed, dense ? 1 : 0, repeats,
                              ts.data(), td.data()));
      r.body() << "# sorf timing (seconds, best of " << repeats << ")\n# M sorf dense\n";
      for (std::size_t i = 0; i < ms.size(); ++i) {
        r.body() << ms[i] << " " << num(ts[i]) << " " << num(td[i]) << "\n";
      }
      for (std::size_t i = 1; i < ms.size(); ++i) {
        r.body() << "# ratio " << ms[i] << "/" << ms[i - 1] << " = " << num(ts[i] / ts[i - 1]) << "\n";
      }
    }
    if (what != "sorf") {
      const auto rk = parse_sizes(ranks, "--ranks");
      std::vector<int> vs;
      for (const auto& v : split_list(variants)) {
        vs.push_back(named(sorfgp_sketch_from_name(v.c_str()), v, "sketch variant"));
      }
      if (vs.empty()) usage_error("--variants is empty");
      std::vector<sorfgp_iteration_row> table(rk.size() * vs.size());
      check(sorfgp_bench_iterations(n, m, cond, lambda, rk.data(), rk.size(), vs.data(), vs.size(),
                                    tol, maxiter, seed, table.data()));
      r.body() << "# cg vs pcg iterations\n# rank variant cg pcg cg_converged pcg_converged ratio\n";
      for (const auto& row : table) {
        r.body() << row.rank << " " << sorfgp_sketch_name(row.variant) << " " << row.cg_iterations
                 << " " << row.pcg_iterations << " " << row.cg_converged << " "
                 << row.pcg_converged << " " << num(row.ratio) << "\n";
      }
    }
    r.write(out);
  }
};

void print_error(const std::string& command, int code, const std::string& message) {
  nlohmann::json rec = {{"error", kind_name(code)}, {"code", code}, {"message", message}};
  if (!command.empty()) rec["command"] = command;
  std::cerr << rec.dump() << std::endl;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Random-feature Gaussian process toolkit"};
  app.require_subcommand(1);
  app.option_defaults()->always_capture_default();
  app.fallthrough();  // --threads and --config may follow the subcommand
  std::size_t threads = 0;
  std::string config;
  app.add_option("--threads", threads, "worker cap (0: all cores)")->envname("SORFGP_THREADS");
  app.add_option("--config", config, "key=value file of defaults for the command's flags");

  IngestCmd ingest;
  TuneCmd tune;
  FitCmd fit;
  PredictCmd predict;
  CalibrateCmd calibrate;
  ClusterCmd cluster;
  KpcaCmd kpca;
  RetrieveCmd retrieve;
  BoLoopCmd boloop;
  BenchCmd bench;

  std::vector<std::pair<CLI::App*, std::function<void(const CLI::App*)>>> commands;
  auto reg = [&](const char* name, const char* help, auto& cmd) {
    CLI::App* sub = app.add_subcommand(name, help);
    cmd.add(sub);
    commands.emplace_back(sub, [&cmd](const CLI::App* s) { cmd.run(s); });
  };
  reg("ingest", "convert raw inputs to a chunked dataset", ingest);
  reg("tune", "select hyperparameters (grid, bayes, approx_mll)", tune);
  reg("fit", "fit a model and write the artifact", fit);
  reg("predict", "predictive mean and std per record", predict);
  reg("calibrate", "AUCE and calibration curve", calibrate);
  reg("cluster", "k-means in feature space and elbow table", cluster);
  reg("kpca", "kernel PCA projections", kpca);
  reg("retrieve", "nearest records by feature-space similarity", retrieve);
  reg("boloop", "simulated active learning over a labeled pool", boloop);
  reg("bench", "SORF timings and CG/PCG iteration tables", bench);

  std::string command;
  try {
    std::vector<std::string> args(argv, argv + argc);
    args = apply_config(args, app);
    std::vector<char*> cargs;
    for (auto& a : args) cargs.push_back(a.data());
    try {
      app.parse(static_cast<int>(cargs.size()), cargs.data());
    } catch (const CLI::CallForHelp& e) {
      return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
      return app.exit(e);
    } catch (const CLI::ParseError& e) {
      print_error("", SORFGP_ERR_VALIDATION, e.what());
      return SORFGP_ERR_VALIDATION;
    }
    if (threads > 0) sorfgp_set_threads(threads);
    for (auto& [sub, run] : commands) {
      if (sub->parsed()) {
        command = sub->get_name();
        run(sub);
      }
    }
    return 0;
  } catch (const CliError& e) {
    print_error(command, e.code, e.message);
    return e.code;
  } catch (const std::exception& e) {
    print_error(command, SORFGP_ERR_INTERNAL, e.what());
    return SORFGP_ERR_INTERNAL;
  }
}
