#include "gp/model.hpp"

#include <Eigen/Cholesky>

#include "util/binio.hpp"
#include "util/error.hpp"
#include "util/rng.hpp"

namespace sorfgp {

const char* to_string(SolverMode mode) {
  switch (mode) {
    case SolverMode::Pcg: return "pcg";
    case SolverMode::Cg: return "cg";
    case SolverMode::Dense: return "dense";
  }
  return "unknown";
}

SolverMode parse_solver_mode(const std::string& name) {
  if (name == "pcg") return SolverMode::Pcg;
  if (name == "cg") return SolverMode::Cg;
  if (name == "dense") return SolverMode::Dense;
  throw ValidationError("unknown solver mode '" + name + "' (expected pcg, cg or dense)");
}

namespace {

void check_input(const FeatureMapSpec& spec, InputKind kind, std::size_t width) {
  if (kind != spec.input_kind()) {
    throw ValidationError(std::string("kernel ") + to_string(spec.kernel) + " expects " +
                          to_string(spec.input_kind()) + " input, dataset holds " +
                          to_string(kind));
  }
  if (width != spec.input_width) {
    throw ValidationError("feature width mismatch: model expects " +
                          std::to_string(spec.input_width) + ", input has " +
                          std::to_string(width));
  }
}

Matrix variance_factor(const FeatureStream& stream, double lambda) {
  GramMoments mom = accumulate_moments(stream);
  mom.gram.diagonal().array() += lambda * lambda;
  Eigen::LLT<Matrix> llt(mom.gram);
  if (llt.info() != Eigen::Success) {
    throw NumericalError("variance factorization failed; increase lambda");
  }
  return llt.matrixL();
}

}  // namespace

GPModel fit(const DataSource& data, const FeatureMapSpec& spec, const FitOptions& opts) {
  spec.validate();
  check_input(spec, data.kind(), data.width());
  require(data.num_records() > 0, "cannot fit on an empty dataset");
  GPModel model(FeatureMap(spec), FeatureMap(spec.variance_spec()));
  const double lambda = spec.hyper.lambda;

  MappedFeatureStream stream(data, model.map());
  GramSystem sys(stream, lambda);
  SolveOptions sopts{opts.tol, opts.maxiter};

  switch (opts.mode) {
    case SolverMode::Dense: {
      const GramMoments mom = accumulate_moments(stream);
      const DenseEigSolution sol = dense_eig_solve(mom.gram, mom.zty, mom.yty, lambda);
      model.w = sol.weights;
      model.report.weights = sol.weights;
      model.report.converged = true;
      break;
    }
    case SolverMode::Cg: {
      Vector zty;
      double yty;
      sys.rhs(zty, yty);
      model.report = cg_solve(sys, zty, sopts);
      model.w = model.report.weights;
      break;
    }
    case SolverMode::Pcg: {
      Vector zty;
      double yty;
      sys.rhs(zty, yty);
      const std::size_t rank = std::min(opts.precond_rank, spec.num_rffs);
      NystromPreconditioner pre = build_preconditioner(
          stream, rank, lambda, opts.variant, derive_seed(spec.seed, SeedPurpose::Preconditioner));
      model.report = cg_solve(sys, zty, sopts, &pre);
      model.w = model.report.weights;
      if (opts.keep_preconditioner) model.precond = std::move(pre);
      break;
    }
  }
  if (!model.report.converged) {
    model.warnings.push_back("solver did not converge to tol " + std::to_string(opts.tol) +
                             " within " + std::to_string(opts.maxiter) + " iterations");
  }

  MappedFeatureStream var_stream(data, model.variance_map());
  model.var_chol = variance_factor(var_stream, lambda);

  Manifest& mf = model.manifest;
  if (const auto* ds = dynamic_cast<const ChunkedDataset*>(&data)) {
    mf["dataset_hash"] = ds->content_hash();
    mf["dataset_path"] = ds->directory().string();
  }
  mf["num_records"] = std::to_string(data.num_records());
  mf["rng"] = std::string(kRngIdentity);
  mf["seed"] = std::to_string(spec.seed);
  mf["solver"] = to_string(opts.mode);
  mf["tol"] = std::to_string(opts.tol);
  mf["maxiter"] = std::to_string(opts.maxiter);
  if (opts.mode == SolverMode::Pcg) {
    mf["precond_rank"] = std::to_string(std::min(opts.precond_rank, spec.num_rffs));
    mf["precond_variant"] = to_string(opts.variant);
  }
  mf["iterations"] = std::to_string(model.report.iterations);
  mf["converged"] = model.report.converged ? "true" : "false";
  return model;
}

Prediction predict(const GPModel& model, const Chunk& chunk) {
  check_input(model.spec(), chunk.kind(), chunk.width());
  Prediction out;
  if (chunk.empty()) return out;
  const RowMatrix z = model.map().transform(chunk);
  out.mean = z * model.w;
  const RowMatrix zv = model.variance_map().transform(chunk);
  const Matrix solved = model.var_chol.triangularView<Eigen::Lower>().solve(zv.transpose());
  const double l2 = model.hyperparams().lambda * model.hyperparams().lambda;
  out.variance = l2 * solved.colwise().squaredNorm().transpose();
  return out;
}

Prediction predict(const GPModel& model, const DataSource& data) {
  check_input(model.spec(), data.kind(), data.width());
  Prediction out;
  out.mean.resize(static_cast<Eigen::Index>(data.num_records()));
  out.variance.resize(out.mean.size());
  Eigen::Index at = 0;
  for (std::size_t c = 0; c < data.num_chunks(); ++c) {
    const Prediction p = predict(model, data.load_chunk(c));
    out.mean.segment(at, p.mean.size()) = p.mean;
    out.variance.segment(at, p.variance.size()) = p.variance;
    at += p.mean.size();
  }
  return out;
}

Prediction predict(const GPModel& model, const RowMatrix& x) {
  Chunk chunk(InputKind::FixedVector, static_cast<std::size_t>(x.cols()));
  for (Eigen::Index r = 0; r < x.rows(); ++r) {
    chunk.add(std::span<const double>(x.row(r).data(), static_cast<std::size_t>(x.cols())), 1, 0.0);
  }
  return predict(model, chunk);
}

// ---------------------------------------------------------------------------
// Model artifact. Layout is documented in docs/FORMATS.md.

namespace {

constexpr char kModelMagic[4] = {'S', 'G', 'P', 'M'};

void put_operator(ByteWriter& w, const SorfOperator& op) {
  w.put<std::uint64_t>(op.input_dim());
  w.put<std::uint64_t>(op.num_outputs());
  w.put<std::uint64_t>(op.seed());
  w.put_array(op.all_signs().data(), op.all_signs().size());
  w.put_array(op.chi().data(), op.chi().size());
}

SorfOperator get_operator(ByteReader& r) {
  const auto d = r.get<std::uint64_t>();
  const auto m = r.get<std::uint64_t>();
  const auto seed = r.get<std::uint64_t>();
  auto signs = r.get_array<std::int8_t>();
  auto chi = r.get_array<double>();
  return SorfOperator(d, m, seed, std::move(signs), std::move(chi));
}

void put_matrix(ByteWriter& w, const Matrix& m) {
  w.put<std::uint64_t>(static_cast<std::uint64_t>(m.rows()));
  w.put<std::uint64_t>(static_cast<std::uint64_t>(m.cols()));
  w.put_bytes(m.data(), static_cast<std::size_t>(m.size()) * sizeof(double));
}

Matrix get_matrix(ByteReader& r) {
  const auto rows = r.get<std::uint64_t>();
  const auto cols = r.get<std::uint64_t>();
  Matrix m(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
  r.get_bytes(m.data(), rows * cols * sizeof(double));
  return m;
}

void put_table(ByteWriter& w, const std::vector<std::vector<double>>& t) {
  w.put<std::uint64_t>(t.size());
  for (const auto& row : t) w.put_array(row.data(), row.size());
}

std::vector<std::vector<double>> get_table(ByteReader& r) {
  std::vector<std::vector<double>> t(r.get<std::uint64_t>());
  for (auto& row : t) row = r.get_array<double>();
  return t;
}

void put_spec(ByteWriter& w, const FeatureMapSpec& s) {
  w.put<std::uint32_t>(static_cast<std::uint32_t>(s.kernel));
  w.put<std::uint64_t>(s.input_width);
  w.put<std::uint64_t>(s.window);
  w.put<std::uint64_t>(s.num_rffs);
  w.put<std::uint64_t>(s.variance_rffs);
  w.put<std::uint64_t>(s.stage1_features);
  w.put<std::uint64_t>(s.seed);
  w.put<double>(s.hyper.lambda);
  w.put<double>(s.hyper.beta);
  w.put<double>(s.hyper.sigma);
}

FeatureMapSpec get_spec(ByteReader& r) {
  FeatureMapSpec s;
  const auto kernel = r.get<std::uint32_t>();
  if (kernel > static_cast<std::uint32_t>(KernelKind::GraphRbf)) {
    throw IoError("model file has unknown kernel code " + std::to_string(kernel));
  }
  s.kernel = static_cast<KernelKind>(kernel);
  s.input_width = r.get<std::uint64_t>();
  s.window = r.get<std::uint64_t>();
  s.num_rffs = r.get<std::uint64_t>();
  s.variance_rffs = r.get<std::uint64_t>();
  s.stage1_features = r.get<std::uint64_t>();
  s.seed = r.get<std::uint64_t>();
  s.hyper.lambda = r.get<double>();
  s.hyper.beta = r.get<double>();
  s.hyper.sigma = r.get<double>();
  return s;
}

}  // namespace

void save_model(const GPModel& model, const std::filesystem::path& path) {
  ByteWriter w;
  w.put_bytes(kModelMagic, 4);
  w.put<std::uint32_t>(kModelVersion);

  w.put<std::uint64_t>(model.manifest.size());
  for (const auto& [k, v] : model.manifest) {
    w.put_string(k);
    w.put_string(v);
  }
  put_spec(w, model.spec());
  put_operator(w, model.map().sorf());
  w.put<std::uint8_t>(model.map().stage1_sorf() ? 1 : 0);
  if (model.map().stage1_sorf()) put_operator(w, *model.map().stage1_sorf());
  put_operator(w, model.variance_map().sorf());

  w.put_array(model.w.data(), static_cast<std::size_t>(model.w.size()));
  put_matrix(w, model.var_chol);

  const SolveReport& rep = model.report;
  w.put<std::uint64_t>(rep.iterations);
  w.put<std::uint8_t>(rep.converged ? 1 : 0);
  w.put<std::uint64_t>(rep.num_probes);
  w.put_array(rep.column_iterations.data(), rep.column_iterations.size());
  put_table(w, rep.residual_history);
  put_table(w, rep.alphas);
  put_table(w, rep.betas);
  w.put<std::uint8_t>(rep.logdet_estimate ? 1 : 0);
  w.put<double>(rep.logdet_estimate.value_or(0.0));

  w.put<std::uint64_t>(model.warnings.size());
  for (const auto& s : model.warnings) w.put_string(s);

  w.put<std::uint8_t>(model.precond ? 1 : 0);
  if (model.precond) {
    w.put<std::uint32_t>(static_cast<std::uint32_t>(model.precond->variant()));
    w.put<double>(model.precond->lambda());
    put_matrix(w, model.precond->u());
    w.put_array(model.precond->eigenvalues().data(),
                static_cast<std::size_t>(model.precond->eigenvalues().size()));
  }
  write_file_bytes(path, w.bytes());
}

GPModel load_model(const std::filesystem::path& path) {
  ByteReader r(read_file_bytes(path), path.string());
  char magic[4];
  r.get_bytes(magic, 4);
  if (std::memcmp(magic, kModelMagic, 4) != 0) {
    throw ValidationError(path.string() + " is not a model artifact");
  }
  const auto version = r.get<std::uint32_t>();
  if (version != kModelVersion) {
    throw ValidationError("model artifact version " + std::to_string(version) +
                          " is not supported (expected " + std::to_string(kModelVersion) + ")");
  }
  Manifest manifest;
  const auto entries = r.get<std::uint64_t>();
  for (std::uint64_t i = 0; i < entries; ++i) {
    std::string k = r.get_string();
    manifest[k] = r.get_string();
  }
  const FeatureMapSpec spec = get_spec(r);
  SorfOperator main = get_operator(r);
  std::optional<SorfOperator> stage1;
  if (r.get<std::uint8_t>()) stage1 = get_operator(r);
  SorfOperator var_main = get_operator(r);

  const FeatureMapSpec vspec = spec.variance_spec();
  GPModel model(FeatureMap(spec, std::move(main), stage1),
                FeatureMap(vspec, std::move(var_main), stage1));
  model.manifest = std::move(manifest);
  auto w = r.get_array<double>();
  model.w = Eigen::Map<Vector>(w.data(), static_cast<Eigen::Index>(w.size()));
  model.var_chol = get_matrix(r);

  SolveReport& rep = model.report;
  rep.iterations = r.get<std::uint64_t>();
  rep.converged = r.get<std::uint8_t>() != 0;
  rep.num_probes = r.get<std::uint64_t>();
  rep.column_iterations = r.get_array<std::size_t>();
  rep.residual_history = get_table(r);
  rep.alphas = get_table(r);
  rep.betas = get_table(r);
  const bool has_logdet = r.get<std::uint8_t>() != 0;
  const double logdet = r.get<double>();
  if (has_logdet) rep.logdet_estimate = logdet;
  rep.weights = model.w;

  const auto nwarn = r.get<std::uint64_t>();
  for (std::uint64_t i = 0; i < nwarn; ++i) model.warnings.push_back(r.get_string());

  if (r.get<std::uint8_t>()) {
    const auto variant = static_cast<SketchVariant>(r.get<std::uint32_t>());
    const double lambda = r.get<double>();
    Matrix u = get_matrix(r);
    auto lam = r.get_array<double>();
    model.precond = NystromPreconditioner(
        std::move(u), Eigen::Map<Vector>(lam.data(), static_cast<Eigen::Index>(lam.size())),
        lambda, variant);
  }
  if (!r.at_end()) throw IoError("trailing bytes in model artifact " + path.string());
  const auto m = static_cast<Eigen::Index>(spec.num_rffs);
  const auto mv = static_cast<Eigen::Index>(vspec.num_rffs);
  if (model.w.size() != m || model.var_chol.rows() != mv || model.var_chol.cols() != mv) {
    throw IoError("model artifact " + path.string() + " is inconsistent with its spec");
  }
  return model;
}

}  // namespace sorfgp
