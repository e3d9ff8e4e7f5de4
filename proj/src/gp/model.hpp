#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "data/dataset.hpp"
#include "features/feature_map.hpp"
#include "solvers/cg.hpp"
#include "solvers/nystrom.hpp"
#include "util/linalg.hpp"

namespace sorfgp {

enum class SolverMode : std::uint32_t { Pcg = 0, Cg = 1, Dense = 2 };

const char* to_string(SolverMode mode);
SolverMode parse_solver_mode(const std::string& name);

struct FitOptions {
  SolverMode mode = SolverMode::Pcg;
  double tol = 1e-6;
  std::size_t maxiter = 500;
  std::size_t precond_rank = 256;  // clipped to M
  SketchVariant variant = SketchVariant::Srht2;
  bool keep_preconditioner = false;
};

class GPModel {
 public:
  GPModel(FeatureMap map, FeatureMap var_map) : map_(std::move(map)), var_map_(std::move(var_map)) {}

  const FeatureMapSpec& spec() const { return map_.spec(); }
  const Hyperparams& hyperparams() const { return map_.spec().hyper; }
  const FeatureMap& map() const { return map_; }
  const FeatureMap& variance_map() const { return var_map_; }

  Vector w;
  Matrix var_chol;  // lower factor of Z_var^T Z_var + lambda^2 I
  SolveReport report;
  Manifest manifest;
  std::vector<std::string> warnings;
  std::optional<NystromPreconditioner> precond;

  bool converged() const { return report.converged; }

 private:
  FeatureMap map_;
  FeatureMap var_map_;
};

struct Prediction {
  Vector mean;
  Vector variance;
};

GPModel fit(const DataSource& data, const FeatureMapSpec& spec, const FitOptions& opts = {});

Prediction predict(const GPModel& model, const Chunk& chunk);
Prediction predict(const GPModel& model, const DataSource& data);
/// Fixed-vector inputs, one per row.
Prediction predict(const GPModel& model, const RowMatrix& x);

inline constexpr std::uint32_t kModelVersion = 1;

void save_model(const GPModel& model, const std::filesystem::path& path);
GPModel load_model(const std::filesystem::path& path);

}  // namespace sorfgp
