#include <gtest/gtest.h>

#include <cmath>
#include <cstdlib>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "sorfgp/sorfgp.h"
#include "tmpdir.hpp"

namespace {

struct Data {
  std::vector<double> x, y;
  std::size_t n, d;
};

Data smooth_data(std::size_t n, std::size_t d, unsigned seed) {
  Data out{{}, {}, n, d};
  unsigned s = seed;
  auto next = [&] {
    s = s * 1664525u + 1013904223u;
    return (static_cast<double>(s >> 8) / 16777216.0) * 2.0 - 1.0;
  };
  for (std::size_t i = 0; i < n; ++i) {
    double acc = 0.0;
    for (std::size_t j = 0; j < d; ++j) {
      const double v = next();
      out.x.push_back(v);
      acc += std::sin(2.0 * v);
    }
    out.y.push_back(acc);
  }
  return out;
}

sorfgp_dataset* write(const Data& data, const std::string& dir, std::size_t chunk_rows = 32) {
  sorfgp_dataset* ds = nullptr;
  EXPECT_EQ(sorfgp_write_matrix(data.x.data(), data.y.data(), data.n, data.d, chunk_rows,
                                dir.c_str(), &ds),
            SORFGP_OK)
      << sorfgp_last_error();
  return ds;
}

sorfgp_spec rbf_spec(std::size_t m, double lambda) {
  sorfgp_spec s;
  sorfgp_spec_init(&s);
  s.kernel = SORFGP_KERNEL_RBF;
  s.num_rffs = m;
  s.lambda = lambda;
  return s;
}

// Runs the CLI, returns its exit code; stdout goes to `out`.
int run_cli(const std::string& args, const std::string& out) {
  const std::string cmd = std::string(SORFGP_CLI_PATH) + " " + args + " > " + out + " 2> " + out + ".err";
  const int rc = std::system(cmd.c_str());
  return WIFEXITED(rc) ? WEXITSTATUS(rc) : -1;
}

std::string slurp(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  std::stringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

std::map<std::string, std::string> key_values(const std::string& text) {
  std::map<std::string, std::string> out;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    const auto eq = line.find('=');
    if (eq != std::string::npos) out[line.substr(0, eq)] = line.substr(eq + 1);
  }
  return out;
}

std::vector<std::vector<double>> table(const std::string& text) {
  std::vector<std::vector<double>> rows;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#' || line.find('=') != std::string::npos) continue;
    std::istringstream ls(line);
    std::vector<double> row;
    double v;
    while (ls >> v) row.push_back(v);
    rows.push_back(row);
  }
  return rows;
}

}  // namespace

TEST(CApi, VersionAndErrorState) {
  EXPECT_STRNE(sorfgp_version(), "");
  sorfgp_dataset* ds = nullptr;
  EXPECT_EQ(sorfgp_dataset_open("/definitely/not/here", &ds), SORFGP_ERR_VALIDATION);
  EXPECT_NE(std::string(sorfgp_last_error()).find("/definitely/not/here"), std::string::npos);
  EXPECT_EQ(ds, nullptr);
  EXPECT_EQ(sorfgp_dataset_open(nullptr, &ds), SORFGP_ERR_VALIDATION);
  sorfgp_set_threads(2);
  EXPECT_EQ(sorfgp_get_threads(), 2u);
}

TEST(CApi, NameLookups) {
  EXPECT_EQ(sorfgp_kernel_from_name("fht_conv1d"), SORFGP_KERNEL_FHT_CONV1D);
  EXPECT_EQ(sorfgp_kernel_from_name("nope"), -1);
  EXPECT_STREQ(sorfgp_kernel_name(SORFGP_KERNEL_GRAPH_RBF), "graph_rbf");
  EXPECT_EQ(sorfgp_sketch_from_name("srht_2"), SORFGP_SKETCH_SRHT2);
  EXPECT_EQ(sorfgp_solver_from_name("dense"), SORFGP_SOLVER_DENSE);
  EXPECT_EQ(sorfgp_kernel_name(99), nullptr);
}

TEST(CApi, DatasetRoundTrip) {
  TempDir tmp;
  const Data d = smooth_data(70, 3, 1);
  sorfgp_dataset* ds = write(d, (tmp / "ds").string(), 32);
  ASSERT_NE(ds, nullptr);
  EXPECT_EQ(sorfgp_dataset_num_records(ds), 70u);
  EXPECT_EQ(sorfgp_dataset_width(ds), 3u);
  EXPECT_EQ(sorfgp_dataset_kind(ds), SORFGP_INPUT_FIXED_VECTOR);
  EXPECT_EQ(sorfgp_dataset_num_chunks(ds), 3u);
  std::vector<double> y(70);
  ASSERT_EQ(sorfgp_dataset_targets(ds, y.data(), 70), SORFGP_OK);
  EXPECT_EQ(y, d.y);
  EXPECT_EQ(sorfgp_dataset_targets(ds, y.data(), 3), SORFGP_ERR_VALIDATION);
  int ok = 0;
  ASSERT_EQ(sorfgp_dataset_verify(ds, &ok), SORFGP_OK);
  EXPECT_EQ(ok, 1);
  sorfgp_dataset* again = nullptr;
  ASSERT_EQ(sorfgp_dataset_open(sorfgp_dataset_path(ds), &again), SORFGP_OK);
  EXPECT_STREQ(sorfgp_dataset_hash(again), sorfgp_dataset_hash(ds));
  sorfgp_dataset_free(again);
  sorfgp_dataset_free(ds);
}

TEST(CApi, FitPredictSaveLoad) {
  TempDir tmp;
  const Data d = smooth_data(60, 5, 2);
  sorfgp_dataset* ds = write(d, (tmp / "ds").string());
  sorfgp_spec spec = rbf_spec(256, 1e-3);
  spec.sigma = 1.0;
  sorfgp_fit_options fo;
  sorfgp_fit_options_init(&fo);
  EXPECT_EQ(fo.solver, SORFGP_SOLVER_PCG);
  fo.solver = SORFGP_SOLVER_DENSE;
  sorfgp_model* m = nullptr;
  ASSERT_EQ(sorfgp_fit(ds, &spec, &fo, &m), SORFGP_OK) << sorfgp_last_error();
  EXPECT_EQ(sorfgp_model_converged(m), 1);
  sorfgp_spec got;
  sorfgp_model_spec(m, &got);
  EXPECT_EQ(got.input_width, 5u);
  EXPECT_EQ(got.num_rffs, 256u);

  std::vector<double> mean(60), var(60), mean2(60), var2(60);
  ASSERT_EQ(sorfgp_predict(m, ds, mean.data(), var.data(), 60), SORFGP_OK);
  ASSERT_EQ(sorfgp_predict_matrix(m, d.x.data(), 60, 5, mean2.data(), var2.data()), SORFGP_OK);
  for (std::size_t i = 0; i < 60; ++i) {
    EXPECT_NEAR(mean[i], d.y[i], 0.05);
    EXPECT_GE(var[i], 0.0);
    // Dataset chunks are float32; the matrix path is not.
    EXPECT_NEAR(mean[i], mean2[i], 1e-5);
  }
  EXPECT_EQ(sorfgp_predict_matrix(m, d.x.data(), 20, 4, mean2.data(), var2.data()),
            SORFGP_ERR_VALIDATION);
  EXPECT_NE(std::string(sorfgp_last_error()).find("width"), std::string::npos);

  ASSERT_EQ(sorfgp_model_set_meta(m, "note", "abc"), SORFGP_OK);
  EXPECT_EQ(sorfgp_model_set_meta(m, "bad=key", "x"), SORFGP_ERR_VALIDATION);
  const std::string path = (tmp / "m.sgpm").string();
  ASSERT_EQ(sorfgp_model_save(m, path.c_str()), SORFGP_OK);
  sorfgp_model* loaded = nullptr;
  ASSERT_EQ(sorfgp_model_load(path.c_str(), &loaded), SORFGP_OK);
  EXPECT_STREQ(sorfgp_model_get_meta(loaded, "note"), "abc");
  EXPECT_STREQ(sorfgp_model_get_meta(loaded, "dataset_hash"), sorfgp_dataset_hash(ds));
  EXPECT_EQ(sorfgp_model_get_meta(loaded, "missing"), nullptr);
  bool saw_note = false;
  for (std::size_t i = 0; i < sorfgp_model_num_meta(loaded); ++i) {
    saw_note |= std::string(sorfgp_model_meta_key(loaded, i)) == "note";
  }
  EXPECT_TRUE(saw_note);
  ASSERT_EQ(sorfgp_predict(loaded, ds, mean2.data(), var2.data(), 60), SORFGP_OK);
  EXPECT_EQ(mean, mean2);
  EXPECT_EQ(var, var2);

  // A bumped version byte is refused.
  {
    std::fstream f(path, std::ios::in | std::ios::out | std::ios::binary);
    f.seekp(4);
    const char v = 9;
    f.write(&v, 1);
  }
  sorfgp_model* bad = nullptr;
  EXPECT_EQ(sorfgp_model_load(path.c_str(), &bad), SORFGP_ERR_VALIDATION);
  EXPECT_NE(std::string(sorfgp_last_error()).find("version"), std::string::npos);
  sorfgp_model_free(loaded);
  sorfgp_model_free(m);
  sorfgp_dataset_free(ds);
}

TEST(CApi, TuneGridMatchesNmllExact) {
  TempDir tmp;
  const Data d = smooth_data(80, 2, 3);
  sorfgp_dataset* ds = write(d, (tmp / "ds").string());
  sorfgp_spec spec = rbf_spec(64, 1.0);
  const std::vector<double> sig{0.3, 1.0}, lam{0.05, 0.2, 1.0}, bet{0.5, 2.0};
  sorfgp_tune_result* r = nullptr;
  ASSERT_EQ(sorfgp_tune_grid(ds, &spec, sig.data(), 2, lam.data(), 3, bet.data(), 2, &r), SORFGP_OK);
  ASSERT_EQ(sorfgp_tune_result_size(r), 12u);
  double best = INFINITY;
  for (std::size_t i = 0; i < 12; ++i) {
    sorfgp_tune_point p;
    ASSERT_EQ(sorfgp_tune_result_get(r, i, &p), SORFGP_OK);
    spec.lambda = p.lambda;
    spec.beta = p.beta;
    spec.sigma = p.sigma;
    double direct = 0.0;
    ASSERT_EQ(sorfgp_nmll_exact(ds, &spec, &direct), SORFGP_OK);
    EXPECT_EQ(p.nmll, direct);
    best = std::min(best, direct);
  }
  sorfgp_tune_point b;
  sorfgp_tune_result_best(r, &b);
  EXPECT_EQ(b.nmll, best);
  sorfgp_tune_point p;
  EXPECT_EQ(sorfgp_tune_result_get(r, 12, &p), SORFGP_ERR_VALIDATION);
  sorfgp_tune_result_free(r);

  // 1x1x1 grid returns that point.
  ASSERT_EQ(sorfgp_tune_grid(ds, &spec, sig.data(), 1, lam.data(), 1, bet.data(), 1, &r), SORFGP_OK);
  sorfgp_tune_result_best(r, &b);
  EXPECT_EQ(b.lambda, lam[0]);
  EXPECT_EQ(b.beta, bet[0]);
  EXPECT_EQ(b.sigma, sig[0]);
  sorfgp_tune_result_free(r);

  // Zero-size grids are validation errors.
  EXPECT_EQ(sorfgp_tune_grid(ds, &spec, sig.data(), 1, lam.data(), 0, bet.data(), 1, &r),
            SORFGP_ERR_VALIDATION);
  sorfgp_dataset_free(ds);
}

TEST(CApi, ApproxNmllNearExact) {
  TempDir tmp;
  const Data d = smooth_data(300, 3, 4);
  sorfgp_dataset* ds = write(d, (tmp / "ds").string(), 100);
  sorfgp_spec spec = rbf_spec(128, 0.3);
  double exact = 0.0, approx = 0.0;
  ASSERT_EQ(sorfgp_nmll_exact(ds, &spec, &exact), SORFGP_OK);
  sorfgp_approx_options ao;
  sorfgp_approx_options_init(&ao);
  ao.precond_rank = 64;
  ASSERT_EQ(sorfgp_nmll_approx(ds, &spec, &ao, &approx), SORFGP_OK) << sorfgp_last_error();
  EXPECT_NEAR(approx, exact, 0.05 * std::abs(exact));
  sorfgp_dataset_free(ds);
}

TEST(CApi, CalibrationHelpers) {
  const std::vector<double> mean{0.0, 1.0, 2.0}, sd{1.0, 1.0, 1.0}, truth{0.1, 0.9, 2.2};
  double a = -1.0;
  std::vector<double> levels(SORFGP_CALIBRATION_LEVELS), cov(SORFGP_CALIBRATION_LEVELS);
  ASSERT_EQ(sorfgp_auce(mean.data(), sd.data(), truth.data(), 3, &a, levels.data(), cov.data()),
            SORFGP_OK);
  EXPECT_GE(a, 0.0);
  EXPECT_DOUBLE_EQ(levels.back(), 1.0);
  std::vector<double> u(3);
  ASSERT_EQ(sorfgp_ucb(mean.data(), sd.data(), 3, 2.0, u.data()), SORFGP_OK);
  EXPECT_DOUBLE_EQ(u[1], 3.0);
  double rho = 0.0;
  ASSERT_EQ(sorfgp_spearman(mean.data(), truth.data(), 3, &rho), SORFGP_OK);
  EXPECT_DOUBLE_EQ(rho, 1.0);
  EXPECT_EQ(sorfgp_auce(mean.data(), sd.data(), nullptr, 3, &a, nullptr, nullptr),
            SORFGP_ERR_VALIDATION);
}

TEST(CApi, ClusterKpcaRetrieve) {
  TempDir tmp;
  const Data d = smooth_data(120, 2, 5);
  sorfgp_dataset* ds = write(d, (tmp / "ds").string());
  const sorfgp_spec spec = rbf_spec(64, 0.1);
  sorfgp_model* m = nullptr;
  ASSERT_EQ(sorfgp_fit(ds, &spec, nullptr, &m), SORFGP_OK) << sorfgp_last_error();

  sorfgp_cluster_index* idx = nullptr;
  ASSERT_EQ(sorfgp_cluster(m, ds, 4, 100, 0, &idx), SORFGP_OK);
  EXPECT_EQ(sorfgp_cluster_k(idx), 4u);
  EXPECT_EQ(sorfgp_cluster_num_points(idx), 120u);
  const std::string path = (tmp / "c.sgpk").string();
  ASSERT_EQ(sorfgp_cluster_save(idx, path.c_str()), SORFGP_OK);
  sorfgp_cluster_index* back = nullptr;
  ASSERT_EQ(sorfgp_cluster_load(path.c_str(), &back), SORFGP_OK);
  std::vector<std::size_t> a1(120), a2(120);
  ASSERT_EQ(sorfgp_cluster_assignments(idx, a1.data(), 120), SORFGP_OK);
  ASSERT_EQ(sorfgp_cluster_assignments(back, a2.data(), 120), SORFGP_OK);
  EXPECT_EQ(a1, a2);
  EXPECT_EQ(sorfgp_cluster_objective(back), sorfgp_cluster_objective(idx));

  std::vector<double> elbow(6);
  ASSERT_EQ(sorfgp_elbow(m, ds, 1, 6, 100, 0, elbow.data()), SORFGP_OK);
  for (std::size_t i = 1; i < elbow.size(); ++i) EXPECT_LE(elbow[i], elbow[i - 1] * (1 + 1e-12));

  std::vector<double> proj(120 * 3), expl(3);
  std::size_t got = 0;
  ASSERT_EQ(sorfgp_kpca(m, ds, 3, proj.data(), expl.data(), &got), SORFGP_OK);
  EXPECT_EQ(got, 3u);
  EXPECT_GE(expl[0], expl[1]);

  sorfgp_retriever* ret = nullptr;
  ASSERT_EQ(sorfgp_retriever_create(m, back, ds, &ret), SORFGP_OK) << sorfgp_last_error();
  std::vector<std::size_t> ids(5);
  std::vector<double> scores(5);
  std::size_t count = 0;
  int truncated = -1;
  ASSERT_EQ(sorfgp_retrieve(ret, ds, 17, 5, SORFGP_RETRIEVE_FULL_SCAN, 1, ids.data(),
                            scores.data(), &count, &truncated),
            SORFGP_OK);
  EXPECT_EQ(count, 5u);
  EXPECT_EQ(truncated, 0);
  EXPECT_EQ(ids[0], 17u);
  for (std::size_t i = 1; i < count; ++i) EXPECT_GE(scores[i - 1], scores[i]);
  ASSERT_EQ(sorfgp_retrieve(ret, ds, 17, 5, SORFGP_RETRIEVE_CLUSTER, 1, ids.data(), scores.data(),
                            &count, &truncated),
            SORFGP_OK);
  EXPECT_EQ(ids[0], 17u);
  EXPECT_EQ(sorfgp_retrieve(ret, ds, 500, 5, SORFGP_RETRIEVE_FULL_SCAN, 1, ids.data(),
                            scores.data(), &count, &truncated),
            SORFGP_ERR_VALIDATION);
  sorfgp_retriever_free(ret);

  // Without an index only full scans are allowed.
  ASSERT_EQ(sorfgp_retriever_create(m, nullptr, ds, &ret), SORFGP_OK);
  EXPECT_EQ(sorfgp_retrieve(ret, ds, 0, 5, SORFGP_RETRIEVE_CLUSTER, 1, ids.data(), scores.data(),
                            &count, &truncated),
            SORFGP_ERR_VALIDATION);
  sorfgp_retriever_free(ret);
  sorfgp_cluster_free(back);
  sorfgp_cluster_free(idx);
  sorfgp_model_free(m);
  sorfgp_dataset_free(ds);
}

TEST(CApi, BoLoopAndBench) {
  TempDir tmp;
  sorfgp_synth_options so;
  sorfgp_synth_options_init(&so);
  so.kind = 1;
  so.sites = 3;
  so.options = 5;
  sorfgp_dataset* pool = nullptr;
  ASSERT_EQ(sorfgp_synthesize(&so, 50, (tmp / "land").c_str(), &pool), SORFGP_OK);
  EXPECT_EQ(sorfgp_dataset_num_records(pool), 125u);
  sorfgp_spec spec = rbf_spec(64, 0.1);
  sorfgp_bo_options bo;
  sorfgp_bo_options_init(&bo);
  bo.init_size = 10;
  bo.batch_size = 5;
  bo.iterations = 4;
  const std::vector<double> lam{0.01, 0.1, 1.0}, bet{1.0};
  std::vector<double> best(5);
  int exhausted = -1;
  ASSERT_EQ(sorfgp_bo_loop(pool, &spec, &bo, lam.data(), 3, bet.data(), 1, best.data(), &exhausted),
            SORFGP_OK)
      << sorfgp_last_error();
  EXPECT_EQ(exhausted, 0);
  for (std::size_t i = 1; i < best.size(); ++i) EXPECT_GE(best[i], best[i - 1]);

  const std::size_t ranks[] = {16, 64};
  const int variants[] = {SORFGP_SKETCH_SRHT, SORFGP_SKETCH_SRHT2};
  sorfgp_iteration_row rows[4];
  ASSERT_EQ(sorfgp_bench_iterations(1000, 128, 1e4, 1e-2, ranks, 2, variants, 2, 1e-6, 2000, 0, rows),
            SORFGP_OK);
  for (const auto& r : rows) EXPECT_LE(r.pcg_iterations, r.cg_iterations);
  EXPECT_EQ(rows[0].variant, SORFGP_SKETCH_SRHT);
  EXPECT_EQ(rows[3].rank, 64u);

  const std::size_t ms[] = {64, 128};
  double ts[2], td[2];
  ASSERT_EQ(sorfgp_bench_sorf(50, 16, ms, 2, 0, 1, 1, ts, td), SORFGP_OK);
  EXPECT_GT(ts[0], 0.0);
  EXPECT_GT(td[1], 0.0);
  sorfgp_dataset_free(pool);
}

// ---- CLI parity: the commands must reproduce the library calls exactly ----

TEST(CliParity, TuneBayesMatchesLibrary) {
  TempDir tmp;
  const std::string dir = (tmp / "land").string();
  ASSERT_EQ(run_cli("ingest --format synthetic_landscape --sites 3 --options 6 --seed 4 --out " + dir,
                    (tmp / "ingest.txt").string()),
            0);
  const std::string out = (tmp / "tune.txt").string();
  ASSERT_EQ(run_cli("tune --data " + dir + " --method bayes --num-rffs 128 --seed 3 "
                    "--lambda-grid=-2:0:5 --beta-grid=-1:1:3 --sigma-bounds=-2:1 --bayes-seed 9 "
                    "--bayes-maxiter 12 --out " + out,
                    (tmp / "stdout.txt").string()),
            0)
      << slurp((tmp / "stdout.txt.err").string());
  const auto kv = key_values(slurp(out));

  sorfgp_dataset* ds = nullptr;
  ASSERT_EQ(sorfgp_dataset_open(dir.c_str(), &ds), SORFGP_OK);
  sorfgp_spec spec = rbf_spec(128, 1.0);
  spec.seed = 3;
  sorfgp_bayes_options bo;
  sorfgp_bayes_options_init(&bo);
  bo.log10_sigma_lo = -2;
  bo.log10_sigma_hi = 1;
  bo.seed = 9;
  bo.maxiter = 12;
  std::vector<double> lam, bet;
  for (int i = 0; i < 5; ++i) lam.push_back(std::pow(10.0, -2.0 + 2.0 * i / 4.0));
  for (int i = 0; i < 3; ++i) bet.push_back(std::pow(10.0, -1.0 + 2.0 * i / 2.0));
  sorfgp_tune_result* r = nullptr;
  ASSERT_EQ(sorfgp_tune_bayes(ds, &spec, &bo, lam.data(), lam.size(), bet.data(), bet.size(), &r),
            SORFGP_OK);
  sorfgp_tune_point best;
  sorfgp_tune_result_best(r, &best);
  EXPECT_EQ(std::stod(kv.at("lambda")), best.lambda);
  EXPECT_EQ(std::stod(kv.at("beta")), best.beta);
  EXPECT_EQ(std::stod(kv.at("sigma")), best.sigma);
  EXPECT_EQ(std::stod(kv.at("nmll")), best.nmll);
  const auto trace = table(slurp(out));
  ASSERT_EQ(trace.size(), sorfgp_tune_result_size(r));
  for (std::size_t i = 0; i < trace.size(); ++i) {
    sorfgp_tune_point p;
    sorfgp_tune_result_get(r, i, &p);
    EXPECT_EQ(trace[i][2], p.sigma);
    EXPECT_EQ(trace[i][3], p.nmll);
  }
  sorfgp_tune_result_free(r);
  sorfgp_dataset_free(ds);
}

TEST(CliParity, FitPredictMatchesLibrary) {
  TempDir tmp;
  const Data d = smooth_data(90, 3, 6);
  const std::string dir = (tmp / "ds").string();
  sorfgp_dataset* ds = write(d, dir);
  const std::string model = (tmp / "m.sgpm").string();
  ASSERT_EQ(run_cli("fit --data " + dir + " --num-rffs 128 --lambda 0.05 --sigma 0.7 --seed 2 "
                    "--solver cg --tol 1e-8 --maxiter 2000 --out " + model,
                    (tmp / "fit.txt").string()),
            0)
      << slurp((tmp / "fit.txt.err").string());
  // Same call through the library.
  sorfgp_spec spec = rbf_spec(128, 0.05);
  spec.sigma = 0.7;
  spec.seed = 2;
  sorfgp_fit_options fo;
  sorfgp_fit_options_init(&fo);
  fo.solver = SORFGP_SOLVER_CG;
  fo.tol = 1e-8;
  fo.maxiter = 2000;
  sorfgp_model* m = nullptr;
  ASSERT_EQ(sorfgp_fit(ds, &spec, &fo, &m), SORFGP_OK);
  std::vector<double> mean(90), var(90);
  ASSERT_EQ(sorfgp_predict(m, ds, mean.data(), var.data(), 90), SORFGP_OK);

  const std::string p1 = (tmp / "p1.txt").string(), p2 = (tmp / "p2.txt").string();
  ASSERT_EQ(run_cli("predict --model " + model + " --data " + dir, p1), 0);
  ASSERT_EQ(run_cli("predict --model " + model + " --data " + dir + " --threads 3", p2), 0);
  const std::string t1 = slurp(p1);
  EXPECT_EQ(t1, slurp(p2));
  EXPECT_NE(t1.find("# dataset.hash=" + std::string(sorfgp_dataset_hash(ds))), std::string::npos);
  EXPECT_NE(t1.find("# config.model=" + model), std::string::npos);
  const auto rows = table(t1);
  ASSERT_EQ(rows.size(), 90u);
  for (std::size_t i = 0; i < 90; ++i) {
    EXPECT_EQ(rows[i][1], mean[i]);
    EXPECT_EQ(rows[i][2], std::sqrt(var[i]));
    EXPECT_EQ(rows[i][3], d.y[i]);
  }

  // The artifact carries the run config.
  sorfgp_model* loaded = nullptr;
  ASSERT_EQ(sorfgp_model_load(model.c_str(), &loaded), SORFGP_OK);
  EXPECT_STREQ(sorfgp_model_get_meta(loaded, "config.num-rffs"), "128");
  EXPECT_STREQ(sorfgp_model_get_meta(loaded, "config.solver"), "cg");
  sorfgp_model_free(loaded);
  sorfgp_model_free(m);
  sorfgp_dataset_free(ds);
}

TEST(CliParity, BoLoopMatchesLibrary) {
  TempDir tmp;
  const std::string dir = (tmp / "land").string();
  ASSERT_EQ(run_cli("ingest --format synthetic_landscape --sites 3 --options 5 --out " + dir,
                    (tmp / "i.txt").string()),
            0);
  const std::string out = (tmp / "bo.txt").string();
  ASSERT_EQ(run_cli("boloop --data " + dir + " --num-rffs 64 --lambda 0.1 --init 10 --batch 5 "
                    "--iterations 3 --seeds 3 --seed-start 7 --lambda-grid=-2:0:3 --beta-grid=0 --out " + out,
                    (tmp / "s.txt").string()),
            0)
      << slurp((tmp / "s.txt.err").string());
  const auto rows = table(slurp(out));
  // 4 mean rows, then 3 trajectories.
  ASSERT_EQ(rows.size(), 7u);
  sorfgp_dataset* ds = nullptr;
  ASSERT_EQ(sorfgp_dataset_open(dir.c_str(), &ds), SORFGP_OK);
  sorfgp_spec spec = rbf_spec(64, 0.1);
  sorfgp_bo_options bo;
  sorfgp_bo_options_init(&bo);
  bo.init_size = 10;
  bo.batch_size = 5;
  bo.iterations = 3;
  const std::vector<double> lam{0.01, 0.1, 1.0}, bet{1.0};
  for (std::size_t s = 0; s < 3; ++s) {
    bo.seed = 7 + s;
    std::vector<double> best(4);
    int exhausted = 0;
    ASSERT_EQ(sorfgp_bo_loop(ds, &spec, &bo, lam.data(), 3, bet.data(), 1, best.data(), &exhausted),
              SORFGP_OK);
    const auto& row = rows[4 + s];
    EXPECT_EQ(row[0], static_cast<double>(bo.seed));
    for (std::size_t i = 0; i < 4; ++i) EXPECT_EQ(row[1 + i], best[i]);
  }
  sorfgp_dataset_free(ds);
}

TEST(CliParity, ErrorsAreMachineReadable) {
  TempDir tmp;
  const std::string out = (tmp / "o.txt").string();
  EXPECT_EQ(run_cli("tune --data " + (tmp / "missing").string(), out), 2);
  const std::string err = slurp(out + ".err");
  EXPECT_NE(err.find("\"code\":2"), std::string::npos);
  EXPECT_NE(err.find((tmp / "missing").string()), std::string::npos);
  EXPECT_EQ(run_cli("fit --bogus-flag", out), 2);
}
