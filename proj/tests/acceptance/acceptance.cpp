// Acceptance gate. One line per criterion:
//   PASS|FAIL|SKIPPED <id> <name>: <measurements>
// Usage: dendro_acceptance [id...]   (no ids runs all)
// Exit: 0 all pass, 1 any failure, 77 nothing failed but something skipped.

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "dendro/bench.hpp"
#include "support/oracles.hpp"
#include "support/synth.hpp"

using namespace dendro;
using namespace dendro::bench;
using nlohmann::json;

namespace {

// ---------------------------------------------------------- pinned limits

constexpr int kFormulaCases = 1000;
constexpr double kFormulaMaxError = 0.0;
constexpr double kFormulaSeconds = 5.0;

constexpr int kUniformDrawsN4 = 15000;
constexpr int kUniformDrawsN3 = 15000;
constexpr double kUniformMinP = 0.001;
constexpr int kCountMaxN = 6;
constexpr double kUniformSeconds = 10.0;

constexpr int kHacCases = 100;
constexpr int kHacMaxN = 5;
constexpr double kHacSeconds = 10.0;

constexpr int kStatsCases = 100;
constexpr double kStatsTolerance = 1e-9;
constexpr double kTcdfTolerance = 1e-8;
constexpr double kTcdfAnchorTolerance = 1e-3;

constexpr int kRoutingHierarchies = 200;

constexpr double kRefSingle = 0.902;
constexpr double kRefRandom = 0.9484;
constexpr double kRefOva = 0.9487;
constexpr double kPenTolerance = 0.03;
constexpr double kPenAlpha = 0.05;
constexpr double kPenSeconds = 15 * 60.0;

constexpr int kNestedPerClass = 30;
constexpr std::uint64_t kNestedSeed = 1;
constexpr int kNestedFolds = 20;
constexpr double kNestedAlpha = 0.05;

// -------------------------------------------------------------- plumbing

enum class Status { pass, fail, skipped };

struct Outcome {
  Status status;
  std::string detail;
};

Outcome verdict(bool ok, std::string detail) { return {ok ? Status::pass : Status::fail, std::move(detail)}; }

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

std::filesystem::path scratch(const std::string& name) {
  const auto p = std::filesystem::temp_directory_path() / ("dendro_acceptance_" + name);
  std::filesystem::remove_all(p);
  std::filesystem::create_directories(p);
  return p;
}

/// Pen digits CSV (header row, label column "digit") if one is available.
std::optional<std::string> pendigits_path() {
  if (const char* env = std::getenv("DENDRO_PENDIGITS_CSV"))
    if (std::filesystem::exists(env)) return std::string(env);
  const auto local = std::filesystem::path(DENDRO_SOURCE_DIR) / "data" / "pendigits.csv";
  if (std::filesystem::exists(local)) return local.string();
  return std::nullopt;
}

json cart_grid_base() { return json{{"kind", "cart"}, {"cp_grid", {1.0, 1e-1, 1e-2, 1e-3, 1e-4, 1e-5, 1e-6}}}; }

json baselines_config(const std::string& path, const std::string& label, const std::string& name) {
  return json{{"experiment_id", "baselines"},
              {"datasets", {{{"path", path}, {"label_column", label}, {"name", name}}}},
              {"split", {{"seed", 2019}, {"folds", 20}, {"train_fraction", 0.9}}},
              {"methods",
               {{{"tag", "single"}, {"hierarchy", "single_baseline"}, {"base", cart_grid_base()}},
                {{"tag", "random"}, {"hierarchy", "random"}, {"base", cart_grid_base()}},
                {{"tag", "ova"}, {"hierarchy", "ova_baseline"}, {"base", cart_grid_base()}}}}};
}

/// The criterion-6 configuration on Pen digits when present, otherwise on
/// the bundled digits table, extended with the extraction methods the
/// firewall must cover.
json firewall_config() {
  const auto pen = pendigits_path();
  auto j = pen ? baselines_config(*pen, "digit", "pendigits")
               : baselines_config(std::string(DENDRO_TEST_DATA) + "/digits.csv", "digit", "digits");
  j["methods"].push_back({{"tag", "rbd-hac"}, {"hierarchy", "rbd"}, {"base", cart_grid_base()}});
  j["methods"].push_back({{"tag", "cbd-hac"}, {"hierarchy", "cbd"}, {"base", cart_grid_base()}});
  return j;
}

std::string substitute_note() { return pendigits_path() ? "pendigits" : "digits substitute (pen digits absent)"; }

// ------------------------------------------------------------- criteria

Outcome formula_oracles() {
  const auto t0 = std::chrono::steady_clock::now();
  Rng rng(101);
  double max_err = 0.0;
  int subset_cases = 0, proxy_cases = 0;
  for (int trial = 0; trial < kFormulaCases; ++trial) {
    const int n = 2 + static_cast<int>(uniform_index(rng, 9));
    ConfusionMatrix m;
    m.counts.resize(n, n);
    for (int a = 0; a < n; ++a)
      for (int b = 0; b < n; ++b) m.counts(a, b) = static_cast<long long>(uniform_index(rng, 200));
    const int j = static_cast<int>(uniform_index(rng, n));
    int k = static_cast<int>(uniform_index(rng, n - 1));
    k += k >= j;
    m.counts(j, j) += 1;
    const auto got = confusion_subset_dissimilarity(m, j, k);
    max_err = std::max(max_err, std::abs(*got - oracle::subset_accuracy(m(j, j), m(k, k), m(j, k), m(k, j))));
    ++subset_cases;

    const int rows = 1 + static_cast<int>(uniform_index(rng, 60));
    Matrix p(rows, n);
    std::vector<std::vector<double>> pv(static_cast<std::size_t>(rows));
    Labels y;
    for (int i = 0; i < rows; ++i) {
      double total = 0.0;
      for (int c = 0; c < n; ++c) total += p(i, c) = static_cast<double>(uniform_index(rng, 8));
      for (int c = 0; c < n; ++c) {
        p(i, c) = total > 0 ? p(i, c) / total : 1.0 / n;
        pv[static_cast<std::size_t>(i)].push_back(p(i, c));
      }
      y.push_back(static_cast<int>(uniform_index(rng, n)));
    }
    y[0] = k;
    max_err = std::max(max_err, std::abs(*ava_proxy_dissimilarity(p, y, j, k) - oracle::pairwise_proxy(pv, y, j, k)));
    ++proxy_cases;
  }
  const double secs = seconds_since(t0);
  return verdict(max_err <= kFormulaMaxError && secs < kFormulaSeconds,
                 "max|err| " + fmt("%g", max_err) + " over " + std::to_string(subset_cases) + " confusion matrices and " +
                     std::to_string(proxy_cases) + " probability tables, " + fmt("%.2f", secs) + " s (limit " +
                     fmt("%g", kFormulaSeconds) + " s)");
}

Outcome sampling_uniformity() {
  const auto t0 = std::chrono::steady_clock::now();
  Rng rng(202);
  auto chi_square = [&](int n, int draws) {
    std::map<std::string, double> counts;
    for (const auto& s : oracle::enumerate_shapes(n)) counts[s] = 0.0;
    const std::size_t shapes = counts.size();
    for (int i = 0; i < draws; ++i) {
      const auto key = oracle::shape(sample_random_hierarchy(n, rng));
      if (!counts.count(key)) return -1.0;
      counts[key] += 1.0;
    }
    std::vector<double> obs;
    for (const auto& [s, c] : counts) obs.push_back(c);
    return oracle::chi_square_p(obs, static_cast<double>(draws) / static_cast<double>(shapes));
  };
  const double p4 = chi_square(4, kUniformDrawsN4);
  const double p3 = chi_square(3, kUniformDrawsN3);
  bool counts_ok = true;
  for (int n = 2; n <= kCountMaxN; ++n)
    counts_ok = counts_ok && count_hierarchies(n) == static_cast<long>(oracle::enumerate_shapes(n).size());
  const double secs = seconds_since(t0);
  return verdict(p4 > kUniformMinP && p3 > kUniformMinP && counts_ok && secs < kUniformSeconds,
                 "chi-square p(n=4, " + std::to_string(kUniformDrawsN4) + " draws) " + fmt("%.4f", p4) + ", p(n=3) " +
                     fmt("%.4f", p3) + " (need > " + fmt("%g", kUniformMinP) + "); counts n<=" +
                     std::to_string(kCountMaxN) + (counts_ok ? " match" : " MISMATCH") + "; " + fmt("%.2f", secs) + " s");
}

Outcome clustering_oracle() {
  const auto t0 = std::chrono::steady_clock::now();
  Rng rng(303);
  int matches = 0;
  for (int trial = 0; trial < kHacCases; ++trial) {
    const int n = 2 + static_cast<int>(uniform_index(rng, kHacMaxN - 1));
    std::vector<std::vector<double>> d(static_cast<std::size_t>(n), std::vector<double>(static_cast<std::size_t>(n), 0.0));
    DissimilarityMatrix m{Matrix::Zero(n, n), "random"};
    for (int i = 0; i < n; ++i)
      for (int j = i + 1; j < n; ++j) {
        // half the cases on a small integer grid so ties are exercised
        const double v = trial % 2 ? uniform_real(rng) : 1.0 + static_cast<double>(uniform_index(rng, 3));
        d[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)] = d[static_cast<std::size_t>(j)][static_cast<std::size_t>(i)] = v;
        m.values(i, j) = m.values(j, i) = v;
      }
    matches += oracle::shape(hac_build(m)) == oracle::hac_shape(d);
  }
  const double secs = seconds_since(t0);
  return verdict(matches == kHacCases && secs < kHacSeconds,
                 std::to_string(matches) + "/" + std::to_string(kHacCases) + " exact topology matches (n <= " +
                     std::to_string(kHacMaxN) + "), " + fmt("%.2f", secs) + " s");
}

Outcome statistics() {
  Rng rng(404);
  double t_err = 0.0;
  for (int trial = 0; trial < kStatsCases; ++trial) {
    const int k = 2 + static_cast<int>(uniform_index(rng, 40));
    std::vector<double> d;
    for (int i = 0; i < k; ++i) d.push_back(0.2 * (uniform_real(rng) - 0.4));
    const double n_train = 10.0 + static_cast<double>(uniform_index(rng, 5000));
    const double n_test = 1.0 + static_cast<double>(uniform_index(rng, 1000));
    const auto t = stats::corrected_resampled_t(d, n_train, n_test);
    t_err = std::max(t_err, std::abs(t.t_stat - oracle::corrected_t_by_hand(d, n_test / n_train)));
  }
  const std::vector<double> dfs{1, 3, 7, 19, 60};
  const std::vector<double> xs{-4.0, -2.5, -1.0, -0.3, 0.2, 0.7, 1.5, 2.093, 3.0, 5.0};
  double cdf_err = 0.0;
  int points = 0;
  for (double df : dfs)
    for (double x : xs) {
      cdf_err = std::max(cdf_err, std::abs(stats::t_cdf(x, df) - oracle::t_cdf_quadrature(x, df)));
      ++points;
    }
  const double anchor = stats::t_cdf(2.093, 19);
  return verdict(t_err <= kStatsTolerance && cdf_err <= kTcdfTolerance && std::abs(anchor - 0.975) <= kTcdfAnchorTolerance,
                 "corrected t max|err| " + fmt("%.2e", t_err) + " on " + std::to_string(kStatsCases) +
                     " inputs; t_cdf max|err| " + fmt("%.2e", cdf_err) + " on " + std::to_string(points) +
                     " points; t_cdf(2.093, 19) = " + fmt("%.6f", anchor));
}

Outcome routing_cost() {
  // every instance of every trained hierarchy, random and extracted
  const auto ds = synth::nested_clusters(12, 9);
  Rng rng(505);
  std::size_t instances = 0, violations = 0;
  auto check = [&](const Hierarchy& h, const Dataset& train, const Dataset& test, const ClassifierSpec& spec) {
    const auto th = train_hmc(h, train, spec, rng());
    const int max_depth = depth_stats(h).max_depth;
    const auto ev = evaluate(th, test);
    for (std::size_t i = 0; i < test.rows(); ++i) {
      const int e = ev.evaluations[i];
      const auto r = predict_route(th, test.features.row(static_cast<Eigen::Index>(i)));
      ++instances;
      if (!(e == r.evaluations && e >= 1 && e <= max_depth && max_depth <= h.n_classes() - 1 && e < h.n_classes()))
        ++violations;
    }
  };
  const auto splits = monte_carlo_splits(ds, SplitPlan{5, 4, 0.75});
  for (int i = 0; i < kRoutingHierarchies; ++i) {
    const auto& s = splits[static_cast<std::size_t>(i) % splits.size()];
    const auto train = ds.subset(s.train, SliceRole::train), test = ds.subset(s.test, SliceRole::test);
    const auto spec = i % 2 ? ClassifierSpec::logistic() : ClassifierSpec::cart();
    check(sample_random_hierarchy(ds.n_classes(), rng), train, test, spec);
  }
  for (const auto& s : splits) {
    const auto train = ds.subset(s.train, SliceRole::train), test = ds.subset(s.test, SliceRole::test);
    const auto d = rbd_matrix(train);
    check(hac_build(d), train, test, ClassifierSpec::logistic());
    check(hkm_build(d, rng()), train, test, ClassifierSpec::logistic());
    std::string chain = "c0";
    for (int c = 1; c < ds.n_classes(); ++c) chain = "(" + chain + ",c" + std::to_string(c) + ")";
    check(from_newick(chain + ";", train.class_names), train, test, ClassifierSpec::cart());
  }
  return verdict(violations == 0 && instances > 0,
                 std::to_string(instances) + " routed instances over " + std::to_string(kRoutingHierarchies + 3 * splits.size()) +
                     " trained hierarchies (random, HAC, HKM, chain), " + std::to_string(violations) +
                     " with evaluations > max depth or max depth >= n");
}

Outcome pendigits_baselines() {
  const auto pen = pendigits_path();
  if (!pen) return {Status::skipped, "pen digits CSV not found; set DENDRO_PENDIGITS_CSV or run tools/fetch_pendigits.py"};
  const auto t0 = std::chrono::steady_clock::now();
  const auto j = baselines_config(*pen, "digit", "pendigits");
  const auto store = run_experiment(config_from_json(j), j);
  const double secs = seconds_since(t0);
  const auto rows = report(store, "single");
  std::map<std::string, ReportRow> by;
  for (const auto& r : rows) by[r.method] = r;
  const double single = by["single"].mean_accuracy, random = by["random"].mean_accuracy, ova = by["ova"].mean_accuracy;
  const auto& vs = by["random"].vs_baseline;
  const bool ok = std::abs(single - kRefSingle) <= kPenTolerance && std::abs(random - kRefRandom) <= kPenTolerance &&
                  std::abs(ova - kRefOva) <= kPenTolerance && vs.p_value <= kPenAlpha &&
                  vs.direction == stats::Direction::a_better && secs <= kPenSeconds;
  return verdict(ok, "single " + format_accuracy(single, by["single"].corrected_se) + " (ref 0.902), random " +
                         format_accuracy(random, by["random"].corrected_se) + " (ref 0.9484), ova " +
                         format_accuracy(ova, by["ova"].corrected_se) + " (ref 0.9487), random vs single p " +
                         fmt("%.3g", vs.p_value) + ", " + fmt("%.0f", secs) + " s");
}

std::string nested_csv() {
  const auto path = (scratch("nested") / "nested16.csv").string();
  write_csv(synth::nested_clusters(kNestedPerClass, kNestedSeed), path);
  return path;
}

json nested_config(const std::string& path, json methods) {
  return json{{"experiment_id", "nested"},
              {"datasets", {{{"path", path}, {"label_column", "label"}, {"name", "nested16"}}}},
              {"split", {{"seed", 7}, {"folds", kNestedFolds}, {"train_fraction", 0.9}}},
              {"methods", std::move(methods)}};
}

Outcome informed_vs_random() {
  const json lr{{"kind", "logistic"}};
  const json deep{{"kind", "cart"}, {"cp_grid", {1e-6}}};
  const auto j = nested_config(nested_csv(), {{{"tag", "random-lr"}, {"hierarchy", "random"}, {"base", lr}},
                                              {{"tag", "rbd-lr"}, {"hierarchy", "rbd"}, {"base", lr}},
                                              {{"tag", "random-cart"}, {"hierarchy", "random"}, {"base", deep}},
                                              {{"tag", "rbd-cart"}, {"hierarchy", "rbd"}, {"base", deep}}});
  const auto store = run_experiment(config_from_json(j), j);
  std::map<std::string, ReportRow> lr_rows, cart_rows;
  for (const auto& r : report(store, "random-lr")) lr_rows[r.method] = r;
  for (const auto& r : report(store, "random-cart")) cart_rows[r.method] = r;
  const auto& lr_cmp = lr_rows["rbd-lr"].vs_baseline;
  const auto& cart_cmp = cart_rows["rbd-cart"].vs_baseline;
  const bool ok = lr_cmp.arrows >= 1 && lr_cmp.p_value <= kNestedAlpha && lr_cmp.direction == stats::Direction::a_better &&
                  cart_cmp.mean_diff < lr_cmp.mean_diff;
  return verdict(ok, "logistic: rbd-hac " + format_accuracy(lr_rows["rbd-lr"].mean_accuracy, lr_rows["rbd-lr"].corrected_se) +
                         arrow_string(lr_cmp) + " vs random " +
                         format_accuracy(lr_rows["random-lr"].mean_accuracy, lr_rows["random-lr"].corrected_se) + " (p " +
                         fmt("%.3g", lr_cmp.p_value) + ", gap " + fmt("%.4f", lr_cmp.mean_diff) + "); deep cart gap " +
                         fmt("%.4f", cart_cmp.mean_diff));
}

Outcome hac_deeper_than_hkm() {
  // the dissimilarity families of the HAC/HKM comparison: centroid distances
  // and OVA classifier dissimilarities with each base learner
  const json lr{{"kind", "logistic"}};
  const json cart = cart_grid_base();
  json methods = json::array();
  for (const char* clustering : {"hac", "hkm"}) {
    const std::string c = clustering;
    methods.push_back({{"tag", "rbd-" + c}, {"hierarchy", "rbd"}, {"clustering", c}, {"base", lr}});
    methods.push_back({{"tag", "ova-lr-" + c}, {"hierarchy", "cbd"}, {"clustering", c}, {"base", lr},
                       {"cbd", {{"scheme", "ova"}, {"classifier", lr}}}});
    methods.push_back({{"tag", "ova-cart-" + c}, {"hierarchy", "cbd"}, {"clustering", c}, {"base", cart},
                       {"cbd", {{"scheme", "ova"}, {"classifier", cart}}}});
  }
  const auto j = nested_config(nested_csv(), methods);
  const auto store = run_experiment(config_from_json(j), j);
  auto mean_depth = [&](const std::string& tag) {
    double s = 0.0;
    const auto recs = store.records_for("nested16", tag);
    for (const auto& r : recs) s += r.mean_leaf_depth;
    return s / static_cast<double>(recs.size());
  };
  bool none_reversed = true;
  double hac_total = 0.0, hkm_total = 0.0;
  std::string detail;
  for (const char* family : {"rbd", "ova-lr", "ova-cart"}) {
    const double hac = mean_depth(std::string(family) + "-hac"), hkm = mean_depth(std::string(family) + "-hkm");
    none_reversed = none_reversed && hac >= hkm;
    hac_total += hac / 3.0;
    hkm_total += hkm / 3.0;
    detail += std::string(family) + " " + fmt("%.2f", hac) + "/" + fmt("%.2f", hkm) + ", ";
  }
  return verdict(none_reversed && hac_total > hkm_total,
                 "mean leaf depth HAC/HKM: " + detail + "pooled " + fmt("%.2f", hac_total) + "/" + fmt("%.2f", hkm_total));
}

Outcome leakage_firewall() {
  const auto j = firewall_config();
  AuditTotals totals;
  RunOptions opt;
  opt.audit = &totals;
  const auto store = run_experiment(config_from_json(j), j, opt);
  std::string detail = std::to_string(totals.touches.load()) + " audited data accesses over " +
                       std::to_string(store.size()) + " fold records, " + std::to_string(totals.violations.load()) +
                       " touched test rows; " + substitute_note();
  if (!totals.details.empty()) detail += "; first: " + totals.details.front();
  return verdict(totals.violations == 0 && totals.touches > 0, detail);
}

Outcome determinism() {
  const auto j = firewall_config();
  const auto cfg = config_from_json(j);
  RunOptions serial, parallel;
  serial.workers = 1;
  parallel.workers = 4;
  const auto a = run_experiment(cfg, j, serial).records();
  const auto b = run_experiment(cfg, j, parallel).records();
  std::size_t same = 0;
  for (std::size_t i = 0; i < std::min(a.size(), b.size()); ++i) same += a[i].same_outcome(b[i]);
  return verdict(a.size() == b.size() && same == a.size() && !a.empty(),
                 std::to_string(same) + "/" + std::to_string(a.size()) +
                     " fold records identical across a 1-worker and a 4-worker rerun; " + substitute_note());
}

struct Criterion {
  int id;
  const char* name;
  std::function<Outcome()> run;
};

}  // namespace

int main(int argc, char** argv) {
  const std::vector<Criterion> criteria{
      {1, "formula oracles", formula_oracles},
      {2, "sampling uniformity", sampling_uniformity},
      {3, "clustering oracle", clustering_oracle},
      {4, "statistics", statistics},
      {5, "routing cost", routing_cost},
      {6, "pen digits baselines", pendigits_baselines},
      {7, "informed vs random hierarchy", informed_vs_random},
      {8, "hac deeper than hkm", hac_deeper_than_hkm},
      {9, "leakage firewall", leakage_firewall},
      {10, "determinism", determinism},
  };
  std::vector<int> wanted;
  for (int i = 1; i < argc; ++i) wanted.push_back(std::atoi(argv[i]));

  int failed = 0, skipped = 0;
  for (const auto& c : criteria) {
    if (!wanted.empty() && std::find(wanted.begin(), wanted.end(), c.id) == wanted.end()) continue;
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o = {Status::fail, std::string("exception: ") + e.what()};
    }
    const char* tag = o.status == Status::pass ? "PASS" : o.status == Status::fail ? "FAIL" : "SKIPPED";
    std::printf("%-7s %2d %s: %s\n", tag, c.id, c.name, o.detail.c_str());
    std::fflush(stdout);
    failed += o.status == Status::fail;
    skipped += o.status == Status::skipped;
  }
  if (failed) return 1;
  return skipped ? 77 : 0;
}
