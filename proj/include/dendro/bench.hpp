#pragma once

// Experiment runner: a JSON-configured grid of (dataset, fold, method) tasks
// over one shared Monte Carlo split plan, executed by a worker pool, with an
// append-only CSV result store that makes reruns resume where they stopped.

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <exception>
#include <filesystem>
#include <fstream>
#include <map>
#include <mutex>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <thread>
#include <tuple>
#include <vector>

#include <json.hpp>

#include "dendro/audit.hpp"
#include "dendro/dataset.hpp"
#include "dendro/dissimilarity.hpp"
#include "dendro/hierarchy.hpp"
#include "dendro/learners.hpp"
#include "dendro/nested.hpp"
#include "dendro/stats.hpp"

namespace dendro::bench {

inline constexpr const char* kStoreVersion = "dendro-results/1";

// ------------------------------------------------------------------- config

enum class HierarchySource { random, rbd, cbd, best_of_50, ova_baseline, single_baseline, fixed_newick };
enum class Clustering { hac, hkm };

inline std::string to_string(HierarchySource s) {
  switch (s) {
    case HierarchySource::random: return "random";
    case HierarchySource::rbd: return "rbd";
    case HierarchySource::cbd: return "cbd";
    case HierarchySource::best_of_50: return "best_of_50";
    case HierarchySource::ova_baseline: return "ova_baseline";
    case HierarchySource::single_baseline: return "single_baseline";
    case HierarchySource::fixed_newick: return "fixed_newick";
  }
  return "?";
}

struct MethodConfig {
  std::string tag;
  HierarchySource source = HierarchySource::random;
  ClassifierSpec base = ClassifierSpec::cart();
  Metric metric = Metric::euclidean;
  Clustering clustering = Clustering::hac;
  CbdPlan cbd;
  int best_of_candidates = 50;
  int best_of_cv_folds = 3;
  std::string newick;

  bool hierarchical() const {
    return source != HierarchySource::ova_baseline && source != HierarchySource::single_baseline;
  }
};

struct DatasetConfig {
  std::string path;
  LabelColumn label_column = std::size_t{0};
  bool header = true;
  std::string name;
};

struct SweepLevel {
  std::string label;
  std::vector<double> cp_grid;
};

struct SweepConfig {
  MethodConfig method;  // template; its cbd classifier and base spec get the level grids
  std::vector<SweepLevel> cbd_levels;
  std::vector<SweepLevel> base_levels;
};

struct ExperimentConfig {
  std::string experiment_id = "experiment";
  std::vector<DatasetConfig> datasets;
  SplitPlan split;
  bool zscore = false;
  std::vector<MethodConfig> methods;
  std::optional<SweepConfig> sweep;
  std::string output_dir;
  int workers = 0;

  /// Single split plan is structural; tags must be unique.
  void validate() const {
    if (datasets.empty()) throw InvalidArgument("config: no datasets");
    if (split.n_folds < 2) throw InvalidArgument("config: at least two folds are needed for paired tests");
    if (!(split.train_fraction > 0.0 && split.train_fraction < 1.0))
      throw InvalidArgument("config: train_fraction must lie in (0,1)");
    std::set<std::string> tags;
    for (const auto& m : methods) {
      if (m.tag.empty()) throw InvalidArgument("config: method without tag");
      if (m.tag.find_first_of(",\"\n") != std::string::npos) throw InvalidArgument("config: tag '" + m.tag + "' has reserved characters");
      if (!tags.insert(m.tag).second) throw InvalidArgument("config: duplicate method tag '" + m.tag + "'");
      m.base.validate();
      if (m.source == HierarchySource::cbd) m.cbd.validate();
      if (m.source == HierarchySource::fixed_newick && m.newick.empty())
        throw InvalidArgument("config: method '" + m.tag + "' needs a newick string");
      if (m.source == HierarchySource::best_of_50 && (m.best_of_candidates < 1 || m.best_of_cv_folds < 2))
        throw InvalidArgument("config: method '" + m.tag + "' has bad best-of settings");
    }
    if (sweep) {
      if (sweep->cbd_levels.empty() || sweep->base_levels.empty()) throw InvalidArgument("config: sweep axes must be nonempty");
      if (sweep->method.source != HierarchySource::cbd) throw InvalidArgument("config: sweep method must use cbd");
    }
  }
};

namespace detail {

template <typename E>
E enum_from(const std::string& s, std::initializer_list<std::pair<const char*, E>> table, const char* what) {
  for (const auto& [name, value] : table)
    if (s == name) return value;
  throw InvalidArgument(std::string("config: unknown ") + what + " '" + s + "'");
}

inline MethodConfig method_from_json(const nlohmann::json& j) {
  MethodConfig m;
  m.tag = j.at("tag").get<std::string>();
  m.source = enum_from<HierarchySource>(j.value("hierarchy", "random"),
                                        {{"random", HierarchySource::random},
                                         {"rbd", HierarchySource::rbd},
                                         {"cbd", HierarchySource::cbd},
                                         {"best_of_50", HierarchySource::best_of_50},
                                         {"ova_baseline", HierarchySource::ova_baseline},
                                         {"single_baseline", HierarchySource::single_baseline},
                                         {"fixed_newick", HierarchySource::fixed_newick}},
                                        "hierarchy source");
  if (j.contains("base")) m.base = classifier_spec_from_json(j.at("base"));
  m.metric = enum_from<Metric>(j.value("metric", "euclidean"),
                               {{"euclidean", Metric::euclidean}, {"cosine", Metric::cosine}}, "metric");
  m.clustering = enum_from<Clustering>(j.value("clustering", "hac"), {{"hac", Clustering::hac}, {"hkm", Clustering::hkm}},
                                       "clustering");
  if (j.contains("cbd")) {
    const auto& c = j.at("cbd");
    if (c.contains("classifier")) m.cbd.classifier = classifier_spec_from_json(c.at("classifier"));
    m.cbd.scheme = enum_from<CbdScheme>(c.value("scheme", "single_multiclass"),
                                        {{"single_multiclass", CbdScheme::single_multiclass}, {"ova", CbdScheme::ova}},
                                        "cbd scheme");
    m.cbd.mc_folds = c.value("mc_folds", 10);
    m.cbd.variant = enum_from<CbdVariant>(c.value("variant", "ava_proxy"),
                                          {{"ava_proxy", CbdVariant::ava_proxy},
                                           {"confusion_subset", CbdVariant::confusion_subset},
                                           {"confusion_rows", CbdVariant::confusion_rows}},
                                          "cbd variant");
  }
  m.cbd.no_evidence = NoEvidencePolicy::coin_flip;
  if (j.contains("best_of")) {
    m.best_of_candidates = j.at("best_of").value("candidates", 50);
    m.best_of_cv_folds = j.at("best_of").value("cv_folds", 3);
  }
  m.newick = j.value("newick", "");
  return m;
}

inline std::vector<SweepLevel> levels_from_json(const nlohmann::json& j) {
  std::vector<SweepLevel> out;
  for (const auto& l : j) out.push_back({l.at("label").get<std::string>(), l.at("cp_grid").get<std::vector<double>>()});
  return out;
}

}  // namespace detail

/// Relative dataset and output paths resolve against `base_dir`.
inline ExperimentConfig config_from_json(const nlohmann::json& j, const std::filesystem::path& base_dir = {}) {
  ExperimentConfig c;
  c.experiment_id = j.value("experiment_id", c.experiment_id);
  auto resolve = [&](const std::string& p) {
    std::filesystem::path fp(p);
    return (fp.is_relative() && !base_dir.empty() ? base_dir / fp : fp).string();
  };
  for (const auto& d : j.at("datasets")) {
    DatasetConfig dc;
    dc.path = resolve(d.at("path").get<std::string>());
    const auto& lc = d.at("label_column");
    if (lc.is_number_integer()) dc.label_column = lc.get<std::size_t>();
    else dc.label_column = lc.get<std::string>();
    dc.header = d.value("header", true);
    dc.name = d.value("name", "");
    c.datasets.push_back(std::move(dc));
  }
  if (j.contains("split")) {
    const auto& s = j.at("split");
    c.split.seed = s.value("seed", std::uint64_t{0});
    c.split.n_folds = s.value("folds", 20);
    c.split.train_fraction = s.value("train_fraction", 0.9);
  }
  c.zscore = j.value("zscore", false);
  for (const auto& m : j.value("methods", nlohmann::json::array())) c.methods.push_back(detail::method_from_json(m));
  if (j.contains("sweep")) {
    SweepConfig s;
    s.method = detail::method_from_json(j.at("sweep").at("method"));
    s.cbd_levels = detail::levels_from_json(j.at("sweep").at("cbd_levels"));
    s.base_levels = detail::levels_from_json(j.at("sweep").at("base_levels"));
    c.sweep = std::move(s);
  }
  c.output_dir = j.contains("output_dir") ? resolve(j.at("output_dir").get<std::string>()) : std::string();
  c.workers = j.value("workers", 0);
  c.validate();
  return c;
}

inline ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config '" + path + "'");
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw InvalidArgument(std::string("config: ") + e.what());
  }
  return config_from_json(j, std::filesystem::path(path).parent_path());
}

// -------------------------------------------------------------- result store

struct FoldRecord {
  std::string dataset;
  std::string method;
  int fold = 0;
  double accuracy = 0.0;
  double mean_evaluations = 0.0;
  double wall_time_s = 0.0;
  int n_classes = 0;
  std::size_t n_train = 0;
  std::size_t n_test = 0;
  std::uint64_t split_hash = 0;
  int max_depth = 0;
  double mean_leaf_depth = 0.0;
  std::string newick;

  auto key() const { return std::make_tuple(dataset, method, fold); }

  /// Every field except the wall clock.
  bool same_outcome(const FoldRecord& o) const {
    return key() == o.key() && accuracy == o.accuracy && mean_evaluations == o.mean_evaluations &&
           n_classes == o.n_classes && n_train == o.n_train && n_test == o.n_test && split_hash == o.split_hash &&
           max_depth == o.max_depth && mean_leaf_depth == o.mean_leaf_depth && newick == o.newick;
  }
};

inline const std::vector<std::string>& record_header() {
  static const std::vector<std::string> h{"dataset", "method", "fold", "accuracy", "mean_evaluations", "wall_time_s",
                                          "n_classes", "n_train", "n_test", "split_hash", "max_depth",
                                          "mean_leaf_depth", "newick"};
  return h;
}

inline std::vector<std::string> record_fields(const FoldRecord& r) {
  return {r.dataset,
          r.method,
          std::to_string(r.fold),
          csv::format_exact(r.accuracy),
          csv::format_exact(r.mean_evaluations),
          csv::format_exact(r.wall_time_s),
          std::to_string(r.n_classes),
          std::to_string(r.n_train),
          std::to_string(r.n_test),
          std::to_string(r.split_hash),
          std::to_string(r.max_depth),
          csv::format_exact(r.mean_leaf_depth),
          r.newick};
}

inline FoldRecord record_from_fields(const std::vector<std::string>& f) {
  if (f.size() != record_header().size()) throw IoError("result store: malformed record line");
  auto num = [](const std::string& s) {
    auto v = csv::parse_finite(s);
    if (!v) throw IoError("result store: bad number '" + s + "'");
    return *v;
  };
  FoldRecord r;
  r.dataset = f[0];
  r.method = f[1];
  r.fold = std::stoi(f[2]);
  r.accuracy = num(f[3]);
  r.mean_evaluations = num(f[4]);
  r.wall_time_s = num(f[5]);
  r.n_classes = std::stoi(f[6]);
  r.n_train = std::stoull(f[7]);
  r.n_test = std::stoull(f[8]);
  r.split_hash = std::stoull(f[9]);
  r.max_depth = std::stoi(f[10]);
  r.mean_leaf_depth = num(f[11]);
  r.newick = f[12];
  return r;
}

/// Append-only table of fold records, optionally backed by
/// `<dir>/records.csv` plus `<dir>/meta.json`.
class ResultStore {
 public:
  ResultStore() = default;

  /// Opens (or creates) a store directory. An existing store must carry the
  /// same metadata fingerprint.
  static ResultStore open(const std::filesystem::path& dir, const nlohmann::json& meta) {
    ResultStore s;
    s.dir_ = dir;
    s.meta_ = meta;
    std::filesystem::create_directories(dir);
    const auto meta_path = dir / "meta.json";
    if (std::filesystem::exists(meta_path)) {
      std::ifstream in(meta_path);
      nlohmann::json old;
      in >> old;
      if (old.value("config_hash", std::string()) != meta.value("config_hash", std::string()))
        throw InvalidArgument("result store '" + dir.string() + "' belongs to a different configuration");
    } else {
      std::ofstream(meta_path) << meta.dump(2) << '\n';
    }
    const auto rec_path = dir / "records.csv";
    if (std::filesystem::exists(rec_path)) s.load_records(rec_path);
    if (!std::filesystem::exists(rec_path) || std::filesystem::file_size(rec_path) == 0) {
      std::ofstream out(rec_path);
      csv::write_row(out, record_header());
    }
    return s;
  }

  static ResultStore open_in_memory(const nlohmann::json& meta) {
    ResultStore s;
    s.meta_ = meta;
    return s;
  }

  /// Read-only load of a store directory or a bare records.csv.
  static ResultStore load(const std::filesystem::path& path) {
    ResultStore s;
    auto rec = path;
    if (std::filesystem::is_directory(path)) {
      rec = path / "records.csv";
      const auto meta_path = path / "meta.json";
      if (std::filesystem::exists(meta_path)) {
        std::ifstream in(meta_path);
        in >> s.meta_;
      }
    }
    if (!std::filesystem::exists(rec)) throw IoError("no records at '" + rec.string() + "'");
    s.load_records(rec);
    return s;
  }

  bool has(const std::string& dataset, const std::string& method, int fold) const {
    std::lock_guard lock(mu_);
    return keys_.count({dataset, method, fold}) > 0;
  }

  /// Appends and persists; a record whose key is already present is ignored.
  void append(const FoldRecord& r) {
    std::lock_guard lock(mu_);
    if (!keys_.insert(r.key()).second) return;
    records_.push_back(r);
    if (!dir_.empty()) {
      std::ofstream out(dir_ / "records.csv", std::ios::app);
      csv::write_row(out, record_fields(r));
    }
  }

  /// Records sorted by (dataset, method, fold).
  std::vector<FoldRecord> records() const {
    std::lock_guard lock(mu_);
    auto out = records_;
    std::sort(out.begin(), out.end(), [](const auto& a, const auto& b) { return a.key() < b.key(); });
    return out;
  }

  std::vector<FoldRecord> records_for(const std::string& dataset, const std::string& method) const {
    std::vector<FoldRecord> out;
    for (auto& r : records())
      if (r.dataset == dataset && r.method == method) out.push_back(r);
    return out;
  }

  std::vector<std::string> datasets() const {
    std::set<std::string> s;
    for (const auto& r : records()) s.insert(r.dataset);
    return {s.begin(), s.end()};
  }

  /// Method tags in order of first appearance in the metadata, then others.
  std::vector<std::string> methods() const {
    std::vector<std::string> out;
    if (meta_.contains("methods"))
      for (const auto& m : meta_.at("methods")) out.push_back(m.get<std::string>());
    std::set<std::string> seen(out.begin(), out.end());
    for (const auto& r : records())
      if (seen.insert(r.method).second) out.push_back(r.method);
    std::vector<std::string> present;
    for (const auto& m : out)
      for (const auto& r : records())
        if (r.method == m) {
          present.push_back(m);
          break;
        }
    return present;
  }

  const nlohmann::json& meta() const { return meta_; }
  double train_fraction() const { return meta_.value("train_fraction", 0.9); }
  std::size_t size() const {
    std::lock_guard lock(mu_);
    return records_.size();
  }

  ResultStore(ResultStore&& o) noexcept
      : dir_(std::move(o.dir_)), meta_(std::move(o.meta_)), records_(std::move(o.records_)), keys_(std::move(o.keys_)) {}
  ResultStore& operator=(ResultStore&& o) noexcept {
    dir_ = std::move(o.dir_);
    meta_ = std::move(o.meta_);
    records_ = std::move(o.records_);
    keys_ = std::move(o.keys_);
    return *this;
  }

 private:
  void load_records(const std::filesystem::path& rec_path) {
    std::ifstream in(rec_path);
    std::string line;
    bool first = true;
    while (std::getline(in, line)) {
      if (line.empty()) continue;
      auto f = csv::split_line(line);
      if (!f) throw IoError("result store: unterminated quote");
      if (first) {
        first = false;
        if (*f == record_header()) continue;
      }
      auto r = record_from_fields(*f);
      if (keys_.insert(r.key()).second) records_.push_back(std::move(r));
    }
  }

  std::filesystem::path dir_;
  nlohmann::json meta_;
  std::vector<FoldRecord> records_;
  std::set<std::tuple<std::string, std::string, int>> keys_;
  mutable std::mutex mu_;
};

// ------------------------------------------------------------------ execution

struct AuditTotals {
  std::atomic<std::size_t> touches{0};
  std::atomic<std::size_t> violations{0};
  std::mutex mu;
  std::vector<std::string> details;
};

struct RunOptions {
  int workers = 0;  // 0: config value, then DENDRO_WORKERS, then hardware concurrency
  AuditTotals* audit = nullptr;
  bool persist = true;  // write to output_dir when set in the config
};

inline int resolve_workers(int requested, int from_config) {
  if (requested > 0) return requested;
  if (from_config > 0) return from_config;
  if (const char* env = std::getenv("DENDRO_WORKERS")) {
    const int v = std::atoi(env);
    if (v > 0) return v;
  }
  return std::max(1u, std::thread::hardware_concurrency());
}

inline std::uint64_t split_fingerprint(const Split& s) {
  std::uint64_t h = 0x9e3779b97f4a7c15ULL;
  for (auto r : s.test) h = splitmix64(h ^ r);
  return h;
}

inline std::string dataset_label(const DatasetConfig& dc, const Dataset& ds) { return dc.name.empty() ? ds.name : dc.name; }

inline nlohmann::json experiment_meta(const ExperimentConfig& cfg, const nlohmann::json& raw) {
  nlohmann::json m;
  m["format"] = kStoreVersion;
  m["experiment_id"] = cfg.experiment_id;
  m["seed"] = cfg.split.seed;
  m["folds"] = cfg.split.n_folds;
  m["train_fraction"] = cfg.split.train_fraction;
  m["config_hash"] = std::to_string(stable_hash(raw.dump()));
  m["methods"] = nlohmann::json::array();
  for (const auto& x : cfg.methods) m["methods"].push_back(x.tag);
  return m;
}

/// Hierarchy for one fold, computed from training data only.
inline Hierarchy extract_hierarchy(const MethodConfig& m, const Dataset& train, std::uint64_t seed) {
  const int n = train.n_classes();
  switch (m.source) {
    case HierarchySource::random: {
      Rng rng(derive_seed(seed, {0x4A}));
      return sample_random_hierarchy(n, rng);
    }
    case HierarchySource::rbd:
    case HierarchySource::cbd: {
      const auto d = m.source == HierarchySource::rbd ? rbd_matrix(train, m.metric)
                                                      : cbd_matrix(train, m.cbd, derive_seed(seed, {0xCB}));
      return m.clustering == Clustering::hac ? hac_build(d) : hkm_build(d, derive_seed(seed, {0x2B}));
    }
    case HierarchySource::best_of_50:
      return best_of(train, m.base, m.best_of_candidates, m.best_of_cv_folds, derive_seed(seed, {0xB5}));
    case HierarchySource::fixed_newick:
      return from_newick(m.newick, train.class_names);
    default:
      throw InvalidArgument("extract_hierarchy: method '" + m.tag + "' is not hierarchical");
  }
}

/// Runs one (fold, method) cell. Extraction and training run inside the
/// audit scope; only evaluation sees the test slice.
inline FoldRecord run_cell(const MethodConfig& m, const Dataset& full, const std::string& ds_label, const Split& split,
                           int fold, std::uint64_t seed, bool zscore, AuditTotals* totals) {
  const auto t0 = std::chrono::steady_clock::now();
  Dataset train = full.subset(split.train, SliceRole::train);
  Dataset test = full.subset(split.test, SliceRole::test);
  if (zscore) {
    const auto z = ZScore::fit(train.features);
    z.apply(train.features);
    z.apply(test.features);
  }
  FoldRecord rec;
  rec.dataset = ds_label;
  rec.method = m.tag;
  rec.fold = fold;
  rec.n_classes = full.n_classes();
  rec.n_train = train.rows();
  rec.n_test = test.rows();
  rec.split_hash = split_fingerprint(split);

  std::optional<audit::FoldAudit> fa;
  if (totals) fa.emplace(full.rows(), split.test);

  if (m.hierarchical()) {
    TrainedHierarchy th;
    {
      audit::ScopedAudit scope(fa ? &*fa : nullptr);
      const Hierarchy h = extract_hierarchy(m, train, seed);
      th = train_hmc(h, train, m.base, derive_seed(seed, {0x77}));
    }
    const auto ev = evaluate(th, test);
    const auto ds = depth_stats(th.hierarchy);
    rec.accuracy = ev.accuracy;
    rec.mean_evaluations = ev.mean_evaluations;
    rec.max_depth = ds.max_depth;
    rec.mean_leaf_depth = ds.mean_leaf_depth;
    rec.newick = to_newick(th.hierarchy);
  } else {
    Labels pred;
    if (m.source == HierarchySource::ova_baseline) {
      OvaModel ova;
      {
        audit::ScopedAudit scope(fa ? &*fa : nullptr);
        audit::touch(train, "fit_ova");
        ova = fit_ova(m.base, train.features, train.labels, train.n_classes(), derive_seed(seed, {0x0A}));
      }
      pred = predict(ova, test.features);
      rec.mean_evaluations = train.n_classes();
    } else {
      FittedModel single;
      {
        audit::ScopedAudit scope(fa ? &*fa : nullptr);
        audit::touch(train, "fit_single_multiclass");
        single = fit_single_multiclass(m.base, train.features, train.labels, train.n_classes(), derive_seed(seed, {0x51}));
      }
      pred = predict(single, test.features);
      rec.mean_evaluations = 1.0;
    }
    std::size_t correct = 0;
    for (std::size_t i = 0; i < pred.size(); ++i) correct += pred[i] == test.labels[i];
    rec.accuracy = test.rows() ? static_cast<double>(correct) / static_cast<double>(test.rows()) : 0.0;
  }
  if (fa && totals) {
    totals->touches += fa->touches();
    totals->violations += fa->violations();
    if (fa->violations()) {
      std::lock_guard lock(totals->mu);
      for (const auto& p : fa->violating_phases())
        totals->details.push_back(ds_label + "/" + m.tag + "/fold " + std::to_string(fold) + ": " + p);
    }
  }
  rec.wall_time_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return rec;
}

inline std::vector<Dataset> load_datasets(const ExperimentConfig& cfg) {
  std::vector<Dataset> out;
  for (const auto& dc : cfg.datasets) {
    Dataset ds = load_csv(dc.path, dc.label_column, dc.header);
    if (!dc.name.empty()) ds.name = dc.name;
    out.push_back(std::move(ds));
  }
  return out;
}

/// Executes every missing (dataset, fold, method) cell. Seeds derive from
/// (master seed, dataset, fold, method tag), never from scheduling order.
inline ResultStore run_experiment(const ExperimentConfig& cfg, const std::vector<Dataset>& datasets,
                                  ResultStore store, const RunOptions& opt = {}) {
  cfg.validate();
  struct Task {
    std::size_t d;
    int fold;
    std::size_t m;
  };
  std::vector<std::vector<Split>> splits;
  std::vector<std::string> labels;
  for (std::size_t d = 0; d < datasets.size(); ++d) {
    splits.push_back(monte_carlo_splits(datasets[d], cfg.split));
    labels.push_back(dataset_label(cfg.datasets[d], datasets[d]));
  }
  std::vector<Task> tasks;
  for (std::size_t d = 0; d < datasets.size(); ++d)
    for (int f = 0; f < cfg.split.n_folds; ++f)
      for (std::size_t m = 0; m < cfg.methods.size(); ++m)
        if (!store.has(labels[d], cfg.methods[m].tag, f)) tasks.push_back({d, f, m});

  std::atomic<std::size_t> next{0};
  std::atomic<bool> failed{false};
  std::exception_ptr first_error;
  std::mutex err_mu;
  auto worker = [&] {
    while (!failed) {
      const std::size_t i = next++;
      if (i >= tasks.size()) return;
      const Task& t = tasks[i];
      const auto& m = cfg.methods[t.m];
      try {
        const auto seed = derive_seed(cfg.split.seed, {t.d, static_cast<std::uint64_t>(t.fold), stable_hash(m.tag)});
        store.append(run_cell(m, datasets[t.d], labels[t.d], splits[t.d][static_cast<std::size_t>(t.fold)], t.fold,
                              seed, cfg.zscore, opt.audit));
      } catch (const std::exception& e) {
        std::lock_guard lock(err_mu);
        if (!first_error) {
          const std::string ctx = "dataset '" + labels[t.d] + "', method '" + m.tag + "', fold " + std::to_string(t.fold);
          const auto* de = dynamic_cast<const Error*>(&e);
          first_error = std::make_exception_ptr(Error(de ? de->code() : "runtime_error", ctx + ": " + e.what()));
        }
        failed = true;
      }
    }
  };
  const int n_workers = std::min<int>(resolve_workers(opt.workers, cfg.workers), std::max<int>(1, static_cast<int>(tasks.size())));
  {
    std::vector<std::jthread> pool;
    for (int w = 1; w < n_workers; ++w) pool.emplace_back(worker);
    worker();
  }
  if (first_error) std::rethrow_exception(first_error);
  return store;
}

/// Loads the datasets and runs into `cfg.output_dir` (in memory when empty).
inline ResultStore run_experiment(const ExperimentConfig& cfg, const nlohmann::json& raw_config, const RunOptions& opt = {}) {
  cfg.validate();
  const auto datasets = load_datasets(cfg);
  const auto meta = experiment_meta(cfg, raw_config);
  ResultStore store;
  if (opt.persist && !cfg.output_dir.empty()) store = ResultStore::open(cfg.output_dir, meta);
  else store = ResultStore::open_in_memory(meta);
  return run_experiment(cfg, datasets, std::move(store), opt);
}

// -------------------------------------------------------------------- reports

struct ReportRow {
  std::string dataset;
  std::string method;
  int folds = 0;
  double mean_accuracy = 0.0;
  double corrected_se = 0.0;
  stats::ComparisonReport vs_baseline;
  double mean_evaluations = 0.0;
  double mean_max_depth = 0.0;
  double mean_leaf_depth = 0.0;
  bool hierarchical = false;
};

inline std::vector<stats::FoldAccuracy> fold_accuracies(const std::vector<FoldRecord>& recs) {
  std::vector<stats::FoldAccuracy> out;
  for (const auto& r : recs) out.push_back({r.fold, r.accuracy});
  return out;
}

/// Per dataset and method: mean ± corrected standard error, and the
/// corrected paired t-test against the baseline method.
inline std::vector<ReportRow> report(const ResultStore& store, const std::string& baseline_tag) {
  const double f = store.train_fraction();
  const double n_train = f, n_test = 1.0 - f;  // nominal ratio
  std::vector<ReportRow> rows;
  bool baseline_seen = false;
  for (const auto& ds : store.datasets()) {
    const auto base = store.records_for(ds, baseline_tag);
    if (base.empty()) continue;
    baseline_seen = true;
    for (const auto& method : store.methods()) {
      const auto recs = store.records_for(ds, method);
      if (recs.empty()) continue;
      if (recs.size() != base.size()) throw InvalidArgument("report: method '" + method + "' has a different fold count");
      for (std::size_t i = 0; i < recs.size(); ++i)
        if (recs[i].fold != base[i].fold || recs[i].split_hash != base[i].split_hash)
          throw InvalidArgument("report: method '" + method + "' was not run on the baseline's splits");
      ReportRow row;
      row.dataset = ds;
      row.method = method;
      row.folds = static_cast<int>(recs.size());
      std::vector<double> acc;
      for (const auto& r : recs) {
        acc.push_back(r.accuracy);
        row.mean_evaluations += r.mean_evaluations / static_cast<double>(recs.size());
        row.mean_max_depth += r.max_depth / static_cast<double>(recs.size());
        row.mean_leaf_depth += r.mean_leaf_depth / static_cast<double>(recs.size());
        row.hierarchical = row.hierarchical || !r.newick.empty();
      }
      const auto ms = stats::corrected_variance(acc, n_train, n_test);
      row.mean_accuracy = ms.mean;
      row.corrected_se = ms.corrected_se;
      row.vs_baseline = stats::compare(method, fold_accuracies(recs), baseline_tag, fold_accuracies(base), n_train, n_test);
      rows.push_back(std::move(row));
    }
  }
  if (!baseline_seen) throw InvalidArgument("report: baseline '" + baseline_tag + "' not found in store");
  return rows;
}

/// "%.4g±%.2g", the layout used in accuracy tables.
inline std::string format_accuracy(double mean, double se) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.4g±%.2g", mean, se);
  return buf;
}

inline std::string arrow_string(const stats::ComparisonReport& c) {
  std::string s;
  const char* a = c.direction == stats::Direction::a_better ? "↑" : "↓";
  for (int i = 0; i < c.arrows; ++i) s += a;
  return s;
}

inline void write_report_csv(std::ostream& os, const std::vector<ReportRow>& rows) {
  csv::write_row(os, {"dataset", "method", "folds", "mean_accuracy", "corrected_se", "baseline", "mean_diff", "t_stat",
                      "p_value", "arrows", "direction", "mean_evaluations", "mean_max_depth", "mean_leaf_depth"});
  for (const auto& r : rows) {
    const auto& c = r.vs_baseline;
    csv::write_row(os, {r.dataset, r.method, std::to_string(r.folds), csv::format_exact(r.mean_accuracy),
                        csv::format_exact(r.corrected_se), c.method_b, csv::format_exact(c.mean_diff),
                        std::isfinite(c.t_stat) ? csv::format_exact(c.t_stat) : (c.t_stat > 0 ? "inf" : "-inf"),
                        csv::format_exact(c.p_value), std::to_string(c.arrows), stats::to_string(c.direction),
                        csv::format_exact(r.mean_evaluations), r.hierarchical ? csv::format_exact(r.mean_max_depth) : "",
                        r.hierarchical ? csv::format_exact(r.mean_leaf_depth) : ""});
  }
}

inline void write_report_text(std::ostream& os, const std::vector<ReportRow>& rows) {
  char line[256];
  std::snprintf(line, sizeof line, "%-16s %-22s %-20s %-9s %-8s %-7s\n", "dataset", "method", "accuracy", "p", "evals",
                "depth");
  os << line;
  for (const auto& r : rows) {
    const std::string acc = format_accuracy(r.mean_accuracy, r.corrected_se) + arrow_string(r.vs_baseline);
    char depth[32] = "";
    if (r.hierarchical) std::snprintf(depth, sizeof depth, "%.2f", r.mean_leaf_depth);
    char p[32];
    std::snprintf(p, sizeof p, "%.3g", r.vs_baseline.p_value);
    // byte-padded; the ± and arrows are multibyte, so pad by hand
    std::string acc_col = acc;
    std::size_t visible = 0;
    for (unsigned char ch : acc) visible += (ch & 0xC0) != 0x80;
    acc_col.append(visible < 20 ? 20 - visible : 0, ' ');
    std::snprintf(line, sizeof line, "%-16s %-22s %s %-9s %-8.3f %-7s\n", r.dataset.c_str(), r.method.c_str(),
                  acc_col.c_str(), p, r.mean_evaluations, depth);
    os << line;
  }
}

// ---------------------------------------------------------------------- sweep

struct SweepCell {
  std::string dataset;
  std::string cbd_level;
  std::string base_level;
  double mean_accuracy = 0.0;
  double corrected_se = 0.0;
};

inline std::string sweep_tag(const SweepLevel& cbd, const SweepLevel& base) { return "cbd[" + cbd.label + "]/base[" + base.label + "]"; }

/// Expands the sweep axes into one method per (cbd level, base level).
inline std::vector<MethodConfig> sweep_methods(const SweepConfig& s) {
  std::vector<MethodConfig> out;
  for (const auto& c : s.cbd_levels)
    for (const auto& b : s.base_levels) {
      MethodConfig m = s.method;
      m.tag = sweep_tag(c, b);
      m.cbd.classifier.cart_cp_grid = c.cp_grid;
      m.base.cart_cp_grid = b.cp_grid;
      out.push_back(std::move(m));
    }
  return out;
}

inline std::vector<SweepCell> sweep_cells(const ResultStore& store, const SweepConfig& s) {
  const double f = store.train_fraction();
  std::vector<SweepCell> out;
  for (const auto& ds : store.datasets())
    for (const auto& c : s.cbd_levels)
      for (const auto& b : s.base_levels) {
        const auto recs = store.records_for(ds, sweep_tag(c, b));
        if (recs.empty()) continue;
        std::vector<double> acc;
        for (const auto& r : recs) acc.push_back(r.accuracy);
        SweepCell cell{ds, c.label, b.label, 0.0, 0.0};
        if (acc.size() >= 2) {
          const auto ms = stats::corrected_variance(acc, f, 1.0 - f);
          cell.mean_accuracy = ms.mean;
          cell.corrected_se = ms.corrected_se;
        } else {
          cell.mean_accuracy = acc.front();
        }
        out.push_back(cell);
      }
  return out;
}

/// Runs the full grid under the config's split plan; methods listed in the
/// config are replaced by the expanded grid.
inline std::vector<SweepCell> sweep_grid(const ExperimentConfig& cfg, const nlohmann::json& raw_config,
                                         const RunOptions& opt = {}) {
  if (!cfg.sweep) throw InvalidArgument("sweep: config has no sweep section");
  ExperimentConfig grid = cfg;
  grid.methods = sweep_methods(*cfg.sweep);
  grid.sweep.reset();
  const auto store = run_experiment(grid, raw_config, opt);
  return sweep_cells(store, *cfg.sweep);
}

inline void write_sweep_csv(std::ostream& os, const std::vector<SweepCell>& cells) {
  csv::write_row(os, {"dataset", "cbd_level", "base_level", "mean_accuracy", "corrected_se"});
  for (const auto& c : cells)
    csv::write_row(os, {c.dataset, c.cbd_level, c.base_level, csv::format_exact(c.mean_accuracy),
                        csv::format_exact(c.corrected_se)});
}

// ------------------------------------------------------- class-count summary

struct ClassCountLine {
  std::string dataset;
  std::string method;
  int n_classes = 0;
  double relative_difference = 0.0;
  double p_value = 1.0;
};

/// Relative accuracy difference of every method against the random-hierarchy
/// method, per dataset, sorted by class count.
inline std::vector<ClassCountLine> classcount_summary(const std::vector<const ResultStore*>& stores,
                                                      const std::string& random_tag) {
  std::vector<ClassCountLine> out;
  for (const auto* store : stores)
    for (const auto& row : report(*store, random_tag)) {
      if (row.method == random_tag) continue;
      const auto base = store->records_for(row.dataset, random_tag);
      double base_mean = 0.0;
      for (const auto& r : base) base_mean += r.accuracy / static_cast<double>(base.size());
      ClassCountLine l;
      l.dataset = row.dataset;
      l.method = row.method;
      l.n_classes = base.front().n_classes;
      l.relative_difference = (row.mean_accuracy - base_mean) / base_mean;
      l.p_value = row.vs_baseline.p_value;
      out.push_back(l);
    }
  std::stable_sort(out.begin(), out.end(), [](const auto& a, const auto& b) { return a.n_classes < b.n_classes; });
  return out;
}

inline void write_classcount_csv(std::ostream& os, const std::vector<ClassCountLine>& lines) {
  csv::write_row(os, {"dataset", "method", "n_classes", "relative_difference", "p_value"});
  for (const auto& l : lines)
    csv::write_row(os, {l.dataset, l.method, std::to_string(l.n_classes), csv::format_exact(l.relative_difference),
                        csv::format_exact(l.p_value)});
}

}  // namespace dendro::bench
