// dendro: command-line front end for the hierarchy benchmark harness.

#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "dendro/bench.hpp"

namespace {

using namespace dendro;

LabelColumn parse_label_column(const std::string& s) {
  if (!s.empty() && s.find_first_not_of("0123456789") == std::string::npos) return static_cast<std::size_t>(std::stoull(s));
  return s;
}

std::size_t last_column(const std::string& path) {
  std::ifstream in(path);
  std::string line;
  if (!in || !std::getline(in, line)) throw IoError("cannot read '" + path + "'");
  const auto fields = csv::split_line(line);
  if (!fields || fields->empty()) throw ParseError("malformed first line in '" + path + "'", 0);
  return fields->size() - 1;
}

nlohmann::json read_json(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config '" + path + "'");
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw InvalidArgument(std::string("config: ") + e.what());
  }
}

bench::ExperimentConfig config_at(const std::string& path, const nlohmann::json& raw) {
  try {
    return bench::config_from_json(raw, std::filesystem::path(path).parent_path());
  } catch (const nlohmann::json::exception& e) {
    throw InvalidArgument(std::string("config: ") + e.what());
  }
}

// Writes to `path`, or stdout when empty.
template <typename F>
void emit(const std::string& path, F&& body) {
  if (path.empty()) {
    body(std::cout);
    return;
  }
  std::ofstream out(path);
  if (!out) throw IoError("cannot write '" + path + "'");
  body(out);
}

void error_line(const std::string& code, const std::string& message) {
  nlohmann::json j{{"error", {{"code", code}, {"message", message}}}};
  std::cerr << j.dump() << '\n';
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Class-hierarchy extraction and hierarchical multi-class benchmark harness"};
  app.require_subcommand(1);

  int workers = 0;
  std::string out_path;

  auto* run = app.add_subcommand("run", "run every (dataset, fold, method) cell of a config; resumes an existing store");
  std::string run_config, run_output;
  bool run_zscore = false;
  run->add_option("config", run_config, "experiment config (JSON)")->required()->check(CLI::ExistingFile);
  run->add_option("--output", run_output, "store directory (overrides output_dir)");
  run->add_option("--workers", workers, "worker threads (default: DENDRO_WORKERS or hardware)");
  run->add_flag("--zscore", run_zscore, "z-score features with training-fold statistics");

  auto* rep = app.add_subcommand("report", "mean±se table with corrected paired tests against a baseline");
  std::string rep_store, rep_baseline, rep_format = "csv";
  rep->add_option("store", rep_store, "store directory or records.csv")->required();
  rep->add_option("--baseline", rep_baseline, "baseline method tag")->required();
  rep->add_option("--format", rep_format, "csv or text")->check(CLI::IsMember({"csv", "text"}));
  rep->add_option("--out", out_path, "output file (default stdout)");

  auto* sweep = app.add_subcommand("sweep", "evaluate the CBD-complexity by base-complexity grid");
  std::string sweep_config;
  sweep->add_option("config", sweep_config, "experiment config with a sweep section")->required()->check(CLI::ExistingFile);
  sweep->add_option("--workers", workers, "worker threads");
  sweep->add_option("--out", out_path, "output file (default stdout)");

  auto* sample = app.add_subcommand("sample-hierarchy", "print a uniformly sampled hierarchy in Newick");
  int sample_classes = 0;
  std::uint64_t sample_seed = 0;
  sample->add_option("--classes", sample_classes, "number of classes")->required()->check(CLI::Range(1, 1 << 20));
  sample->add_option("--seed", sample_seed, "seed")->required();

  auto* dis = app.add_subcommand("dissim", "print a class dissimilarity matrix as CSV");
  std::string dis_path, dis_label = "-1", dis_method = "rbd", dis_metric = "euclidean", dis_variant = "ava_proxy",
                        dis_scheme = "single_multiclass", dis_learner = "cart";
  bool dis_no_header = false;
  int dis_mc = 10;
  std::uint64_t dis_seed = 0;
  dis->add_option("dataset", dis_path, "CSV dataset")->required();
  dis->add_option("--label", dis_label, "label column name or 0-based index (default: last column)");
  dis->add_flag("--no-header", dis_no_header, "the CSV has no header row");
  dis->add_option("--method", dis_method, "rbd or cbd")->check(CLI::IsMember({"rbd", "cbd"}));
  dis->add_option("--metric", dis_metric, "rbd metric")->check(CLI::IsMember({"euclidean", "cosine"}));
  dis->add_option("--variant", dis_variant, "cbd variant")
      ->check(CLI::IsMember({"ava_proxy", "confusion_subset", "confusion_rows"}));
  dis->add_option("--scheme", dis_scheme, "cbd scheme")->check(CLI::IsMember({"single_multiclass", "ova"}));
  dis->add_option("--classifier", dis_learner, "cbd classifier")->check(CLI::IsMember({"cart", "logistic"}));
  dis->add_option("--mc-folds", dis_mc, "cbd Monte Carlo folds")->check(CLI::PositiveNumber);
  dis->add_option("--seed", dis_seed, "seed");
  dis->add_option("--out", out_path, "output file (default stdout)");

  auto* cc = app.add_subcommand("classcount", "relative accuracy against the random hierarchy, by class count");
  std::vector<std::string> cc_stores;
  std::string cc_random = "random";
  cc->add_option("stores", cc_stores, "store directories")->required();
  cc->add_option("--random", cc_random, "tag of the random-hierarchy method");
  cc->add_option("--out", out_path, "output file (default stdout)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    error_line("usage", e.what());
    return 2;
  }

  try {
    if (*run) {
      const auto raw = read_json(run_config);
      auto cfg = config_at(run_config, raw);
      if (!run_output.empty()) cfg.output_dir = run_output;
      if (run_zscore) cfg.zscore = true;
      if (cfg.output_dir.empty()) throw InvalidArgument("run: no output directory (set output_dir or --output)");
      bench::RunOptions opt;
      opt.workers = workers;
      auto effective = raw;
      effective["zscore"] = cfg.zscore;
      const auto store = bench::run_experiment(cfg, effective, opt);
      std::cerr << "wrote " << store.size() << " records to " << cfg.output_dir << '\n';
    } else if (*rep) {
      const auto store = bench::ResultStore::load(rep_store);
      const auto rows = bench::report(store, rep_baseline);
      emit(out_path, [&](std::ostream& os) {
        if (rep_format == "text") bench::write_report_text(os, rows);
        else bench::write_report_csv(os, rows);
      });
    } else if (*sweep) {
      const auto raw = read_json(sweep_config);
      const auto cfg = config_at(sweep_config, raw);
      bench::RunOptions opt;
      opt.workers = workers;
      const auto cells = bench::sweep_grid(cfg, raw, opt);
      emit(out_path, [&](std::ostream& os) { bench::write_sweep_csv(os, cells); });
    } else if (*sample) {
      Rng rng(sample_seed);
      std::cout << to_newick(sample_random_hierarchy(sample_classes, rng)) << '\n';
    } else if (*dis) {
      const Dataset ds = load_csv(dis_path, dis_label == "-1" ? LabelColumn{last_column(dis_path)} : parse_label_column(dis_label),
                                  !dis_no_header);
      DissimilarityMatrix d;
      if (dis_method == "rbd") {
        d = rbd_matrix(ds, dis_metric == "cosine" ? Metric::cosine : Metric::euclidean);
      } else {
        CbdPlan plan;
        plan.classifier = dis_learner == "logistic" ? ClassifierSpec::logistic() : ClassifierSpec::cart();
        plan.scheme = dis_scheme == "ova" ? CbdScheme::ova : CbdScheme::single_multiclass;
        plan.variant = dis_variant == "confusion_subset" ? CbdVariant::confusion_subset
                       : dis_variant == "confusion_rows" ? CbdVariant::confusion_rows
                                                         : CbdVariant::ava_proxy;
        plan.mc_folds = dis_mc;
        plan.no_evidence = NoEvidencePolicy::coin_flip;
        d = cbd_matrix(ds, plan, dis_seed);
      }
      emit(out_path, [&](std::ostream& os) { write_dissimilarity_csv(os, d, ds.class_names); });
    } else if (*cc) {
      std::vector<bench::ResultStore> stores;
      for (const auto& s : cc_stores) stores.push_back(bench::ResultStore::load(s));
      std::vector<const bench::ResultStore*> ptrs;
      for (const auto& s : stores) ptrs.push_back(&s);
      const auto lines = bench::classcount_summary(ptrs, cc_random);
      emit(out_path, [&](std::ostream& os) { bench::write_classcount_csv(os, lines); });
    }
  } catch (const Error& e) {
    error_line(e.code(), e.what());
    return 1;
  } catch (const std::exception& e) {
    error_line("runtime_error", e.what());
    return 1;
  }
  return 0;
}
