// Command-line front end: generate, stats, preprocess, attack, defend,
// evaluate, export-tensors, ensemble.
#include <CLI11.hpp>

#include <cstdio>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <vcfp/vcfp.hpp>

namespace fs = std::filesystem;
using nlohmann::json;
using namespace vcfp;

namespace {

constexpr const char* kVersion = "0.1.0";

struct Globals {
  std::uint64_t seed = 0;
  std::string config_path;
  std::string out = ".";
  json config = json::object();

  json section(const char* name) const { return config.value(name, json::object()); }
};

// Flags given on the command line win over the config file, which wins over
// built-in defaults.
template <typename T>
T pick(const CLI::Option* flag, const T& flag_value, const json& cfg, const char* key, const T& fallback) {
  if (flag && flag->count()) return flag_value;
  if (cfg.contains(key)) return cfg.at(key).get<T>();
  return fallback;
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (start <= s.size()) {
    const auto comma = s.find(',', start);
    const auto end = comma == std::string::npos ? s.size() : comma;
    if (end > start) out.push_back(s.substr(start, end - start));
    if (comma == std::string::npos) break;
    start = comma + 1;
  }
  return out;
}

std::vector<double> parse_numbers(const std::string& s) {
  std::vector<double> out;
  for (const auto& tok : split_list(s)) {
    try {
      std::size_t used = 0;
      out.push_back(std::stod(tok, &used));
      if (used != tok.size()) throw std::invalid_argument(tok);
    } catch (const std::exception&) {
      throw ValidationError("not a number: '" + tok + "'");
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Shared option groups

struct PreprocessFlags {
  std::string format = "numeric", keep = "both", order = "after_pad";
  std::size_t length = 475;
  CLI::Option *f_format = nullptr, *f_keep = nullptr, *f_order = nullptr, *f_length = nullptr;

  void add(CLI::App* app) {
    f_format = app->add_option("--format", format, "numeric or binary");
    f_keep = app->add_option("--keep", keep, "both, incoming or outgoing");
    f_order = app->add_option("--order", order, "after_pad or before_pad");
    f_length = app->add_option("--length", length, "padded vector length");
  }

  PreprocessConfig resolve(const json& cfg) const {
    PreprocessConfig p;
    p.format = format_from_string(pick(f_format, format, cfg, "format", std::string("numeric")));
    p.keep = direction_keep_from_string(pick(f_keep, keep, cfg, "keep", std::string("both")));
    const auto o = pick(f_order, order, cfg, "order", std::string("after_pad"));
    if (o == "after_pad") p.order = NormalizeOrder::AfterPad;
    else if (o == "before_pad") p.order = NormalizeOrder::BeforePad;
    else throw ValidationError("unknown normalization order '" + o + "'");
    p.length = pick(f_length, length, cfg, "length", p.length);
    if (p.length == 0) throw ValidationError("length must be positive");
    return p;
  }
};

json preprocess_json(const PreprocessConfig& p) {
  return {{"format", to_string(p.format)},
          {"keep", to_string(p.keep)},
          {"order", p.order == NormalizeOrder::AfterPad ? "after_pad" : "before_pad"},
          {"length", p.length}};
}

struct AttackFlags {
  std::string features = "numeric", model = "one_nn", keep = "both";
  int folds = 5;
  std::uint64_t split_seed = 1;
  int rounds = 200, epochs = 200;
  CLI::Option *f_features = nullptr, *f_model = nullptr, *f_keep = nullptr, *f_folds = nullptr, *f_split = nullptr,
              *f_rounds = nullptr, *f_epochs = nullptr;

  void add(CLI::App* app) {
    f_features = app->add_option("--features", features, "cumul, cns19, numeric or binary");
    f_model = app->add_option("--model", model, "adaboost, linear_ovr or one_nn");
    f_keep = app->add_option("--keep", keep, "both, incoming or outgoing");
    f_folds = app->add_option("--folds", folds, "cross-validation folds");
    f_split = app->add_option("--split-seed", split_seed, "seed of the fold assignment");
    f_rounds = app->add_option("--rounds", rounds, "AdaBoost rounds");
    f_epochs = app->add_option("--epochs", epochs, "LinearOVR epochs");
  }

  AttackConfig resolve(const json& cfg, std::uint64_t seed) const {
    AttackConfig a;
    a.features = feature_kind_from_string(pick(f_features, features, cfg, "features", std::string("numeric")));
    a.model = model_kind_from_string(pick(f_model, model, cfg, "model", std::string("one_nn")));
    a.preprocess.keep = direction_keep_from_string(pick(f_keep, keep, cfg, "keep", std::string("both")));
    if (cfg.contains("train")) a.train = cfg.at("train").get<TrainOptions>();
    if (f_rounds->count()) a.train.rounds = rounds;
    if (f_epochs->count()) a.train.epochs = epochs;
    a.train.seed = seed;
    return a;
  }

  int fold_count(const json& cfg) const { return pick(f_folds, folds, cfg, "folds", 5); }
  std::uint64_t split(const json& cfg) const { return pick(f_split, split_seed, cfg, "split_seed", std::uint64_t{1}); }
};

json attack_json(const AttackConfig& a) {
  return {{"features", to_string(a.features)}, {"model", to_string(a.model)}, {"keep", to_string(a.preprocess.keep)},
          {"train", a.train}};
}

// ---------------------------------------------------------------------------
// Subcommands. Each returns the resolved configuration for the run manifest.

struct GenerateCmd {
  int classes = 100, per_class = 15, epochs = 0, unmonitored = 0, per_unmonitored = 1;
  double noise = 1.0;
  CLI::Option *f_classes, *f_per, *f_noise, *f_epochs;

  void add(CLI::App* app) {
    f_classes = app->add_option("--classes", classes, "monitored command classes");
    f_per = app->add_option("--per-class", per_class, "traces per class");
    f_noise = app->add_option("--noise", noise, "noise level in [0, 1]");
    f_epochs = app->add_option("--epochs", epochs, "response variants drawn for time-sensitive commands");
    app->add_option("--unmonitored", unmonitored, "open world: number of unmonitored classes");
    app->add_option("--per-unmonitored", per_unmonitored, "open world: traces per unmonitored class");
  }

  json run(const Globals& g) const {
    const json cfg = g.section("generate");
    GenConfig gc = cfg.get<GenConfig>();
    if (f_classes->count()) gc.num_classes = classes;
    if (f_per->count()) gc.traces_per_class = per_class;
    if (f_noise->count()) gc.noise_level = noise;
    gc.seed = g.seed;
    const int ep = pick(f_epochs, epochs, cfg, "epochs", gc.time_epochs);
    const Dataset d = unmonitored > 0 ? generate_open_world(gc, ep, unmonitored, per_unmonitored) : generate_dataset(gc, ep);
    const auto path = fs::path(g.out) / "dataset.jsonl";
    write_dataset(d, path);
    std::cout << "wrote " << d.size() << " traces (" << d.num_classes << " classes) to " << path.string() << "\n";
    return {{"generator", gc}, {"epochs", ep}, {"unmonitored", unmonitored}, {"per_unmonitored", per_unmonitored}};
  }
};

struct StatsCmd {
  std::string data;
  double burst_gap = kDefaultBurstGapThresholdMs;

  void add(CLI::App* app) {
    app->add_option("--data", data, "dataset file")->required();
    app->add_option("--burst-gap", burst_gap, "burst/gap interarrival threshold in ms");
  }

  json run(const Globals& g) const {
    const auto d = read_dataset(data);
    const auto s = dataset_stats(d, burst_gap);
    const auto path = fs::path(g.out) / "stats.json";
    write_json(path, stats_to_json(s));
    std::cout << "summary statistics of " << d.size() << " traces written to " << path.string() << "\n";
    return {{"data", data}, {"burst_gap_ms", burst_gap}};
  }
};

struct PreprocessCmd {
  std::string data;
  int folds = 5;
  PreprocessFlags pre;
  CLI::Option* f_folds;

  void add(CLI::App* app) {
    app->add_option("--data", data, "dataset file")->required();
    f_folds = app->add_option("--folds", folds, "cross-validation folds");
    pre.add(app);
  }

  // Fold plan plus one scaler per fold, fitted on that fold's training role.
  json run(const Globals& g) const {
    const json cfg = g.section("preprocess");
    const auto p = pre.resolve(cfg);
    const int k = pick(f_folds, folds, cfg, "folds", 5);
    const auto d = read_dataset(data);
    const auto plan = split_folds(d, k, g.seed);
    auto scalers = json::array();
    for (int f = 0; f < k; ++f) {
      std::vector<Trace> train;
      for (auto i : plan.indices(f, Role::Train)) train.push_back(d.traces[i].trace);
      scalers.push_back(scaler_to_json(fit_scaler(train, p)));
    }
    write_json(fs::path(g.out) / "split.json", split_to_json(plan));
    write_json(fs::path(g.out) / "scalers.json", {{"preprocess", preprocess_json(p)}, {"folds", scalers}});
    std::cout << k << "-fold plan and scalers written to " << g.out << "\n";
    return {{"data", data}, {"folds", k}, {"preprocess", preprocess_json(p)}};
  }
};

// Trains and scores a classic attack under cross-validation. Out-of-fold
// probabilities are written in dataset order so they line up with the
// dataset for evaluate and ensemble.
struct AttackCmd {
  std::string data, test_data;
  AttackFlags af;

  void add(CLI::App* app) {
    app->add_option("--data", data, "training dataset")->required();
    app->add_option("--test-data", test_data, "index-aligned dataset to score instead (e.g. obfuscated copy)");
    af.add(app);
  }

  json run(const Globals& g) const {
    const json cfg = g.section("attack");
    const auto a = af.resolve(cfg, g.seed);
    const int k = af.fold_count(cfg);
    const auto train_src = read_dataset(data);
    const auto test_src = test_data.empty() ? train_src : read_dataset(test_data);
    if (test_src.num_classes != train_src.num_classes) throw ValidationError("datasets differ in class count");
    const auto plan = split_folds(train_src, k, af.split(cfg));

    ProbMatrix oof(train_src.size(), static_cast<std::size_t>(train_src.num_classes));
    std::vector<EvalReport> reports;
    std::vector<double> val;
    const fs::path out(g.out);
    for (int f = 0; f < k; ++f) {
      auto fo = run_fold(train_src, test_src, plan, f, a);
      for (std::size_t r = 0; r < fo.test_indices.size(); ++r)
        for (std::size_t c = 0; c < oof.cols; ++c) oof(fo.test_indices[r], c) = fo.test_probs(r, c);
      write_json(out / "models" / ("fold_" + std::to_string(f) + ".json"), model_to_json(fo.model));
      reports.push_back(fo.report);
      val.push_back(fo.validation_accuracy);
      std::cout << "fold " << f << ": test " << percent(fo.report.accuracy) << ", validation "
                << percent(fo.validation_accuracy) << "\n";
    }
    const auto merged = merge_folds(reports);
    double mean_val = 0;
    for (double v : val) mean_val += v / static_cast<double>(val.size());
    write_probabilities(out / "probs.csv", oof);
    auto report = report_to_json(merged);
    report["attack"] = a.name();
    report["validation_accuracy"] = mean_val;
    write_json(out / "report.json", report);
    std::cout << render_category_table({{a.name(), merged}});
    return {{"data", data}, {"test_data", test_data}, {"folds", k}, {"split_seed", af.split(cfg)}, {"attack", attack_json(a)}};
  }
};

struct DefendCmd {
  std::string data, stats, epsilons = "0.005,0.05,0.5", mechanism = "laplace";
  double sensitivity = 500;
  bool no_padding = false;
  CLI::Option *f_eps, *f_mech, *f_sens, *f_nopad;

  void add(CLI::App* app) {
    app->add_option("--data", data, "dataset file")->required();
    app->add_option("--stats", stats, "summary statistics (computed from --data when absent)");
    f_eps = app->add_option("--epsilon", epsilons, "comma-separated privacy budgets");
    f_mech = app->add_option("--mechanism", mechanism, "laplace or recursive");
    f_sens = app->add_option("--sensitivity", sensitivity, "sensitivity in bytes");
    f_nopad = app->add_flag("--no-adaptive-padding", no_padding, "disable dummy packets between real ones");
  }

  json run(const Globals& g) const {
    const json cfg = g.section("defense");
    const auto d = read_dataset(data);
    ObfuscationParams base;
    base.stats = stats.empty() ? dataset_stats(d) : stats_from_json(read_json(stats));
    base.noise_mechanism = noise_mechanism_from_string(pick(f_mech, mechanism, cfg, "mechanism", std::string("laplace")));
    base.sensitivity = pick(f_sens, sensitivity, cfg, "sensitivity", base.sensitivity);
    base.adaptive_padding = !pick(f_nopad, no_padding, cfg, "no_adaptive_padding", false);
    base.min_wire_size = cfg.value("min_wire_size", base.min_wire_size);
    base.max_wire_size = cfg.value("max_wire_size", base.max_wire_size);
    base.seed = g.seed;
    std::vector<double> eps;
    if (f_eps->count() || !cfg.contains("epsilon")) eps = parse_numbers(epsilons);
    else eps = cfg.at("epsilon").get<std::vector<double>>();
    if (eps.empty()) throw ValidationError("no epsilon given");

    const fs::path out(g.out);
    std::vector<std::pair<double, DefenseMetrics>> rows;
    auto summary = json::array();
    for (double e : eps) {
      ObfuscationParams p = base;
      p.epsilon = e;
      const auto obf = obfuscate_dataset(d, p);
      std::vector<DefenseMetrics> per;
      for (std::size_t i = 0; i < d.size(); ++i) per.push_back(defense_metrics(d.traces[i].trace, obf[i]));
      char tag_buf[32];
      std::snprintf(tag_buf, sizeof tag_buf, "eps_%g", e);
      const std::string tag = tag_buf;
      write_obfuscated(d, obf, out / ("obfuscated_" + tag + ".jsonl"),
                       {{"source", data}, {"epsilon", e}, {"seed", g.seed}, {"mechanism", to_string(p.noise_mechanism)}});
      write_metrics_csv(out / ("metrics_" + tag + ".csv"), per);
      rows.emplace_back(e, aggregate(per));
      auto m = metrics_to_json(rows.back().second);
      m["epsilon"] = e;
      summary.push_back(m);
    }
    write_json(out / "defense_summary.json", summary);
    std::cout << render_cost_table(rows);
    return {{"data", data},
            {"stats", stats},
            {"epsilon", eps},
            {"mechanism", to_string(base.noise_mechanism)},
            {"sensitivity", base.sensitivity},
            {"adaptive_padding", base.adaptive_padding},
            {"min_wire_size", base.min_wire_size},
            {"max_wire_size", base.max_wire_size}};
  }
};

// Scores a probability file against dataset labels (closed world, plus open
// world when the dataset has unmonitored traces). --plot draws accuracy
// against training-set size for one or more attacks.
struct EvaluateCmd {
  std::string data, probs, plot, attacks = "numeric+one_nn", sizes;
  double threshold = 0.5;
  int folds = 5;

  void add(CLI::App* app) {
    app->add_option("--data", data, "dataset file")->required();
    app->add_option("--probs", probs, "probability CSV, one row per trace in dataset order");
    app->add_option("--threshold", threshold, "open-world decision threshold");
    app->add_option("--plot", plot, "write an SVG of accuracy against traces per class");
    app->add_option("--attacks", attacks, "plot series, comma-separated features+model names");
    app->add_option("--sizes", sizes, "plot x values: traces per class, comma-separated");
    app->add_option("--folds", folds, "folds used for each plot point");
  }

  static Dataset first_per_class(const Dataset& d, int n) {
    Dataset out;
    out.num_classes = d.num_classes;
    std::map<int, int> seen;
    for (const auto& lt : d.traces)
      if (seen[lt.command_id]++ < n) out.traces.push_back(lt);
    return out;
  }

  json run(const Globals& g) const {
    if (probs.empty() && plot.empty()) throw ValidationError("evaluate needs --probs, --plot or both");
    const auto d = read_dataset(data);
    const fs::path out(g.out);
    json resolved = {{"data", data}, {"probs", probs}, {"threshold", threshold}};

    if (!probs.empty()) {
      const auto p = import_probabilities(probs, d.size(), static_cast<std::size_t>(d.num_classes));
      std::vector<CommandCategory> cats;
      for (const auto& lt : d.traces) cats.push_back(lt.category);
      auto r = closed_world_report(p, d.labels(), cats);
      bool open = false;
      std::vector<bool> class_mon(static_cast<std::size_t>(d.num_classes), false), row_mon;
      for (const auto& lt : d.traces) {
        open = open || !lt.monitored;
        if (lt.monitored) class_mon[static_cast<std::size_t>(lt.command_id)] = true;
        row_mon.push_back(lt.monitored);
      }
      if (open) r.openworld = open_world_report(monitored_scores(p, class_mon), row_mon, threshold);
      write_json(out / "evaluation.json", report_to_json(r));
      std::cout << "accuracy " << percent(r.accuracy) << "\n";
      if (r.openworld)
        std::cout << "open world at " << threshold << ": TPR " << percent(r.openworld->tpr) << ", FPR "
                  << percent(r.openworld->fpr) << "\n";
    }

    if (!plot.empty()) {
      auto xs = parse_numbers(sizes);
      if (xs.empty()) throw ValidationError("--plot needs --sizes");
      std::vector<PlotSeries> series;
      for (const auto& name : split_list(attacks)) {
        const auto plus = name.find('+');
        if (plus == std::string::npos) throw ValidationError("attack '" + name + "' is not features+model");
        AttackConfig a;
        a.features = feature_kind_from_string(name.substr(0, plus));
        a.model = model_kind_from_string(name.substr(plus + 1));
        a.train.seed = g.seed;
        PlotSeries s{a.name(), {}};
        for (double x : xs) {
          const auto sub = first_per_class(d, static_cast<int>(x));
          const auto r = run_closed_world(sub, split_folds(sub, folds, g.seed), a);
          s.points.emplace_back(x, r.accuracy);
          std::cout << a.name() << " with " << x << " traces per class: " << percent(r.accuracy) << "\n";
        }
        series.push_back(std::move(s));
      }
      auto f = open_out(plot);
      f << accuracy_plot_svg(series, "Accuracy against dataset size");
      if (!f) throw IoError("write failed for '" + plot + "'");
      resolved["plot"] = {{"path", plot}, {"attacks", attacks}, {"sizes", xs}, {"folds", folds}};
    }
    return resolved;
  }
};

struct ExportCmd {
  std::string data, scaler;
  PreprocessFlags pre;

  void add(CLI::App* app) {
    app->add_option("--data", data, "dataset file")->required();
    app->add_option("--scaler", scaler, "scaler JSON to apply (fitted on --data when absent)");
    pre.add(app);
  }

  json run(const Globals& g) const {
    const auto p = pre.resolve(g.section("preprocess"));
    const auto d = read_dataset(data);
    std::vector<Trace> traces;
    for (const auto& lt : d.traces) traces.push_back(lt.trace);
    const Scaler s = scaler.empty() ? fit_scaler(traces, p) : scaler_from_json(read_json(scaler));
    const fs::path out(g.out);
    export_tensors(d, p, s, out / "tensors.bin", out / "labels.bin");
    write_json(out / "scaler.json", scaler_to_json(s));
    std::cout << d.size() << " x " << p.length << " tensor written to " << (out / "tensors.bin").string() << "\n";
    return {{"data", data}, {"scaler", scaler_to_json(s)}, {"preprocess", preprocess_json(p)}};
  }
};

struct EnsembleCmd {
  std::string probs, val_acc, data;
  std::size_t rows = 0, classes = 0;

  void add(CLI::App* app) {
    app->add_option("--probs", probs, "comma-separated probability CSVs")->required();
    app->add_option("--val-acc", val_acc, "validation accuracy of each model, comma-separated")->required();
    app->add_option("--data", data, "dataset for labels and shape");
    app->add_option("--rows", rows, "expected rows when --data is absent");
    app->add_option("--classes", classes, "expected classes when --data is absent");
  }

  json run(const Globals& g) const {
    const auto files = split_list(probs);
    const auto acc = parse_numbers(val_acc);
    if (files.size() != acc.size()) throw ValidationError("one validation accuracy per probability file is required");
    std::optional<Dataset> d;
    std::size_t r = rows, c = classes;
    if (!data.empty()) {
      d = read_dataset(data);
      r = d->size();
      c = static_cast<std::size_t>(d->num_classes);
    }
    if (r == 0 || c == 0) throw ValidationError("ensemble needs --data or both --rows and --classes");
    std::vector<ProbMatrix> ms;
    for (const auto& f : files) ms.push_back(import_probabilities(f, r, c));
    const auto w = normalize_weights(acc);
    const auto e = ensemble_combine(ms, w);
    const fs::path out(g.out);
    write_probabilities(out / "ensemble_probs.csv", e.combined);
    json result = {{"weights", w.w}, {"predictions", e.predictions}};
    std::cout << "weights";
    for (double x : w.w) std::cout << ' ' << fixed(x, 4);
    std::cout << "\n";
    if (d) {
      std::vector<CommandCategory> cats;
      for (const auto& lt : d->traces) cats.push_back(lt.category);
      const auto rep = closed_world_report(e.combined, d->labels(), cats);
      result["report"] = report_to_json(rep);
      std::cout << "ensemble accuracy " << percent(rep.accuracy) << "\n";
    }
    write_json(out / "ensemble.json", result);
    return {{"probs", files}, {"validation_accuracies", acc}, {"data", data}};
  }
};

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Voice-command traffic fingerprinting and obfuscation toolkit"};
  app.require_subcommand(1);
  app.set_version_flag("--version", kVersion);
  Globals g;
  auto* seed_flag = app.add_option("--seed", g.seed, "random seed (default: config \"seed\", else 0)");
  app.add_option("--config", g.config_path, "JSON config with generate/preprocess/attack/defense sections");
  app.add_option("--out", g.out, "output directory")->capture_default_str();

  GenerateCmd generate;
  StatsCmd stats;
  PreprocessCmd preprocess;
  AttackCmd attack;
  DefendCmd defend;
  EvaluateCmd evaluate;
  ExportCmd export_cmd;
  EnsembleCmd ensemble;
  std::vector<std::pair<CLI::App*, std::function<json(const Globals&)>>> commands;
  auto reg = [&](const char* name, const char* help, auto& cmd) {
    auto* sub = app.add_subcommand(name, help);
    cmd.add(sub);
    commands.emplace_back(sub, [&cmd](const Globals& gl) { return cmd.run(gl); });
  };
  reg("generate", "synthesize a labelled trace dataset", generate);
  reg("stats", "summary statistics for adaptive padding", stats);
  reg("preprocess", "fold plan and per-fold scalers", preprocess);
  reg("attack", "cross-validated classic attack", attack);
  reg("defend", "obfuscate a dataset and report costs", defend);
  reg("evaluate", "score probabilities, optionally plot accuracy against dataset size", evaluate);
  reg("export-tensors", "write classifier inputs as a binary tensor", export_cmd);
  reg("ensemble", "weighted combination of probability files", ensemble);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }

  try {
    if (!g.config_path.empty()) {
      g.config = read_json(g.config_path);
      if (!g.config.is_object()) throw ValidationError("config must be a JSON object");
      if (!seed_flag->count() && g.config.contains("seed")) g.seed = g.config.at("seed").get<std::uint64_t>();
    }
    fs::create_directories(g.out);
    for (auto& [sub, run] : commands) {
      if (!sub->parsed()) continue;
      const json resolved = run(g);
      std::vector<std::string> args(argv, argv + argc);
      write_json(fs::path(g.out) / "run_manifest.json", {{"command", sub->get_name()},
                                                         {"argv", args},
                                                         {"seed", g.seed},
                                                         {"config_file", g.config_path},
                                                         {"config", g.config},
                                                         {"resolved", resolved},
                                                         {"version", kVersion}});
    }
  } catch (const ValidationError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const IoError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  } catch (const nlohmann::json::exception& e) {
    std::cerr << "error: bad config value: " << e.what() << "\n";
    return 2;
  } catch (const fs::filesystem_error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  }
  return 0;
}
