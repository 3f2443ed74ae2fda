#pragma once

#include <exception>
#include <filesystem>
#include <iomanip>
#include <limits>
#include <memory>
#include <ostream>
#include <string>
#include <utility>
#include <vector>

#include <CLI11.hpp>

#include "fgzsl/checkpoint.hpp"
#include "fgzsl/config.hpp"
#include "fgzsl/data.hpp"
#include "fgzsl/pipeline.hpp"
#include "fgzsl/report.hpp"

namespace fgzsl {

enum ExitCode : int { kExitOk = 0, kExitUsage = 1, kExitData = 2, kExitNumeric = 3 };

struct CliStreams {
  std::ostream& out;
  std::ostream& err;
};

inline std::string default_loss_csv(const RunConfig& c) {
  return c.loss_csv.empty() ? c.checkpoint + ".losses.csv" : c.loss_csv;
}

// Eval never draws stage-1 batches, so the batch bound applies to training only.
inline DatasetBundle load_for_run(RunConfig& c, bool trains_stage1 = true) {
  DatasetBundle b = load_bundle(c.bundle);
  resolve_dataset_defaults(c, b.name);
  try {
    c.train.validate(trains_stage1 ? b.train_idx.size() : std::numeric_limits<std::size_t>::max());
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
  return b;
}

inline void cmd_gen_data(const RunConfig& c, CliStreams io) {
  try {
    c.data.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
  DatasetBundle b = generate_synthetic_bundle(c.data, c.train.seed);
  const std::filesystem::path path = c.bundle;
  b.name = path.stem().string();
  save_bundle(b, path);
  io.out << "wrote " << path.string() << ": " << b.n_samples() << " samples, " << b.seen_classes.size() << " seen / "
         << b.unseen_classes.size() << " unseen classes, feat_dim " << b.feat_dim() << ", attr_dim " << b.attr_dim()
         << ", train " << b.train_idx.size() << ", test_seen " << b.test_seen_idx.size() << ", test_unseen "
         << b.test_unseen_idx.size() << "\n";
}

template <typename T>
void cmd_train_as(RunConfig& c, CliStreams io) {
  const DatasetBundle b = load_for_run(c);
  const auto res = stage1_train<T>(b, c.train);
  save_checkpoint(res.model, c.checkpoint);
  write_text_file(default_loss_csv(c), loss_csv(res.curve));
  nlohmann::ordered_json j;
  j["dataset"] = c.dataset;
  j["seed"] = c.train.seed;
  j["iterations"] = res.curve.size();
  if (!res.curve.empty()) {
    const auto& l = res.curve.back();
    j["final"] = {{"loss_D", l.loss_D}, {"loss_EG", l.loss_EG}, {"loss_FR", l.loss_FR}, {"samc", l.samc},
                  {"cyc", l.cyc},       {"kl", l.kl},           {"recon", l.recon}};
  }
  j["config"] = config_echo(c);
  write_text_file(c.checkpoint + ".json", j.dump(2) + "\n");
  io.out << "trained " << res.curve.size() << " iterations on " << c.dataset << "; checkpoint " << c.checkpoint
         << ", losses " << default_loss_csv(c) << "\n";
}

template <typename T>
void check_model_fits(const FreeModel<T>& m, const DatasetBundle& b) {
  auto mismatch = [](const char* what, std::size_t model, std::size_t bundle) {
    return FormatError(FormatErrorCode::invariant_violation, std::string("checkpoint/bundle mismatch: ") + what +
                                                                 " is " + std::to_string(model) + " in the checkpoint, " +
                                                                 std::to_string(bundle) + " in the bundle");
  };
  if (m.dims.feat_dim != b.feat_dim()) throw mismatch("feat_dim", m.dims.feat_dim, b.feat_dim());
  if (m.dims.attr_dim != b.attr_dim()) throw mismatch("attr_dim", m.dims.attr_dim, b.attr_dim());
  if (m.dims.n_classes != b.n_classes()) throw mismatch("n_classes", m.dims.n_classes, b.n_classes());
}

template <typename T>
void cmd_eval_as(RunConfig& c, bool always_seen, CliStreams io) {
  const DatasetBundle b = load_for_run(c, false);
  FreeModel<T> m = load_checkpoint<T>(c.checkpoint);
  check_model_fits(m, b);
  c.train.hidden = m.dims.hidden;
  c.train.fr_hidden = m.dims.fr_hidden;
  c.train.latent_dim = m.dims.latent_dim;
  c.train.slope = m.dims.slope;

  GzslReport report;
  if (always_seen) {
    report = evaluate_predictor<T>(b, constant_predictor<T>(b.seen_classes.front()), c.train.seed);
  } else {
    report = evaluate_model<T>(Stage1Result<T>{m, {}}, b, c.train).report;
  }
  write_text_file(c.report, report_json(report, b, c, always_seen ? "always-seen" : "softmax").dump(2) + "\n");
  if (!c.features_csv.empty()) write_text_file(c.features_csv, refined_features_csv(m, b, c.train));
  io.out << std::fixed << std::setprecision(2) << "S=" << percent(report.S) << " U=" << percent(report.U)
         << " H=" << percent(report.H) << "  (" << c.report << ")\n";
}

template <typename T>
void cmd_ablate_as(RunConfig& c, CliStreams io) {
  const auto variants = split_list(c.variants);
  const auto seeds = parse_seeds(c.seeds);
  if (variants.empty()) throw ConfigError("variants: empty list");
  for (const auto& v : variants) {
    try {
      parse_variant(v);
    } catch (const std::invalid_argument& e) {
      throw ConfigError(e.what());
    }
  }
  const DatasetBundle b = load_for_run(c);
  const AblationTable t = ablate<T>(b, c.train, variants, seeds);
  write_text_file(c.ablation_csv, ablation_csv(t));
  write_text_file(c.ablation_json, ablation_json(t, c).dump(2) + "\n");
  io.out << std::fixed << std::setprecision(2);
  for (const auto& r : t.rows) {
    io.out << std::left << std::setw(14) << r.variant << " seed " << r.seed << "  S=" << percent(r.report.S)
           << " U=" << percent(r.report.U) << " H=" << percent(r.report.H) << "\n";
  }
  for (const auto& s : t.summary) {
    io.out << std::left << std::setw(14) << s.variant << " mean    S=" << percent(s.S) << " U=" << percent(s.U)
           << " H=" << percent(s.H) << " dH=" << percent(s.delta_H) << "\n";
  }
}

template <template <typename> class Cmd, typename... Args>
void by_precision(RunConfig& c, Args&&... args) {
  if (c.train.precision == Precision::f64) Cmd<double>::run(c, std::forward<Args>(args)...);
  else Cmd<float>::run(c, std::forward<Args>(args)...);
}

template <typename T>
struct TrainCmd {
  static void run(RunConfig& c, CliStreams io) { cmd_train_as<T>(c, io); }
};
template <typename T>
struct EvalCmd {
  static void run(RunConfig& c, bool always_seen, CliStreams io) { cmd_eval_as<T>(c, always_seen, io); }
};
template <typename T>
struct AblateCmd {
  static void run(RunConfig& c, CliStreams io) { cmd_ablate_as<T>(c, io); }
};

inline std::string flag_name(const std::string& key) {
  std::string s = "--" + key;
  for (auto& ch : s)
    if (ch == '_') ch = '-';
  return s;
}

inline int run_cli(int argc, const char* const* argv, CliStreams io) {
  CLI::App app{"Feature-refining generative zero-shot learning: data, training, evaluation and ablation."};
  app.require_subcommand(1);
  app.set_help_all_flag("--help-all", "List every subcommand with its options");

  struct Sub {
    CLI::App* app;
    std::string config_path;
    std::vector<std::pair<std::string, std::string>> overrides;
  };
  std::vector<std::unique_ptr<Sub>> subs;
  bool always_seen = false;
  bool print_config = false;
  auto add_sub = [&](const char* name, const char* desc) {
    auto s = std::make_unique<Sub>();
    s->app = app.add_subcommand(name, desc);
    s->app->add_option("--config", s->config_path, "key=value config file; flags override it");
    s->app->add_flag("--print-config", print_config, "print the merged config before running");
    for (const auto& f : config_fields()) {
      std::string names = flag_name(f.key);
      if (f.key == "n_seen") names += ",--seen";
      if (f.key == "n_unseen") names += ",--unseen";
      Sub* raw = s.get();
      const std::string key = f.key;
      s->app->add_option_function<std::string>(
          names, [raw, key](const std::string& v) { raw->overrides.emplace_back(key, v); }, f.help)
          ->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);
    }
    subs.push_back(std::move(s));
    return subs.back().get();
  };
  Sub* gen = add_sub("gen-data", "write a synthetic GZB1 bundle");
  Sub* train = add_sub("train", "stage-1 training; writes a checkpoint and the loss curves");
  Sub* eval = add_sub("eval", "synthesize, train the classifier and report S/U/H");
  Sub* abl = add_sub("ablate", "run variants over seeds and write a comparison table");
  eval->app->add_flag("--always-seen", always_seen, "score a classifier that always predicts the first seen class");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, io.out, io.err);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    Sub* active = nullptr;
    for (auto& s : subs)
      if (s->app->parsed()) active = s.get();
    RunConfig c;
    if (!active->config_path.empty()) apply_config_file(c, active->config_path);
    for (const auto& [k, v] : active->overrides) set_config_value(c, k, v);
    if (print_config) io.out << config_text(c);

    if (active == gen) cmd_gen_data(c, io);
    else if (active == train) by_precision<TrainCmd>(c, io);
    else if (active == eval) by_precision<EvalCmd>(c, always_seen, io);
    else if (active == abl) by_precision<AblateCmd>(c, io);
    return kExitOk;
  } catch (const ConfigError& e) {
    io.err << "fgzsl: usage error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const FormatError& e) {
    io.err << "fgzsl: data error: " << e.what() << "\n";
    return kExitData;
  } catch (const NumericError& e) {
    io.err << "fgzsl: numeric failure: " << e.what() << "\n";
    return kExitNumeric;
  } catch (const std::exception& e) {
    io.err << "fgzsl: data error: " << e.what() << "\n";
    return kExitData;
  }
}

}  // namespace fgzsl
