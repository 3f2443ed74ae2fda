#pragma once

#include <charconv>
#include <cstdint>
#include <fstream>
#include <functional>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "fgzsl/data.hpp"
#include "fgzsl/pipeline.hpp"

namespace fgzsl {

// Bad key, bad value or unreadable config file.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct RunConfig {
  TrainConfig train;
  SyntheticSpec data;
  std::string dataset;  // empty: the bundle's name
  std::string bundle = "bundle.gzb";
  std::string checkpoint = "model.ckpt";
  std::string report = "report.json";
  std::string loss_csv;      // empty: <checkpoint>.losses.csv
  std::string features_csv;  // empty: no dump
  std::string ablation_csv = "ablation.csv";
  std::string ablation_json = "ablation.json";
  std::string variants = "baseline,full";
  std::string seeds = "1,2,3";
  std::set<std::string> assigned;  // keys set by file or flag
};

namespace detail {

inline std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  return s.substr(b, s.find_last_not_of(" \t\r\n") - b + 1);
}

template <typename N>
N parse_number(const std::string& key, const std::string& text) {
  N v{};
  const char* end = text.data() + text.size();
  auto [p, ec] = std::from_chars(text.data(), end, v);
  if (ec != std::errc() || p != end || text.empty()) throw ConfigError("bad value '" + text + "' for key " + key);
  return v;
}

inline bool parse_bool(const std::string& key, const std::string& text) {
  if (text == "true" || text == "1" || text == "yes" || text == "on") return true;
  if (text == "false" || text == "0" || text == "no" || text == "off") return false;
  throw ConfigError("bad value '" + text + "' for key " + key + " (expected true/false)");
}

}  // namespace detail

inline std::vector<std::string> split_list(const std::string& text) {
  std::vector<std::string> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = detail::trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

inline std::vector<std::uint64_t> parse_seeds(const std::string& text) {
  std::vector<std::uint64_t> out;
  for (const auto& s : split_list(text)) out.push_back(detail::parse_number<std::uint64_t>("seeds", s));
  if (out.empty()) throw ConfigError("seeds: empty list");
  return out;
}

struct ConfigField {
  std::string key;
  std::string help;
  std::function<void(RunConfig&, const std::string&)> set;
  std::function<nlohmann::ordered_json(const RunConfig&)> get;
};

inline const std::vector<ConfigField>& config_fields() {
  using J = nlohmann::ordered_json;
  static const std::vector<ConfigField> fields = [] {
    std::vector<ConfigField> f;
    auto size_field = [&](std::string key, std::string help, auto member) {
      f.push_back({key, std::move(help),
                   [member, key](RunConfig& c, const std::string& v) { member(c) = detail::parse_number<std::size_t>(key, v); },
                   [member](const RunConfig& c) { return J(member(c)); }});
    };
    auto real_field = [&](std::string key, std::string help, auto member) {
      f.push_back({key, std::move(help),
                   [member, key](RunConfig& c, const std::string& v) { member(c) = detail::parse_number<double>(key, v); },
                   [member](const RunConfig& c) { return J(member(c)); }});
    };
    auto u64_field = [&](std::string key, std::string help, auto member) {
      f.push_back({key, std::move(help),
                   [member, key](RunConfig& c, const std::string& v) {
                     member(c) = detail::parse_number<std::uint64_t>(key, v);
                   },
                   [member](const RunConfig& c) { return J(member(c)); }});
    };
    auto bool_field = [&](std::string key, std::string help, auto member) {
      f.push_back({key, std::move(help),
                   [member, key](RunConfig& c, const std::string& v) { member(c) = detail::parse_bool(key, v); },
                   [member](const RunConfig& c) { return J(member(c)); }});
    };
    auto text_field = [&](std::string key, std::string help, auto member) {
      f.push_back({key, std::move(help), [member](RunConfig& c, const std::string& v) { member(c) = v; },
                   [member](const RunConfig& c) { return J(member(c)); }});
    };

    size_field("iterations", "stage-1 outer iterations (default 3000)", [](auto& c) -> auto& { return c.train.iterations; });
    size_field("batch_size", "stage-1 minibatch size (default 64)", [](auto& c) -> auto& { return c.train.batch_size; });
    size_field("n_critic", "critic steps per generator step (default 5)", [](auto& c) -> auto& { return c.train.n_critic; });
    real_field("lr", "Adam learning rate for E, G, D, FR (default 1e-4)", [](auto& c) -> auto& { return c.train.lr; });
    real_field("classifier_lr", "softmax classifier learning rate (default 1e-3)",
               [](auto& c) -> auto& { return c.train.classifier_lr; });
    size_field("classifier_epochs", "softmax classifier epochs (default 25)",
               [](auto& c) -> auto& { return c.train.classifier_epochs; });
    size_field("classifier_batch", "softmax classifier minibatch (default 64)",
               [](auto& c) -> auto& { return c.train.classifier_batch; });
    real_field("lambda_gp", "gradient penalty weight (default 10)", [](auto& c) -> auto& { return c.train.weights.lambda_gp; });
    real_field("lambda_samc", "SAMC loss weight (default 0.5)", [](auto& c) -> auto& { return c.train.weights.lambda_samc; });
    real_field("lambda_ra", "cycle loss weight (default 0.001, SUN 0.1)",
               [](auto& c) -> auto& { return c.train.weights.lambda_ra; });
    real_field("gamma", "SAMC balance (default 0.8, AWA 0.1)", [](auto& c) -> auto& { return c.train.weights.gamma; });
    real_field("delta", "SAMC margin (default 1)", [](auto& c) -> auto& { return c.train.weights.delta; });
    size_field("n_syn", "synthesized features per unseen class (default by dataset, else 200)",
               [](auto& c) -> auto& { return c.train.n_syn; });
    u64_field("seed", "master seed (default 1)", [](auto& c) -> auto& { return c.train.seed; });
    f.push_back({"h_choice", "FR activation used as h: h1|mu (default h1)",
                 [](RunConfig& c, const std::string& v) {
                   if (v == "h1") c.train.h_choice = HChoice::h1;
                   else if (v == "mu") c.train.h_choice = HChoice::mu;
                   else throw ConfigError("bad value '" + v + "' for key h_choice (expected h1|mu)");
                 },
                 [](const RunConfig& c) { return J(c.train.h_choice == HChoice::h1 ? "h1" : "mu"); }});
    f.push_back({"features", "classifier input: x|xh|xha (default xha)",
                 [](RunConfig& c, const std::string& v) {
                   if (v == "x") c.train.features = FeatureSet::x;
                   else if (v == "xh") c.train.features = FeatureSet::x_h;
                   else if (v == "xha") c.train.features = FeatureSet::x_h_ahat;
                   else throw ConfigError("bad value '" + v + "' for key features (expected x|xh|xha)");
                 },
                 [](const RunConfig& c) { return J(feature_suffix(c.train.features)); }});
    bool_field("train_fr", "train the FR module (default true)", [](auto& c) -> auto& { return c.train.train_fr; });
    bool_field("samc_on_synthetic", "also apply SAMC to synthesized features (default true)",
               [](auto& c) -> auto& { return c.train.samc_on_synthetic; });
    size_field("hidden", "E/G/D hidden width (default 4096)", [](auto& c) -> auto& { return c.train.hidden; });
    size_field("fr_hidden", "FR hidden width (default 4096)", [](auto& c) -> auto& { return c.train.fr_hidden; });
    size_field("latent_dim", "latent width, 0 = attribute width (default 0)",
               [](auto& c) -> auto& { return c.train.latent_dim; });
    real_field("slope", "LeakyReLU negative slope (default 0.02)", [](auto& c) -> auto& { return c.train.slope; });
    f.push_back({"precision", "scalar type: f32|f64 (default f32)",
                 [](RunConfig& c, const std::string& v) {
                   if (v == "f32") c.train.precision = Precision::f32;
                   else if (v == "f64") c.train.precision = Precision::f64;
                   else throw ConfigError("bad value '" + v + "' for key precision (expected f32|f64)");
                 },
                 [](const RunConfig& c) { return J(c.train.precision == Precision::f32 ? "f32" : "f64"); }});

    size_field("n_seen", "gen-data: seen classes (default 8)", [](auto& c) -> auto& { return c.data.n_seen; });
    size_field("n_unseen", "gen-data: unseen classes (default 4)", [](auto& c) -> auto& { return c.data.n_unseen; });
    size_field("feat_dim", "gen-data: feature width (default 64)", [](auto& c) -> auto& { return c.data.feat_dim; });
    size_field("attr_dim", "gen-data: attribute width (default 16)", [](auto& c) -> auto& { return c.data.attr_dim; });
    size_field("samples_per_class", "gen-data: samples per class (default 60)",
               [](auto& c) -> auto& { return c.data.samples_per_class; });
    real_field("noise", "gen-data: feature noise sigma (default 0.1)", [](auto& c) -> auto& { return c.data.noise; });
    u64_field("mixing_seed", "gen-data: seed of the attribute-to-feature map (default 0)",
              [](auto& c) -> auto& { return c.data.mixing_seed; });

    text_field("dataset", "dataset name for per-dataset defaults (default: bundle name)",
               [](auto& c) -> auto& { return c.dataset; });
    text_field("bundle", "GZB1 bundle path (default bundle.gzb)", [](auto& c) -> auto& { return c.bundle; });
    text_field("checkpoint", "checkpoint path (default model.ckpt)", [](auto& c) -> auto& { return c.checkpoint; });
    text_field("report", "eval report JSON path (default report.json)", [](auto& c) -> auto& { return c.report; });
    text_field("loss_csv", "loss curve CSV (default <checkpoint>.losses.csv)", [](auto& c) -> auto& { return c.loss_csv; });
    text_field("features_csv", "eval: dump refined test features to this CSV",
               [](auto& c) -> auto& { return c.features_csv; });
    text_field("ablation_csv", "ablation table CSV (default ablation.csv)", [](auto& c) -> auto& { return c.ablation_csv; });
    text_field("ablation_json", "ablation table JSON (default ablation.json)",
               [](auto& c) -> auto& { return c.ablation_json; });
    text_field("variants", "ablation variants, comma separated (default baseline,full)",
               [](auto& c) -> auto& { return c.variants; });
    text_field("seeds", "ablation seeds, comma separated (default 1,2,3)", [](auto& c) -> auto& { return c.seeds; });
    return f;
  }();
  return fields;
}

inline const ConfigField& config_field(const std::string& key) {
  for (const auto& f : config_fields())
    if (f.key == key) return f;
  throw ConfigError("unknown config key '" + key + "'");
}

inline void set_config_value(RunConfig& c, const std::string& key, const std::string& value) {
  config_field(key).set(c, value);
  c.assigned.insert(key);
}

// key=value lines; '#' starts a comment.
inline void apply_config_text(RunConfig& c, const std::string& text, const std::string& origin = "config") {
  std::istringstream in(text);
  std::string line;
  for (std::size_t n = 1; std::getline(in, line); ++n) {
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = detail::trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError(origin + ":" + std::to_string(n) + ": expected key=value");
    try {
      set_config_value(c, detail::trim(line.substr(0, eq)), detail::trim(line.substr(eq + 1)));
    } catch (const ConfigError& e) {
      throw ConfigError(origin + ":" + std::to_string(n) + ": " + e.what());
    }
  }
}

inline void apply_config_file(RunConfig& c, const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config file " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  apply_config_text(c, ss.str(), path);
}

// Fills the per-dataset defaults the user left unset.
inline void resolve_dataset_defaults(RunConfig& c, const std::string& bundle_name) {
  if (c.dataset.empty()) c.dataset = bundle_name;
  const LossWeights w = default_weights(c.dataset);
  if (!c.assigned.count("gamma")) c.train.weights.gamma = w.gamma;
  if (!c.assigned.count("lambda_ra")) c.train.weights.lambda_ra = w.lambda_ra;
  if (!c.assigned.count("n_syn") || c.train.n_syn == 0) c.train.n_syn = default_n_syn(c.dataset);
}

inline nlohmann::ordered_json config_echo(const RunConfig& c) {
  nlohmann::ordered_json j;
  for (const auto& f : config_fields()) j[f.key] = f.get(c);
  return j;
}

inline std::string config_text(const RunConfig& c) {
  std::string out;
  for (const auto& f : config_fields()) {
    const auto v = f.get(c);
    out += f.key + " = " + (v.is_string() ? v.get<std::string>() : v.dump()) + "\n";
  }
  return out;
}

}  // namespace fgzsl
