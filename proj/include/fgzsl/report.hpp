#pragma once

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>

#include <json.hpp>

#include "fgzsl/binary_io.hpp"
#include "fgzsl/config.hpp"
#include "fgzsl/pipeline.hpp"

namespace fgzsl {

inline void write_text_file(const std::filesystem::path& path, const std::string& text) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw FormatError(FormatErrorCode::io, "cannot write " + path.string());
  out << text;
  if (!out) throw FormatError(FormatErrorCode::io, "write failed for " + path.string());
}

// %.17g keeps doubles exact; the CSVs are meant to be re-read.
inline std::string fmt_real(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline double percent(double fraction) { return 100.0 * fraction; }

inline nlohmann::ordered_json report_json(const GzslReport& r, const DatasetBundle& b, const RunConfig& cfg,
                                          const std::string& predictor) {
  nlohmann::ordered_json j;
  j["dataset"] = cfg.dataset;
  j["seed"] = r.seed;
  j["predictor"] = predictor;
  j["S"] = percent(r.S);
  j["U"] = percent(r.U);
  j["H"] = percent(r.H);
  nlohmann::ordered_json pc = nlohmann::ordered_json::object();
  for (const auto& [c, acc] : r.per_class) pc[std::to_string(c)] = percent(acc);
  j["per_class"] = pc;
  j["seen_classes"] = b.seen_classes;
  j["unseen_classes"] = b.unseen_classes;
  j["config"] = config_echo(cfg);
  return j;
}

inline std::string loss_csv(const std::vector<LossRecord>& curve) {
  std::string out = "iteration,loss_D,loss_EG,loss_FR,samc,cyc,kl,recon\n";
  for (const auto& r : curve) {
    out += std::to_string(r.iteration);
    for (double v : {r.loss_D, r.loss_EG, r.loss_FR, r.samc, r.cyc, r.kl, r.recon}) out += "," + fmt_real(v);
    out += "\n";
  }
  return out;
}

// One row per test sample: split, label, refined feature values.
template <typename T>
std::string refined_features_csv(const FreeModel<T>& m, const DatasetBundle& b, const TrainConfig& cfg) {
  std::string out;
  bool header = false;
  auto dump = [&](const char* split, const IndexList& idx) {
    const Tensor<T> x = refine_features(m, b.rows(idx).template cast<T>(), cfg.h_choice, cfg.features);
    if (!header) {
      out += "split,label";
      for (std::size_t c = 0; c < x.cols(); ++c) out += ",f" + std::to_string(c);
      out += "\n";
      header = true;
    }
    for (std::size_t r = 0; r < x.rows(); ++r) {
      out += std::string(split) + "," + std::to_string(b.labels[idx[r]]);
      for (std::size_t c = 0; c < x.cols(); ++c) out += "," + fmt_real(static_cast<double>(x(r, c)));
      out += "\n";
    }
  };
  dump("test_seen", b.test_seen_idx);
  dump("test_unseen", b.test_unseen_idx);
  return out;
}

inline std::string ablation_csv(const AblationTable& t) {
  std::string out = "kind,variant,seed,S,U,H,delta_H\n";
  for (const auto& r : t.rows) {
    out += "run," + r.variant + "," + std::to_string(r.seed) + "," + fmt_real(percent(r.report.S)) + "," +
           fmt_real(percent(r.report.U)) + "," + fmt_real(percent(r.report.H)) + ",\n";
  }
  for (const auto& s : t.summary) {
    out += "summary," + s.variant + ",mean," + fmt_real(percent(s.S)) + "," + fmt_real(percent(s.U)) + "," +
           fmt_real(percent(s.H)) + "," + fmt_real(percent(s.delta_H)) + "\n";
  }
  return out;
}

inline nlohmann::ordered_json ablation_json(const AblationTable& t, const RunConfig& cfg) {
  nlohmann::ordered_json j;
  j["reference"] = t.reference;
  j["rows"] = nlohmann::ordered_json::array();
  for (const auto& r : t.rows) {
    j["rows"].push_back({{"variant", r.variant},
                         {"seed", r.seed},
                         {"S", percent(r.report.S)},
                         {"U", percent(r.report.U)},
                         {"H", percent(r.report.H)}});
  }
  j["summary"] = nlohmann::ordered_json::array();
  for (const auto& s : t.summary) {
    j["summary"].push_back({{"variant", s.variant},
                            {"S", percent(s.S)},
                            {"U", percent(s.U)},
                            {"H", percent(s.H)},
                            {"delta_H", percent(s.delta_H)}});
  }
  j["config"] = config_echo(cfg);
  return j;
}

}  // namespace fgzsl
