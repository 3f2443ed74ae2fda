#pragma once

#include <algorithm>
#include <array>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <memory>
#include <numeric>
#include <set>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "fgzsl/binary_io.hpp"
#include "fgzsl/rng.hpp"
#include "fgzsl/tensor.hpp"

namespace fgzsl {

using ClassId = std::uint32_t;
using IndexList = std::vector<std::uint32_t>;

enum class Split { train = 0, test_seen = 1, test_unseen = 2 };

// Counts feature-row reads per split. Installed on a bundle to verify that
// training code never touches held-out unseen features.
class AccessAudit {
 public:
  AccessAudit(std::size_t n_samples, const IndexList& train, const IndexList& test_seen, const IndexList& test_unseen)
      : split_of_(n_samples, kNone) {
    auto mark = [&](const IndexList& idx, std::uint8_t tag) {
      for (auto i : idx)
        if (i < split_of_.size()) split_of_[i] = tag;
    };
    mark(train, 0);
    mark(test_seen, 1);
    mark(test_unseen, 2);
  }

  void record(std::uint32_t index) {
    const std::uint8_t s = index < split_of_.size() ? split_of_[index] : kNone;
    counts_[s == kNone ? 3 : s].fetch_add(1, std::memory_order_relaxed);
  }

  std::size_t reads(Split s) const { return counts_[static_cast<std::size_t>(s)].load(); }
  std::size_t unassigned_reads() const { return counts_[3].load(); }
  void reset() {
    for (auto& c : counts_) c.store(0);
  }

 private:
  static constexpr std::uint8_t kNone = 0xff;
  std::vector<std::uint8_t> split_of_;
  std::array<std::atomic<std::size_t>, 4> counts_{};
};

struct DatasetBundle {
  std::string name;
  Tensor<float> features;    // [M_total x feat_dim]
  std::vector<ClassId> labels;
  Tensor<float> attributes;  // [n_classes x attr_dim], row j describes class j
  std::vector<ClassId> seen_classes;
  std::vector<ClassId> unseen_classes;
  IndexList train_idx;
  IndexList test_seen_idx;
  IndexList test_unseen_idx;
  std::shared_ptr<AccessAudit> audit;

  std::size_t n_samples() const { return labels.size(); }
  std::size_t feat_dim() const { return features.cols(); }
  std::size_t attr_dim() const { return attributes.cols(); }
  std::size_t n_classes() const { return attributes.rows(); }

  const IndexList& indices(Split s) const {
    switch (s) {
      case Split::train: return train_idx;
      case Split::test_seen: return test_seen_idx;
      case Split::test_unseen: return test_unseen_idx;
    }
    return train_idx;
  }

  // Feature rows for `idx`, in order. Every feature access goes through here.
  Tensor<float> rows(std::span<const std::uint32_t> idx) const {
    const std::size_t d = feat_dim();
    Tensor<float> out = Tensor<float>::matrix(idx.size(), d);
    for (std::size_t r = 0; r < idx.size(); ++r) {
      if (audit) audit->record(idx[r]);
      std::copy_n(features.data() + static_cast<std::size_t>(idx[r]) * d, d, out.data() + r * d);
    }
    return out;
  }

  std::shared_ptr<AccessAudit> install_audit() {
    audit = std::make_shared<AccessAudit>(n_samples(), train_idx, test_seen_idx, test_unseen_idx);
    return audit;
  }

  bool is_seen(ClassId c) const { return std::find(seen_classes.begin(), seen_classes.end(), c) != seen_classes.end(); }
  bool is_unseen(ClassId c) const {
    return std::find(unseen_classes.begin(), unseen_classes.end(), c) != unseen_classes.end();
  }

  // Structural equality of the stored data; name and audit are not part of it.
  friend bool operator==(const DatasetBundle& a, const DatasetBundle& b) {
    return a.features == b.features && a.labels == b.labels && a.attributes == b.attributes &&
           a.seen_classes == b.seen_classes && a.unseen_classes == b.unseen_classes && a.train_idx == b.train_idx &&
           a.test_seen_idx == b.test_seen_idx && a.test_unseen_idx == b.test_unseen_idx;
  }
};

struct Violation {
  std::string invariant;
  std::string detail;
};

inline std::string describe(const std::vector<Violation>& vs) {
  std::string s;
  for (const auto& v : vs) s += (s.empty() ? "" : "; ") + v.invariant + ": " + v.detail;
  return s;
}

// Checks every bundle invariant; reports, never throws.
inline std::vector<Violation> validate_bundle(const DatasetBundle& b) {
  std::vector<Violation> out;
  const std::size_t n_classes = b.attributes.rows();
  const std::size_t m = b.labels.size();

  if (b.features.rows() != m) {
    out.push_back({"feature-rows", std::to_string(b.features.rows()) + " feature rows for " + std::to_string(m) + " labels"});
  }
  if (!check_finite(b.features)) out.push_back({"finite-features", "features contain NaN or Inf"});
  if (!check_finite(b.attributes)) out.push_back({"finite-attributes", "attributes contain NaN or Inf"});

  auto check_class_list = [&](const std::vector<ClassId>& ids, const char* which) {
    std::set<ClassId> seen_ids;
    for (ClassId c : ids) {
      if (c >= n_classes) out.push_back({"attribute-row", std::string(which) + " class " + std::to_string(c) + " has no attribute row"});
      if (!seen_ids.insert(c).second) out.push_back({"unique-classes", std::string(which) + " class " + std::to_string(c) + " listed twice"});
    }
  };
  check_class_list(b.seen_classes, "seen");
  check_class_list(b.unseen_classes, "unseen");
  for (ClassId c : b.seen_classes) {
    if (std::find(b.unseen_classes.begin(), b.unseen_classes.end(), c) != b.unseen_classes.end()) {
      out.push_back({"seen-unseen-disjoint", "class " + std::to_string(c) + " is both seen and unseen"});
    }
  }
  for (std::size_t i = 0; i < m; ++i) {
    if (b.labels[i] >= n_classes) {
      out.push_back({"attribute-row", "sample " + std::to_string(i) + " label " + std::to_string(b.labels[i]) + " has no attribute row"});
    }
  }

  std::vector<std::uint8_t> owner(m, 0);
  auto check_index_list = [&](const IndexList& idx, std::uint8_t tag, const char* which, bool want_seen) {
    for (auto i : idx) {
      if (i >= m) {
        out.push_back({"index-bounds", std::string(which) + " index " + std::to_string(i) + " >= " + std::to_string(m)});
        continue;
      }
      if (owner[i] != 0) {
        out.push_back({"disjoint-splits", std::string(which) + " index " + std::to_string(i) + " already used by another split"});
      }
      owner[i] = tag;
      const ClassId c = b.labels[i];
      if (want_seen && !b.is_seen(c)) {
        out.push_back({"split-classes", std::string(which) + " index " + std::to_string(i) + " has non-seen label " + std::to_string(c)});
      }
      if (!want_seen && !b.is_unseen(c)) {
        out.push_back({"split-classes", std::string(which) + " index " + std::to_string(i) + " has non-unseen label " + std::to_string(c)});
      }
    }
  };
  check_index_list(b.train_idx, 1, "train", true);
  check_index_list(b.test_seen_idx, 2, "test_seen", true);
  check_index_list(b.test_unseen_idx, 3, "test_unseen", false);
  return out;
}

struct SyntheticSpec {
  std::size_t n_seen = 8;
  std::size_t n_unseen = 4;
  std::size_t feat_dim = 64;
  std::size_t attr_dim = 16;
  std::size_t samples_per_class = 60;
  double noise = 0.1;
  std::uint64_t mixing_seed = 0;

  void validate() const {
    if (n_seen < 2 || n_unseen == 0 || feat_dim == 0 || attr_dim == 0 || samples_per_class < 2) {
      throw std::invalid_argument("SyntheticSpec: class counts, dims and samples per class must be positive");
    }
    if (attr_dim > feat_dim) throw std::invalid_argument("SyntheticSpec: attr_dim must not exceed feat_dim");
    if (!(noise >= 0.0)) throw std::invalid_argument("SyntheticSpec: noise must be >= 0");
  }
};

// Class attributes uniform in [0,1]^attr_dim, a fixed random linear map
// W [feat_dim x attr_dim] with N(0, 1/attr_dim) entries, samples x = W a_c + noise * eps.
// Classes 0..n_seen-1 are seen, the rest unseen. Per seen class, 70% of the
// samples (after a seeded shuffle) train, the rest are seen test samples.
inline DatasetBundle generate_synthetic_bundle(const SyntheticSpec& spec, std::uint64_t seed) {
  spec.validate();
  const std::size_t n_classes = spec.n_seen + spec.n_unseen;
  const std::size_t per = spec.samples_per_class;

  DatasetBundle b;
  b.name = "synthetic";
  Rng attr_rng(seed, "data.attributes");
  b.attributes = attr_rng.uniform_matrix<float>(n_classes, spec.attr_dim);

  Rng mix_rng(spec.mixing_seed, "data.mixing");
  const auto mixing = mix_rng.normal_matrix<double>(spec.feat_dim, spec.attr_dim, 1.0 / std::sqrt(double(spec.attr_dim)));

  Rng noise_rng(seed, "data.noise");
  b.features = Tensor<float>::matrix(n_classes * per, spec.feat_dim);
  for (std::size_t c = 0; c < n_classes; ++c) {
    std::vector<double> mean(spec.feat_dim, 0.0);
    for (std::size_t f = 0; f < spec.feat_dim; ++f)
      for (std::size_t a = 0; a < spec.attr_dim; ++a) mean[f] += mixing(f, a) * b.attributes(c, a);
    for (std::size_t s = 0; s < per; ++s) {
      const std::size_t row = c * per + s;
      for (std::size_t f = 0; f < spec.feat_dim; ++f) {
        const double eps = spec.noise > 0.0 ? noise_rng.normal() : 0.0;
        b.features(row, f) = static_cast<float>(mean[f] + spec.noise * eps);
      }
      b.labels.push_back(static_cast<ClassId>(c));
    }
  }

  Rng split_rng(seed, "data.split");
  const std::size_t n_train = static_cast<std::size_t>(std::lround(0.7 * static_cast<double>(per)));
  for (std::size_t c = 0; c < n_classes; ++c) {
    IndexList rows(per);
    std::iota(rows.begin(), rows.end(), static_cast<std::uint32_t>(c * per));
    if (c < spec.n_seen) {
      b.seen_classes.push_back(static_cast<ClassId>(c));
      std::shuffle(rows.begin(), rows.end(), split_rng.engine());
      b.train_idx.insert(b.train_idx.end(), rows.begin(), rows.begin() + static_cast<std::ptrdiff_t>(n_train));
      b.test_seen_idx.insert(b.test_seen_idx.end(), rows.begin() + static_cast<std::ptrdiff_t>(n_train), rows.end());
    } else {
      b.unseen_classes.push_back(static_cast<ClassId>(c));
      b.test_unseen_idx.insert(b.test_unseen_idx.end(), rows.begin(), rows.end());
    }
  }
  return b;
}

// ---- GZB1 container ---------------------------------------------------------

inline std::vector<char> encode_bundle(const DatasetBundle& b) {
  ByteWriter w;
  write_container_preamble(w);
  for (std::size_t v : {b.n_samples(), b.feat_dim(), b.n_classes(), b.attr_dim(), b.seen_classes.size(),
                        b.unseen_classes.size(), b.train_idx.size(), b.test_seen_idx.size(), b.test_unseen_idx.size()}) {
    w.u32(static_cast<std::uint32_t>(v));
  }
  for (auto c : b.seen_classes) w.u32(c);
  for (auto c : b.unseen_classes) w.u32(c);
  for (float v : b.attributes.values()) w.f32(v);
  for (auto l : b.labels) w.u32(l);
  for (float v : b.features.values()) w.f32(v);
  for (const IndexList* idx : {&b.train_idx, &b.test_seen_idx, &b.test_unseen_idx})
    for (auto i : *idx) w.u32(i);
  return w.bytes();
}

inline DatasetBundle decode_bundle(std::vector<char> bytes, std::string name = "bundle") {
  ByteReader r(std::move(bytes));
  read_container_preamble(r);
  const std::uint64_t m = r.u32(), feat_dim = r.u32(), n_classes = r.u32(), attr_dim = r.u32();
  const std::uint64_t n_seen = r.u32(), n_unseen = r.u32();
  const std::uint64_t n_train = r.u32(), n_test_seen = r.u32(), n_test_unseen = r.u32();

  DatasetBundle b;
  b.name = std::move(name);
  b.seen_classes = r.u32_array(n_seen, "seen ids");
  b.unseen_classes = r.u32_array(n_unseen, "unseen ids");
  r.expect_available(n_classes, attr_dim * 4, "attributes");
  b.attributes = Tensor<float>::matrix(n_classes, attr_dim, r.f32_array(n_classes * attr_dim, "attributes"));
  b.labels = r.u32_array(m, "labels");
  r.expect_available(m, feat_dim * 4, "features");
  b.features = Tensor<float>::matrix(m, feat_dim, r.f32_array(m * feat_dim, "features"));
  b.train_idx = r.u32_array(n_train, "train indices");
  b.test_seen_idx = r.u32_array(n_test_seen, "test_seen indices");
  b.test_unseen_idx = r.u32_array(n_test_unseen, "test_unseen indices");
  if (r.remaining() != 0) {
    throw FormatError(FormatErrorCode::trailing_bytes, std::to_string(r.remaining()) + " bytes after the last section");
  }
  if (auto vs = validate_bundle(b); !vs.empty()) throw FormatError(FormatErrorCode::invariant_violation, describe(vs));
  return b;
}

inline void save_bundle(const DatasetBundle& b, const std::filesystem::path& path) {
  if (auto vs = validate_bundle(b); !vs.empty()) throw FormatError(FormatErrorCode::invariant_violation, describe(vs));
  ByteWriter w;
  const auto bytes = encode_bundle(b);
  w.raw(std::string_view(bytes.data(), bytes.size()));
  w.write_file(path);
}

// The name is not stored in the container; it is taken from the file stem.
inline DatasetBundle load_bundle(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError(FormatErrorCode::io, "cannot open " + path.string());
  std::vector<char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return decode_bundle(std::move(bytes), path.stem().string());
}

// ---- CSV import -------------------------------------------------------------

namespace detail {

inline std::vector<std::vector<std::string>> read_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw FormatError(FormatErrorCode::io, "cannot open " + path.string());
  std::vector<std::vector<std::string>> rows;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line[0] == '#') continue;
    std::vector<std::string> cells;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    rows.push_back(std::move(cells));
  }
  return rows;
}

inline double parse_number(const std::string& s, const std::filesystem::path& path, std::size_t line) {
  try {
    std::size_t used = 0;
    const double v = std::stod(s, &used);
    if (used != s.size() && s.find_first_not_of(" \t", used) != std::string::npos) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw FormatError(FormatErrorCode::parse, path.string() + " row " + std::to_string(line) + ": bad number '" + s + "'");
  }
}

inline Tensor<float> read_matrix_csv(const std::filesystem::path& path) {
  const auto rows = read_csv(path);
  const std::size_t cols = rows.empty() ? 0 : rows.front().size();
  std::vector<float> data;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i].size() != cols) throw FormatError(FormatErrorCode::parse, path.string() + " row " + std::to_string(i) + ": ragged");
    for (const auto& c : rows[i]) data.push_back(static_cast<float>(parse_number(c, path, i)));
  }
  return Tensor<float>::matrix(rows.size(), cols, std::move(data));
}

}  // namespace detail

// Directory with features.csv (one sample per row), labels.csv (one class id per
// row), attributes.csv (one class per row, row j = class j) and splits.csv with
// rows "<kind>,<id>" where kind is seen|unseen (class ids) or
// train|test_seen|test_unseen (sample indices).
inline DatasetBundle load_csv_bundle(const std::filesystem::path& dir) {
  DatasetBundle b;
  b.name = dir.filename().string();
  b.features = detail::read_matrix_csv(dir / "features.csv");
  b.attributes = detail::read_matrix_csv(dir / "attributes.csv");
  const auto label_rows = detail::read_csv(dir / "labels.csv");
  for (std::size_t i = 0; i < label_rows.size(); ++i) {
    b.labels.push_back(static_cast<ClassId>(detail::parse_number(label_rows[i].at(0), dir / "labels.csv", i)));
  }
  const auto split_rows = detail::read_csv(dir / "splits.csv");
  for (std::size_t i = 0; i < split_rows.size(); ++i) {
    const auto& row = split_rows[i];
    if (row.size() != 2) throw FormatError(FormatErrorCode::parse, "splits.csv row " + std::to_string(i) + ": want kind,id");
    const auto id = static_cast<std::uint32_t>(detail::parse_number(row[1], dir / "splits.csv", i));
    if (row[0] == "seen") b.seen_classes.push_back(id);
    else if (row[0] == "unseen") b.unseen_classes.push_back(id);
    else if (row[0] == "train") b.train_idx.push_back(id);
    else if (row[0] == "test_seen") b.test_seen_idx.push_back(id);
    else if (row[0] == "test_unseen") b.test_unseen_idx.push_back(id);
    else throw FormatError(FormatErrorCode::parse, "splits.csv row " + std::to_string(i) + ": unknown kind '" + row[0] + "'");
  }
  if (auto vs = validate_bundle(b); !vs.empty()) throw FormatError(FormatErrorCode::invariant_violation, describe(vs));
  return b;
}

}  // namespace fgzsl
