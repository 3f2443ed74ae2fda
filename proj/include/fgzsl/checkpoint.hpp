#pragma once

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "fgzsl/binary_io.hpp"
#include "fgzsl/models.hpp"

namespace fgzsl {

inline constexpr char kCheckpointTag[4] = {'C', 'K', 'P', 'T'};

using NamedTensors = std::vector<std::pair<std::string, Tensor<float>>>;

// Section body: u32 count, then per tensor (u32 name length, name bytes,
// u32 rank, u32 extents, f32 data).
inline std::vector<char> encode_tensors(const NamedTensors& tensors) {
  ByteWriter w;
  write_container_preamble(w);
  w.raw(std::string_view(kCheckpointTag, 4));
  w.u32(static_cast<std::uint32_t>(tensors.size()));
  for (const auto& [name, t] : tensors) {
    w.u32(static_cast<std::uint32_t>(name.size()));
    w.raw(name);
    w.u32(static_cast<std::uint32_t>(t.rank()));
    for (std::size_t e : t.shape()) w.u32(static_cast<std::uint32_t>(e));
    for (float v : t.values()) w.f32(v);
  }
  return w.bytes();
}

inline NamedTensors decode_tensors(std::vector<char> bytes) {
  ByteReader r(std::move(bytes));
  read_container_preamble(r);
  if (r.remaining() < 4) throw FormatError(FormatErrorCode::truncated, "missing section tag");
  if (r.raw(4) != std::string_view(kCheckpointTag, 4)) {
    throw FormatError(FormatErrorCode::bad_magic, "container does not hold a CKPT section");
  }
  const std::uint32_t count = r.u32();
  NamedTensors out;
  for (std::uint32_t k = 0; k < count; ++k) {
    const std::uint32_t len = r.u32();
    std::string name = r.raw(len);
    const std::uint32_t rank = r.u32();
    Shape shape;
    for (std::uint32_t d = 0; d < rank; ++d) shape.push_back(r.u32());
    std::uint64_t n = 1;
    for (std::size_t e : shape) n *= e;
    auto data = r.f32_array(n, name.c_str());
    out.emplace_back(std::move(name), Tensor<float>(shape, std::move(data)));
  }
  if (r.remaining() != 0) {
    throw FormatError(FormatErrorCode::trailing_bytes, std::to_string(r.remaining()) + " bytes after the last tensor");
  }
  return out;
}

template <typename T>
NamedTensors model_tensors(const FreeModel<T>& m) {
  NamedTensors out;
  auto add = [&](const std::string& prefix, const Mlp<T>& net) {
    for (std::size_t l = 0; l < net.layers.size(); ++l) {
      const std::string base = prefix + "." + std::to_string(l);
      out.emplace_back(base + ".weight", net.layers[l].weight.template cast<float>());
      out.emplace_back(base + ".bias", net.layers[l].bias.template cast<float>());
    }
  };
  add("E", m.encoder);
  add("G", m.generator);
  add("D", m.discriminator);
  add("FR", m.fr);
  out.emplace_back("centers", m.centers.template cast<float>());
  out.emplace_back("slope", Tensor<float>::vector({static_cast<float>(m.dims.slope)}));
  return out;
}

template <typename T>
void save_checkpoint(const FreeModel<T>& m, const std::filesystem::path& path) {
  ByteWriter w;
  const auto bytes = encode_tensors(model_tensors(m));
  w.raw(std::string_view(bytes.data(), bytes.size()));
  w.write_file(path);
}

// Rebuilds a model from its tensors. Dimensions are inferred from the shapes
// and every tensor is checked against the architecture they imply.
template <typename T>
FreeModel<T> model_from_tensors(const NamedTensors& tensors) {
  std::map<std::string, const Tensor<float>*> by_name;
  for (const auto& [name, t] : tensors) {
    if (!by_name.emplace(name, &t).second) throw FormatError(FormatErrorCode::invariant_violation, "duplicate tensor " + name);
  }
  auto get = [&](const std::string& name) -> const Tensor<float>& {
    auto it = by_name.find(name);
    if (it == by_name.end()) throw FormatError(FormatErrorCode::invariant_violation, "checkpoint lacks tensor " + name);
    return *it->second;
  };
  auto extent = [&](const std::string& name, std::size_t axis) -> std::size_t {
    const auto& t = get(name);
    if (t.rank() != 2) throw FormatError(FormatErrorCode::invariant_violation, name + " is not a matrix");
    return t.shape()[axis];
  };

  ModelDims d;
  d.n_classes = extent("centers", 0);
  d.attr_dim = extent("centers", 1);
  d.hidden = extent("E.0.weight", 0);
  d.fr_hidden = extent("FR.0.weight", 0);
  d.feat_dim = extent("FR.0.weight", 1);
  d.latent_dim = extent("E.1.weight", 0) / 2;
  if (get("slope").size() != 1) throw FormatError(FormatErrorCode::invariant_violation, "slope must hold one value");
  // Stored as f32; the shortest decimal form recovers the configured value.
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.7g", static_cast<double>(get("slope")[0]));
  d.slope = std::strtod(buf, nullptr);
  try {
    d.validate();
  } catch (const std::invalid_argument& e) {
    throw FormatError(FormatErrorCode::invariant_violation, e.what());
  }

  FreeModel<T> m;
  m.dims = d;
  std::size_t used = 2;
  auto load = [&](const std::string& prefix, const MlpSpec& spec, Mlp<T>& net) {
    net.spec = spec;
    net.layers.clear();
    for (std::size_t l = 0; l + 1 < spec.widths.size(); ++l) {
      const std::string base = prefix + "." + std::to_string(l);
      const auto& w = get(base + ".weight");
      const auto& b = get(base + ".bias");
      const Shape ws{spec.widths[l + 1], spec.widths[l]}, bs{spec.widths[l + 1]};
      if (w.shape() != ws || b.shape() != bs) {
        throw FormatError(FormatErrorCode::invariant_violation, base + " has shape " + shape_str(w.shape()) + "/" +
                                                                    shape_str(b.shape()) + ", expected " + shape_str(ws) +
                                                                    "/" + shape_str(bs));
      }
      net.layers.push_back({w.template cast<T>(), b.template cast<T>()});
      used += 2;
    }
  };
  load("E", FreeModel<T>::encoder_spec(d), m.encoder);
  load("G", FreeModel<T>::generator_spec(d), m.generator);
  load("D", FreeModel<T>::discriminator_spec(d), m.discriminator);
  load("FR", FreeModel<T>::fr_spec(d), m.fr);
  m.centers = get("centers").template cast<T>();
  if (used != tensors.size()) {
    throw FormatError(FormatErrorCode::invariant_violation, std::to_string(tensors.size() - used) + " unexpected tensors");
  }
  for (const auto& [name, t] : tensors) {
    if (!check_finite(t)) throw FormatError(FormatErrorCode::invariant_violation, name + " holds non-finite values");
  }
  return m;
}

template <typename T>
FreeModel<T> load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError(FormatErrorCode::io, "cannot open " + path.string());
  std::vector<char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return model_from_tensors<T>(decode_tensors(std::move(bytes)));
}

}  // namespace fgzsl
