#include <gtest/gtest.h>

#include <filesystem>

#include "fgzsl/checkpoint.hpp"
#include "fgzsl/data.hpp"

using namespace fgzsl;
namespace fs = std::filesystem;

namespace {

FreeModel<float> toy_model(std::uint64_t seed, double slope = 0.02) {
  ModelDims d;
  d.feat_dim = 6;
  d.attr_dim = 3;
  d.latent_dim = 4;
  d.hidden = 9;
  d.fr_hidden = 5;
  d.n_classes = 4;
  d.slope = slope;
  Tensor<float> attrs = Tensor<float>::matrix(4, 3);
  for (std::size_t i = 0; i < attrs.size(); ++i) attrs[i] = 0.1f * static_cast<float>(i);
  return FreeModel<float>::create(d, attrs, seed);
}

void expect_same(const FreeModel<float>& a, const FreeModel<float>& b) {
  EXPECT_EQ(a.dims, b.dims);
  EXPECT_EQ(a.centers, b.centers);
  auto same_net = [](const Mlp<float>& x, const Mlp<float>& y) {
    ASSERT_EQ(x.layers.size(), y.layers.size());
    for (std::size_t l = 0; l < x.layers.size(); ++l) {
      EXPECT_EQ(x.layers[l].weight, y.layers[l].weight);
      EXPECT_EQ(x.layers[l].bias, y.layers[l].bias);
    }
  };
  same_net(a.encoder, b.encoder);
  same_net(a.generator, b.generator);
  same_net(a.discriminator, b.discriminator);
  same_net(a.fr, b.fr);
}

FormatErrorCode decode_code(std::vector<char> bytes) {
  try {
    model_from_tensors<float>(decode_tensors(std::move(bytes)));
  } catch (const FormatError& e) {
    return e.code();
  }
  ADD_FAILURE() << "decoded without error";
  return FormatErrorCode::io;
}

}  // namespace

TEST(Checkpoint, FileRoundTripIsExact) {
  const auto m = toy_model(3, 0.2);
  const fs::path p = fs::temp_directory_path() / "fgzsl_ckpt_roundtrip.ckpt";
  save_checkpoint(m, p);
  expect_same(load_checkpoint<float>(p), m);
  fs::remove(p);
}

TEST(Checkpoint, DoubleModelsAreStoredAsFloat) {
  ModelDims d = toy_model(1).dims;
  const auto m = FreeModel<double>::create(d, Tensor<double>::matrix(4, 3, 0.3), 5);
  const auto back = model_from_tensors<double>(decode_tensors(encode_tensors(model_tensors(m))));
  EXPECT_EQ(back.dims, m.dims);
  const auto& w = m.encoder.layers[0].weight;
  for (std::size_t i = 0; i < w.size(); ++i)
    EXPECT_EQ(back.encoder.layers[0].weight[i], static_cast<double>(static_cast<float>(w[i])));
}

TEST(Checkpoint, SameModelSameBytes) {
  EXPECT_EQ(encode_tensors(model_tensors(toy_model(8))), encode_tensors(model_tensors(toy_model(8))));
  EXPECT_NE(encode_tensors(model_tensors(toy_model(8))), encode_tensors(model_tensors(toy_model(9))));
}

TEST(Checkpoint, ShapeMismatchIsInvariantViolation) {
  auto tensors = model_tensors(toy_model(2));
  for (auto& [name, t] : tensors)
    if (name == "G.1.weight") t = Tensor<float>::matrix(t.rows(), t.cols() + 1);
  EXPECT_EQ(decode_code(encode_tensors(tensors)), FormatErrorCode::invariant_violation);
}

TEST(Checkpoint, MissingExtraDuplicateAndNonFinite) {
  const auto good = model_tensors(toy_model(2));

  auto missing = good;
  missing.erase(missing.begin() + 3);
  EXPECT_EQ(decode_code(encode_tensors(missing)), FormatErrorCode::invariant_violation);

  auto extra = good;
  extra.emplace_back("stray", Tensor<float>::vector({1.0f}));
  EXPECT_EQ(decode_code(encode_tensors(extra)), FormatErrorCode::invariant_violation);

  auto dup = good;
  dup.push_back(good.front());
  EXPECT_EQ(decode_code(encode_tensors(dup)), FormatErrorCode::invariant_violation);

  auto nan = good;
  nan[0].second[0] = std::nanf("");
  EXPECT_EQ(decode_code(encode_tensors(nan)), FormatErrorCode::invariant_violation);
}

TEST(Checkpoint, CorruptContainers) {
  const auto bytes = encode_tensors(model_tensors(toy_model(4)));
  auto magic = bytes;
  magic[0] = 'X';
  EXPECT_EQ(decode_code(magic), FormatErrorCode::bad_magic);

  auto tag = bytes;
  tag[8] = 'X';
  EXPECT_EQ(decode_code(tag), FormatErrorCode::bad_magic);

  EXPECT_EQ(decode_code(std::vector<char>(bytes.begin(), bytes.end() - 5)), FormatErrorCode::truncated);

  auto trailing = bytes;
  trailing.push_back('!');
  EXPECT_EQ(decode_code(trailing), FormatErrorCode::trailing_bytes);
}

TEST(Checkpoint, BundleFileIsNotACheckpoint) {
  SyntheticSpec spec;
  spec.n_seen = 2;
  spec.n_unseen = 1;
  spec.feat_dim = 3;
  spec.attr_dim = 2;
  spec.samples_per_class = 2;
  EXPECT_EQ(decode_code(encode_bundle(generate_synthetic_bundle(spec, 1))), FormatErrorCode::bad_magic);
}

TEST(Checkpoint, MissingFileIsIoError) {
  try {
    load_checkpoint<float>("/nonexistent/model.ckpt");
    FAIL();
  } catch (const FormatError& e) {
    EXPECT_EQ(e.code(), FormatErrorCode::io);
  }
}
