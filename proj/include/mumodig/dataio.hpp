#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "mumodig/tensor.hpp"

namespace mumodig {

// One (image, label) pair; image is {C,H,W} with every pixel in [0,1].
struct LabeledExample {
  Tensor image;
  int label = 0;
};

struct Dataset {
  std::vector<LabeledExample> examples;
  std::size_t num_classes = 0;
  std::string split;  // "train" or "test"

  std::size_t size() const { return examples.size(); }
};

// --- IDX (big-endian magic + dims, u8 payload) -----------------------------

enum class IdxKind { labels, images };

struct IdxPart {
  IdxKind kind;
  std::vector<Tensor> images;  // {1,H,W} tensors, pixels scaled by 1/255
  std::vector<int> labels;
};

IdxPart parse_idx(std::span<const std::uint8_t> bytes);
std::vector<std::uint8_t> serialize_idx(const IdxPart& part);
// Pair an image part with a label part; num_classes 0 derives max(label)+1.
Dataset idx_dataset(const IdxPart& images, const IdxPart& labels, std::size_t num_classes,
                    std::string split);

// --- CIFAR-10 binary (3073-byte records, channel-planar) --------------------

Dataset parse_cifar10(std::span<const std::uint8_t> bytes, std::string split);
std::vector<std::uint8_t> serialize_cifar10(const Dataset& dataset);

// --- synthetic corpus --------------------------------------------------------

// Each class is an oriented sinusoidal grating with a class-specific channel
// mix; per-example phase, amplitude and pixel noise come from the seed.
struct SynthSpec {
  std::size_t num_classes = 4;
  std::array<std::size_t, 3> image_shape{3, 24, 24};
  std::size_t per_class_count = 100;
  std::uint64_t seed = 0;
  double noise_sigma = 0.08;
  std::string split = "train";
};

Dataset synth_dataset(const SynthSpec& spec);

// --- file helpers -------------------------------------------------------------

std::vector<std::uint8_t> read_file(const std::string& path);
void write_file(const std::string& path, std::span<const std::uint8_t> bytes);

}  // namespace mumodig
