#include "mumodig/dataio.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include "mumodig/errors.hpp"

namespace mumodig {

namespace {

constexpr std::uint32_t kIdxLabelMagic = 0x00000801;
constexpr std::uint32_t kIdxImageMagic = 0x00000803;
constexpr std::size_t kCifarRecordBytes = 3073;  // 1 label byte + 3*32*32 pixels
constexpr std::size_t kIdxMaxElements = 1u << 30;

std::uint32_t read_u32_be(std::span<const std::uint8_t> bytes, std::size_t offset) {
  return (static_cast<std::uint32_t>(bytes[offset]) << 24) |
         (static_cast<std::uint32_t>(bytes[offset + 1]) << 16) |
         (static_cast<std::uint32_t>(bytes[offset + 2]) << 8) |
         static_cast<std::uint32_t>(bytes[offset + 3]);
}

void write_u32_be(std::vector<std::uint8_t>& out, std::uint32_t v) {
  out.push_back(static_cast<std::uint8_t>(v >> 24));
  out.push_back(static_cast<std::uint8_t>(v >> 16));
  out.push_back(static_cast<std::uint8_t>(v >> 8));
  out.push_back(static_cast<std::uint8_t>(v));
}

std::uint8_t pixel_to_byte(double v) {
  const long b = std::lround(v * 255.0);
  return static_cast<std::uint8_t>(std::clamp(b, 0l, 255l));
}

}  // namespace

IdxPart parse_idx(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 4) {
    throw DataError("idx: stream ends inside magic at offset " + std::to_string(bytes.size()));
  }
  const std::uint32_t magic = read_u32_be(bytes, 0);
  if (magic != kIdxLabelMagic && magic != kIdxImageMagic) {
    throw DataError("idx: bad magic 0x" + [&] {
      char buf[16];
      std::snprintf(buf, sizeof buf, "%08x", magic);
      return std::string(buf);
    }() + " at offset 0");
  }
  const std::size_t ndim = (magic == kIdxLabelMagic) ? 1 : 3;
  const std::size_t header = 4 + 4 * ndim;
  if (bytes.size() < header) {
    throw DataError("idx: stream ends inside dimensions at offset " +
                    std::to_string(bytes.size()));
  }
  std::vector<std::size_t> dims(ndim);
  std::size_t total = 1;
  for (std::size_t i = 0; i < ndim; ++i) {
    dims[i] = read_u32_be(bytes, 4 + 4 * i);
    if (dims[i] != 0 && total > kIdxMaxElements / dims[i]) {
      throw DataError("idx: dimension overflow at offset " + std::to_string(4 + 4 * i));
    }
    total *= dims[i];
  }
  if (bytes.size() != header + total) {
    throw DataError("idx: expected " + std::to_string(header + total) + " bytes, got " +
                    std::to_string(bytes.size()) + " (payload begins at offset " +
                    std::to_string(header) + ")");
  }

  IdxPart part;
  if (magic == kIdxLabelMagic) {
    part.kind = IdxKind::labels;
    part.labels.reserve(total);
    for (std::size_t i = 0; i < total; ++i) part.labels.push_back(bytes[header + i]);
  } else {
    part.kind = IdxKind::images;
    const std::size_t count = dims[0], h = dims[1], w = dims[2];
    part.images.reserve(count);
    for (std::size_t n = 0; n < count; ++n) {
      std::vector<double> pixels(h * w);
      const std::size_t base = header + n * h * w;
      for (std::size_t i = 0; i < h * w; ++i) {
        pixels[i] = static_cast<double>(bytes[base + i]) / 255.0;
      }
      part.images.push_back(Tensor::from_values({1, h, w}, std::move(pixels)));
    }
  }
  return part;
}

std::vector<std::uint8_t> serialize_idx(const IdxPart& part) {
  std::vector<std::uint8_t> out;
  if (part.kind == IdxKind::labels) {
    write_u32_be(out, kIdxLabelMagic);
    write_u32_be(out, static_cast<std::uint32_t>(part.labels.size()));
    for (int label : part.labels) {
      if (label < 0 || label > 255) {
        throw DataError("idx: label " + std::to_string(label) + " out of byte range");
      }
      out.push_back(static_cast<std::uint8_t>(label));
    }
    return out;
  }
  if (part.images.empty()) {
    write_u32_be(out, kIdxImageMagic);
    write_u32_be(out, 0);
    write_u32_be(out, 0);
    write_u32_be(out, 0);
    return out;
  }
  const auto& shape = part.images.front().shape();
  if (shape.size() != 3 || shape[0] != 1) {
    throw DataError("idx: images must be single-channel {1,H,W}, got " +
                    shape_to_string(shape));
  }
  write_u32_be(out, kIdxImageMagic);
  write_u32_be(out, static_cast<std::uint32_t>(part.images.size()));
  write_u32_be(out, static_cast<std::uint32_t>(shape[1]));
  write_u32_be(out, static_cast<std::uint32_t>(shape[2]));
  for (const Tensor& image : part.images) {
    if (image.shape() != shape) {
      throw DataError("idx: inconsistent image shapes " + shape_to_string(shape) + " vs " +
                      shape_to_string(image.shape()));
    }
    for (double v : image.values()) out.push_back(pixel_to_byte(v));
  }
  return out;
}

Dataset idx_dataset(const IdxPart& images, const IdxPart& labels, std::size_t num_classes,
                    std::string split) {
  if (images.kind != IdxKind::images || labels.kind != IdxKind::labels) {
    throw DataError("idx_dataset: parts have wrong kinds");
  }
  if (images.images.size() != labels.labels.size()) {
    throw DataError("idx_dataset: " + std::to_string(images.images.size()) + " images vs " +
                    std::to_string(labels.labels.size()) + " labels");
  }
  Dataset ds;
  ds.split = std::move(split);
  if (num_classes == 0) {
    int max_label = 0;
    for (int l : labels.labels) max_label = std::max(max_label, l);
    num_classes = static_cast<std::size_t>(max_label) + 1;
  }
  ds.num_classes = num_classes;
  ds.examples.reserve(images.images.size());
  for (std::size_t i = 0; i < images.images.size(); ++i) {
    const int label = labels.labels[i];
    if (label < 0 || static_cast<std::size_t>(label) >= num_classes) {
      throw DataError("idx_dataset: label " + std::to_string(label) + " at record " +
                      std::to_string(i) + " exceeds num_classes " +
                      std::to_string(num_classes));
    }
    ds.examples.push_back({images.images[i], label});
  }
  return ds;
}

Dataset parse_cifar10(std::span<const std::uint8_t> bytes, std::string split) {
  if (bytes.size() % kCifarRecordBytes != 0) {
    throw DataError("cifar10: length " + std::to_string(bytes.size()) +
                    " is not a multiple of " + std::to_string(kCifarRecordBytes));
  }
  Dataset ds;
  ds.num_classes = 10;
  ds.split = std::move(split);
  const std::size_t count = bytes.size() / kCifarRecordBytes;
  ds.examples.reserve(count);
  for (std::size_t n = 0; n < count; ++n) {
    const std::size_t base = n * kCifarRecordBytes;
    const std::uint8_t label = bytes[base];
    if (label >= 10) {
      throw DataError("cifar10: label byte " + std::to_string(label) + " in record " +
                      std::to_string(n) + " at offset " + std::to_string(base));
    }
    std::vector<double> pixels(3 * 32 * 32);
    for (std::size_t i = 0; i < pixels.size(); ++i) {
      pixels[i] = static_cast<double>(bytes[base + 1 + i]) / 255.0;
    }
    ds.examples.push_back({Tensor::from_values({3, 32, 32}, std::move(pixels)),
                           static_cast<int>(label)});
  }
  return ds;
}

std::vector<std::uint8_t> serialize_cifar10(const Dataset& dataset) {
  std::vector<std::uint8_t> out;
  out.reserve(dataset.size() * kCifarRecordBytes);
  for (const LabeledExample& ex : dataset.examples) {
    if (ex.image.shape() != std::vector<std::size_t>{3, 32, 32}) {
      throw DataError("cifar10: image shape " + shape_to_string(ex.image.shape()) +
                      " is not {3,32,32}");
    }
    out.push_back(static_cast<std::uint8_t>(ex.label));
    for (double v : ex.image.values()) out.push_back(pixel_to_byte(v));
  }
  return out;
}

Dataset synth_dataset(const SynthSpec& spec) {
  if (spec.num_classes < 2) {
    throw DataError("synth: num_classes must be >= 2, got " + std::to_string(spec.num_classes));
  }
  const auto [c, h, w] = spec.image_shape;
  if (c < 3 || h < 8 || w < 8) {
    throw DataError("synth: image_shape must be at least 3x8x8, got (" + std::to_string(c) +
                    "," + std::to_string(h) + "," + std::to_string(w) + ")");
  }
  if (spec.per_class_count == 0) throw DataError("synth: per_class_count must be >= 1");
  if (spec.noise_sigma < 0.0) throw DataError("synth: noise_sigma must be >= 0");

  Dataset ds;
  ds.num_classes = spec.num_classes;
  ds.split = spec.split;
  ds.examples.reserve(spec.num_classes * spec.per_class_count);

  // Interleave classes so any prefix of the dataset stays balanced.
  for (std::size_t i = 0; i < spec.per_class_count; ++i) {
    for (std::size_t cls = 0; cls < spec.num_classes; ++cls) {
      Rng rng(mix_seed(spec.seed, seed_tag::synth, cls * spec.per_class_count + i));
      // Class identity lives in the grating orientation (and a matching
      // channel mix); frequency, phase and amplitude are per-example
      // nuisances, so mild affine/resize transformations preserve labels.
      const double angle = M_PI * static_cast<double>(cls) / static_cast<double>(spec.num_classes);
      const double freq = rng.uniform(2.0, 4.0);
      const double phase = rng.uniform(0.0, 2.0 * M_PI);
      const double amplitude = rng.uniform(0.10, 0.20);
      const double base = rng.uniform(0.35, 0.55);
      const double hue = 2.0 * M_PI * static_cast<double>(cls) / static_cast<double>(spec.num_classes);

      // The class grating plus two spatially-coherent distractor gratings;
      // the distractors keep class boundaries close to the data, which iid
      // pixel noise alone cannot do.
      struct Grating {
        double ca, sa, freq, phase, amp;
        std::array<double, 8> gain;
      };
      std::vector<Grating> gratings;
      auto channel_gains = [&](double gain_hue) {
        std::array<double, 8> gains{};
        for (std::size_t ch = 0; ch < c && ch < gains.size(); ++ch) {
          gains[ch] = 0.7 + 0.3 * std::sin(2.0 * M_PI * static_cast<double>(ch) /
                                               static_cast<double>(c) +
                                           gain_hue);
        }
        return gains;
      };
      gratings.push_back({std::cos(angle), std::sin(angle), freq, phase, amplitude,
                          channel_gains(hue)});
      for (int d = 0; d < 2; ++d) {
        const double da = rng.uniform(0.0, M_PI);
        const double dfreq = rng.uniform(1.5, 5.5);
        const double dphase = rng.uniform(0.0, 2.0 * M_PI);
        const double damp = amplitude * rng.uniform(0.35, 0.75);
        gratings.push_back({std::cos(da), std::sin(da), dfreq, dphase, damp,
                            channel_gains(rng.uniform(0.0, 2.0 * M_PI))});
      }

      std::vector<double> pixels(c * h * w);
      for (std::size_t ch = 0; ch < c; ++ch) {
        for (std::size_t y = 0; y < h; ++y) {
          const double v = static_cast<double>(y) / static_cast<double>(h - 1);
          for (std::size_t x = 0; x < w; ++x) {
            const double u = static_cast<double>(x) / static_cast<double>(w - 1);
            double p = base;
            for (const Grating& g : gratings) {
              p += g.amp * g.gain[ch % g.gain.size()] *
                   std::sin(2.0 * M_PI * g.freq * (u * g.ca + v * g.sa) + g.phase);
            }
            p += rng.normal(0.0, spec.noise_sigma);
            pixels[(ch * h + y) * w + x] = std::clamp(p, 0.0, 1.0);
          }
        }
      }
      ds.examples.push_back({Tensor::from_values({c, h, w}, std::move(pixels)),
                             static_cast<int>(cls)});
    }
  }
  return ds;
}

std::vector<std::uint8_t> read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path);
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                  std::istreambuf_iterator<char>());
  return bytes;
}

void write_file(const std::string& path, std::span<const std::uint8_t> bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write " + path);
  out.write(reinterpret_cast<const char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
  if (!out) throw DataError("write failed for " + path);
}

}  // namespace mumodig
