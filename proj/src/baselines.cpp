#include "mumodig/baselines.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>

#include "mumodig/errors.hpp"

namespace mumodig {

namespace {

void check_image(const char* who, const Tensor& x) {
  if (x.shape().size() != 3) {
    throw TensorError(std::string(who) + ": expected {C,H,W}, got " + shape_to_string(x.shape()));
  }
}

// k distinct values from [0, n) via Floyd's algorithm, returned sorted.
std::vector<std::size_t> sample_without_replacement(std::size_t n, std::size_t k, Rng& rng) {
  std::set<std::size_t> chosen;
  for (std::size_t j = n - k; j < n; ++j) {
    const std::size_t t = rng.uniform_index(j + 1);
    if (!chosen.insert(t).second) chosen.insert(j);
  }
  return {chosen.begin(), chosen.end()};
}

// Ascending order of (value, original index); the stable tie-break makes the
// scatter-back bit-reproducible.
std::vector<std::size_t> sorted_channel_order(std::span<const double> chan) {
  std::vector<std::size_t> order(chan.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (chan[a] != chan[b]) return chan[a] < chan[b];
    return a < b;
  });
  return order;
}

}  // namespace

std::string to_string(BaselineKind kind) {
  switch (kind) {
    case BaselineKind::lbq: return "lbq";
    case BaselineKind::black: return "black";
    case BaselineKind::noise: return "noise";
    case BaselineKind::blur: return "blur";
  }
  return "?";
}

Tensor lbq_quantize_channel_positions(const Tensor& x, std::size_t channel,
                                      const std::vector<std::size_t>& divisions) {
  check_image("lbq", x);
  const std::size_t h = x.height(), w = x.width(), n = h * w;
  if (channel >= x.channels()) throw TensorError("lbq: channel out of range");
  Tensor out = x.clone();
  auto vals = out.mutable_values();
  std::span<double> chan(vals.data() + channel * n, n);
  const std::vector<std::size_t> order = sorted_channel_order(chan);

  std::size_t region_start = 0;
  auto flush_region = [&](std::size_t region_end) {
    if (region_end == region_start) return;
    const double region_min = chan[order[region_start]];  // ascending: first is min
    for (std::size_t i = region_start; i < region_end; ++i) chan[order[i]] = region_min;
    region_start = region_end;
  };
  for (std::size_t d : divisions) {
    if (d == 0 || d >= n) throw TensorError("lbq: division position out of range");
    flush_region(d);
  }
  flush_region(n);
  return out;
}

Baseline lbq_baseline(const Tensor& x, std::size_t n_regions, std::uint64_t seed,
                      bool force_black) {
  check_image("lbq", x);
  const std::size_t n = x.height() * x.width();
  if (n_regions < 1 || n_regions > n) {
    throw TensorError("lbq: n_regions " + std::to_string(n_regions) + " not in [1, " +
                      std::to_string(n) + "] for " + shape_to_string(x.shape()));
  }
  Baseline out{x.clone(), BaselineKind::lbq, content_digest(x), seed};
  if (force_black && n_regions == 1) {
    out.image = Tensor::zeros(x.shape());
    return out;
  }
  for (std::size_t c = 0; c < x.channels(); ++c) {
    Rng rng(mix_seed(seed, seed_tag::channel, c));
    // Division positions live on the n-1 gaps between sorted neighbors.
    std::vector<std::size_t> gaps = sample_without_replacement(n - 1, n_regions - 1, rng);
    for (std::size_t& g : gaps) ++g;  // gap i separates sorted positions i and i+1
    out.image = lbq_quantize_channel_positions(out.image, c, gaps);
  }
  return out;
}

Baseline black_baseline(const Tensor& x, bool channel_min) {
  check_image("black", x);
  if (!channel_min) return {Tensor::zeros(x.shape()), BaselineKind::black, content_digest(x), 0};
  Tensor img = x.clone();
  auto vals = img.mutable_values();
  const std::size_t n = x.height() * x.width();
  for (std::size_t c = 0; c < x.channels(); ++c) {
    double m = vals[c * n];
    for (std::size_t i = 0; i < n; ++i) m = std::min(m, vals[c * n + i]);
    for (std::size_t i = 0; i < n; ++i) vals[c * n + i] = m;
  }
  return {std::move(img), BaselineKind::black, content_digest(x), 0};
}

Baseline noise_baseline(const Tensor& x, double sigma, std::uint64_t seed) {
  check_image("noise", x);
  if (sigma <= 0.0) throw TensorError("noise baseline: sigma must be positive");
  Rng rng(mix_seed(seed, seed_tag::noise));
  Tensor img = x.clone();
  for (double& v : img.mutable_values()) v = std::clamp(v + rng.normal(0.0, sigma), 0.0, 1.0);
  return {std::move(img), BaselineKind::noise, content_digest(x), seed};
}

Baseline blur_baseline(const Tensor& x, std::size_t kernel_size) {
  return {box_blur(x, kernel_size), BaselineKind::blur, content_digest(x), 0};
}

std::size_t distinct_channel_values(const Tensor& x, std::size_t channel) {
  check_image("distinct_channel_values", x);
  const std::size_t n = x.height() * x.width();
  std::set<double> values;
  for (std::size_t i = 0; i < n; ++i) values.insert(x.values()[channel * n + i]);
  return values.size();
}

}  // namespace mumodig
