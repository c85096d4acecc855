#include "mumodig/archive.hpp"

#include <cstring>

#include "mumodig/dataio.hpp"
#include "mumodig/errors.hpp"

namespace mumodig {

namespace {

constexpr char kArchiveMagic[8] = {'M', 'M', 'D', 'G', 'A', 'D', 'V', '1'};
constexpr std::uint32_t kArchiveVersion = 1;

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}
void put_u64(std::vector<std::uint8_t>& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}
void put_f64(std::vector<std::uint8_t>& out, double v) {
  std::uint64_t bits;
  std::memcpy(&bits, &v, sizeof bits);
  put_u64(out, bits);
}
void put_doubles(std::vector<std::uint8_t>& out, std::span<const double> vals) {
  const std::size_t where = out.size();
  out.resize(where + vals.size() * sizeof(double));
  std::memcpy(out.data() + where, vals.data(), vals.size() * sizeof(double));
}

struct Reader {
  std::span<const std::uint8_t> bytes;
  std::size_t pos = 0;
  void need(std::size_t n, const char* what) {
    if (pos + n > bytes.size()) {
      throw DataError(std::string("archive: truncated while reading ") + what + " at offset " +
                      std::to_string(pos));
    }
  }
  std::uint32_t u32(const char* what) {
    need(4, what);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(bytes[pos + i]) << (8 * i);
    pos += 4;
    return v;
  }
  std::uint64_t u64(const char* what) {
    need(8, what);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(bytes[pos + i]) << (8 * i);
    pos += 8;
    return v;
  }
  double f64(const char* what) {
    const std::uint64_t bits = u64(what);
    double v;
    std::memcpy(&v, &bits, sizeof v);
    return v;
  }
  std::string str(std::size_t n, const char* what) {
    need(n, what);
    std::string s(reinterpret_cast<const char*>(bytes.data() + pos), n);
    pos += n;
    return s;
  }
  std::vector<double> doubles(std::size_t n, const char* what) {
    need(n * sizeof(double), what);
    std::vector<double> vals(n);
    std::memcpy(vals.data(), bytes.data() + pos, n * sizeof(double));
    pos += n * sizeof(double);
    return vals;
  }
};

}  // namespace

void save_archive(const AdversarialArchive& archive, const std::string& path) {
  std::vector<std::uint8_t> out;
  out.insert(out.end(), kArchiveMagic, kArchiveMagic + 8);
  put_u32(out, kArchiveVersion);
  put_u32(out, static_cast<std::uint32_t>(archive.estimator.size()));
  out.insert(out.end(), archive.estimator.begin(), archive.estimator.end());
  put_u64(out, archive.config_digest);
  put_u64(out, archive.master_seed);
  put_u64(out, archive.records.size());
  for (const AttackRecord& rec : archive.records) {
    put_u32(out, static_cast<std::uint32_t>(rec.label));
    put_u32(out, static_cast<std::uint32_t>(rec.result.prediction_before));
    put_u32(out, static_cast<std::uint32_t>(rec.result.prediction_after));
    put_u64(out, rec.result.zero_gradient_events);
    put_f64(out, rec.result.mean_sign_conflict);
    put_f64(out, rec.result.monotonic_branch_fraction);
    put_u32(out, static_cast<std::uint32_t>(rec.clean.shape().size()));
    for (std::size_t d : rec.clean.shape()) put_u64(out, d);
    put_doubles(out, rec.clean.values());
    put_doubles(out, rec.result.adversarial.values());
    put_u32(out, static_cast<std::uint32_t>(rec.result.loss_trace.size()));
    put_doubles(out, rec.result.loss_trace);
  }
  write_file(path, out);
}

AdversarialArchive load_archive(const std::string& path) {
  const std::vector<std::uint8_t> bytes = read_file(path);
  Reader r{bytes};
  if (std::memcmp(r.str(8, "magic").data(), kArchiveMagic, 8) != 0) {
    throw DataError("archive: bad magic in " + path);
  }
  const std::uint32_t version = r.u32("version");
  if (version != kArchiveVersion) {
    throw DataError("archive: version " + std::to_string(version) + " unsupported");
  }
  AdversarialArchive archive;
  archive.estimator = r.str(r.u32("estimator length"), "estimator");
  archive.config_digest = r.u64("config digest");
  archive.master_seed = r.u64("master seed");
  const std::uint64_t count = r.u64("record count");
  archive.records.reserve(count);
  for (std::uint64_t i = 0; i < count; ++i) {
    AttackRecord rec;
    rec.label = static_cast<int>(r.u32("label"));
    rec.result.prediction_before = static_cast<int>(r.u32("prediction before"));
    rec.result.prediction_after = static_cast<int>(r.u32("prediction after"));
    rec.result.zero_gradient_events = r.u64("zero gradient events");
    rec.result.mean_sign_conflict = r.f64("sign conflict");
    rec.result.monotonic_branch_fraction = r.f64("monotonic fraction");
    const std::uint32_t ndim = r.u32("rank");
    std::vector<std::size_t> shape(ndim);
    std::size_t numel = 1;
    for (auto& d : shape) {
      d = r.u64("extent");
      numel *= d;
    }
    rec.clean = Tensor::from_values(shape, r.doubles(numel, "clean pixels"));
    rec.result.adversarial = Tensor::from_values(shape, r.doubles(numel, "adversarial pixels"));
    rec.result.delta = sub(rec.result.adversarial, rec.clean);
    const std::uint32_t trace_len = r.u32("loss trace length");
    rec.result.loss_trace = r.doubles(trace_len, "loss trace");
    archive.records.push_back(std::move(rec));
  }
  if (r.pos != bytes.size()) {
    throw DataError("archive: " + std::to_string(bytes.size() - r.pos) + " trailing bytes in " +
                    path);
  }
  return archive;
}

}  // namespace mumodig
