#pragma once

#include <string>
#include <vector>

#include "mumodig/attack.hpp"

namespace mumodig {

struct AttackRecord {
  Tensor clean;
  int label = 0;
  AdversarialResult result;
};

// On-disk adversarial batch: magic "MMDGADV1", u32 version, u32-length
// estimator string, u64 config digest, u64 master seed, u64 record count,
// then per record label/predictions/stats, shape, clean and adversarial
// doubles (little-endian), and the loss trace.
struct AdversarialArchive {
  std::string estimator;
  std::uint64_t config_digest = 0;
  std::uint64_t master_seed = 0;
  std::vector<AttackRecord> records;
};

void save_archive(const AdversarialArchive& archive, const std::string& path);
AdversarialArchive load_archive(const std::string& path);

}  // namespace mumodig
