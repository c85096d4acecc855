#pragma once

#include <cstdint>
#include <optional>
#include <string>

namespace mumodig {

struct CliOptions {
  std::string config_path;
  std::string out_dir;
  std::optional<std::uint64_t> seed_override;
  std::optional<std::size_t> workers_override;
};

// Each command validates its config up front, writes all outputs into a
// staging directory and renames it to out_dir on success, so a nonzero exit
// never leaves partial outputs behind. Errors are thrown; main maps them to
// the exit-code contract (2 bad config / missing inputs, 3 divergence,
// 4 budget violation, 1 anything else).
void cmd_train(const CliOptions& options);
void cmd_attack(const CliOptions& options);
void cmd_evaluate(const CliOptions& options);
void cmd_diagnose(const CliOptions& options);

int exit_code_for_current_exception();

}  // namespace mumodig
