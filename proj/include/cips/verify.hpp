#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "cips/generator.hpp"

namespace cips {

struct CheckResult {
  std::string id;
  std::string title;
  bool passed = false;
  std::string detail;
  double seconds = 0.0;
};

struct VerifyOptions {
  /// Scratch directory for checkpoints and CLI output.
  std::filesystem::path workdir;
  /// CLI executable used for the cross-interface check; empty skips the
  /// subprocess and compares against the in-process CLI code path.
  std::filesystem::path cli;
  /// Training steps for the toy run.
  std::size_t toy_steps = 2000;
  unsigned threads = 1;
};

struct CheckInfo {
  std::string id;
  std::string title;
};

/// P1 ... P12 in order.
const std::vector<CheckInfo>& acceptance_checks();

/// Runs one check; exceptions are reported as failures.
CheckResult run_check(const std::string& id, const VerifyOptions& options);

/// Runs the selected checks (all when `ids` is empty), reporting each result
/// through `on_result` as soon as it is known.
std::vector<CheckResult> run_checks(const std::vector<std::string>& ids,
                                    const VerifyOptions& options,
                                    const std::function<void(const CheckResult&)>& on_result = {});

/// Bytes written by `cips sample` for a seed.
std::vector<std::uint8_t> sample_png_bytes(const Generator& gen, std::uint64_t seed,
                                           unsigned threads = 1);

}  // namespace cips
