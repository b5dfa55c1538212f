// Runs every acceptance check and prints one PASS/FAIL line per check.
// Exit status is non-zero when any check fails.

#include <unistd.h>

#include <cstdio>
#include <filesystem>
#include <string>

#include "cips/verify.hpp"

int main(int argc, char** argv) {
  cips::VerifyOptions opt;
  opt.cli = CIPS_CLI_PATH;
  opt.workdir = std::filesystem::temp_directory_path() / ("cips-acceptance-" + std::to_string(::getpid()));
  std::vector<std::string> ids(argv + 1, argv + argc);
  std::setvbuf(stdout, nullptr, _IONBF, 0);
  const auto results = cips::run_checks(ids, opt, [](const cips::CheckResult& r) {
    std::printf("%s %s %s (%.1fs) %s\n", r.passed ? "PASS" : "FAIL", r.id.c_str(), r.title.c_str(),
                r.seconds, r.detail.c_str());
  });
  std::size_t failed = 0;
  for (const auto& r : results) failed += r.passed ? 0 : 1;
  std::printf("%zu/%zu acceptance checks passed\n", results.size() - failed, results.size());
  std::error_code ec;
  std::filesystem::remove_all(opt.workdir, ec);
  return failed == 0 ? 0 : 1;
}
