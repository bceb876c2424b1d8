// Acceptance suite: runs every named experiment plus the property battery at
// their full configured sizes and prints one PASS/FAIL line per criterion.
// Exit code 0 means every criterion passed; 2 flags inconclusive diagnostics;
// 1 reports failures.

#include <cstdio>
#include <exception>
#include <thread>

#include "sandlab/harness.hpp"

int main() {
  using namespace sandlab::harness;
  try {
    Config cfg = default_config("all");
    cfg["output_dir"] = "acceptance_out";
    const unsigned hw = std::thread::hardware_concurrency();
    cfg["parallelism"] = static_cast<int>(hw == 0 ? 4 : std::min(hw, 8u));

    const RunResult rr = run(cfg);
    int n_pass = 0, n_fail = 0, n_flag = 0;
    for (const auto& er : rr.experiments) {
      for (const auto& c : er.checks) {
        const char* tag = c.inconclusive ? "FLAG" : (c.pass ? "PASS" : "FAIL");
        if (c.inconclusive) ++n_flag;
        else if (c.pass) ++n_pass;
        else ++n_fail;
        std::printf("[%s] %s: %s%s%s\n", tag, er.id.c_str(), c.name.c_str(),
                    c.detail.empty() ? "" : " -- ", c.detail.c_str());
      }
      std::printf("       %s finished in %.1f s\n", er.id.c_str(), er.wall_seconds);
    }
    std::printf("acceptance: %d passed, %d failed, %d inconclusive (outputs in %s)\n", n_pass,
                n_fail, n_flag, rr.out_dir.string().c_str());
    return rr.exit_code;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "acceptance: error: %s\n", e.what());
    return 1;
  }
}
