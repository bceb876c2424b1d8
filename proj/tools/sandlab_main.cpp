// Command-line front end: run named experiments or custom configs, list the
// catalog, validate configs, export toppling matrices.

#include <cstdio>
#include <exception>
#include <iostream>
#include <string>

#include "CLI11.hpp"

#include "sandlab/harness.hpp"
#include "sandlab/io.hpp"

namespace {

int cmd_run(const std::string& spec) {
  const auto config = sandlab::harness::load_config(spec);
  const auto rr = sandlab::harness::run(config);
  for (const auto& er : rr.experiments) {
    std::printf("%s  %s  (%.2f s)\n", er.id.c_str(), er.title.c_str(), er.wall_seconds);
    for (const auto& c : er.checks) {
      const char* tag = c.inconclusive ? "INCONCLUSIVE" : (c.pass ? "PASS" : "FAIL");
      std::printf("  [%s] %s%s%s\n", tag, c.name.c_str(), c.detail.empty() ? "" : " -- ",
                  c.detail.c_str());
    }
  }
  std::printf("outputs under %s (manifest.json, summary.txt)\n", rr.out_dir.string().c_str());
  return rr.exit_code;
}

int cmd_list() {
  for (const auto& e : sandlab::harness::list_experiments())
    std::printf("%-10s  %-40s %s\n", e.id.c_str(), e.title.c_str(), e.description.c_str());
  return 0;
}

int cmd_validate(const std::string& spec) {
  const auto config = sandlab::harness::load_config(spec);
  const auto problems = sandlab::harness::validate(config);
  if (problems.empty()) {
    std::printf("config ok: experiment %s\n", config.at("experiment").get<std::string>().c_str());
    return 0;
  }
  for (const auto& p : problems) std::fprintf(stderr, "invalid: %s\n", p.c_str());
  return 1;
}

int cmd_export(const std::string& spec) {
  const auto config = sandlab::harness::load_config(spec);
  std::fputs(sandlab::harness::export_matrix_text(config).c_str(), stdout);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"sandlab: sandpile and avalanche diagnostics"};
  app.require_subcommand(1);

  std::string run_spec, validate_spec, export_spec;
  auto* run = app.add_subcommand("run", "run an experiment id (E1..E7, properties, all) or config file");
  run->add_option("config", run_spec, "experiment id or JSON config path")->required();
  auto* list = app.add_subcommand("list", "list the experiment catalog");
  auto* validate = app.add_subcommand("validate", "validate a config without running it");
  validate->add_option("config", validate_spec, "experiment id or JSON config path")->required();
  auto* export_matrix = app.add_subcommand("export-matrix", "print the configured toppling matrix");
  export_matrix->add_option("config", export_spec, "experiment id or JSON config path")->required();

  CLI11_PARSE(app, argc, argv);
  try {
    if (run->parsed()) return cmd_run(run_spec);
    if (list->parsed()) return cmd_list();
    if (validate->parsed()) return cmd_validate(validate_spec);
    if (export_matrix->parsed()) return cmd_export(export_spec);
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
