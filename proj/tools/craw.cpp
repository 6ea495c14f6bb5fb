// Copyright 2026 The craw-gkm Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// craw: scenario runner and report tool.
//
//   craw run <scenario> [--out DIR] [--seed N] [--scheme S] [--override key=value]...
//   craw compare <dir>... [--out FILE]
//   craw validate <scenario>
//   craw report <dir>

#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "craw/report.hpp"
#include "craw/scenario.hpp"
#include "craw/simkit.hpp"

namespace {

constexpr int kExitInvalid = 2;

int cmd_run(const std::string& path, const std::string& out, std::optional<std::uint64_t> seed,
            const std::string& scheme, std::vector<std::string> overrides) {
  if (seed) overrides.push_back("seed=" + std::to_string(*seed));
  if (!scheme.empty()) overrides.push_back("schemes=[\"" + scheme + "\"]");
  auto j = craw::read_json_file(path);
  if (!scheme.empty()) j.erase("scheme");
  for (const auto& o : overrides) craw::apply_override(j, o);
  const auto s = craw::parse_scenario(j);

  const std::filesystem::path root(out);
  std::vector<craw::LabeledLedger> runs;
  for (auto k : s.schemes) {
    craw::Simulator sim(s, k);
    const auto& r = sim.run();
    const auto dir = s.schemes.size() == 1 ? root : root / std::string(craw::scheme_name(k));
    craw::write_run(dir, r);
    runs.push_back({std::string(craw::scheme_name(k)), r.ledger});
    std::cout << craw::scheme_name(k) << ": " << r.ledger.events.size() << " re-key events, " << r.trace.size()
              << " messages -> " << dir.string() << "\n";
  }
  if (runs.size() > 1) {
    craw::detail::write_file(root / "report.txt", craw::compare_report(runs));
    std::cout << "combined report -> " << (root / "report.txt").string() << "\n";
  }
  return 0;
}

int cmd_compare(const std::vector<std::string>& dirs, const std::string& out) {
  std::vector<craw::LabeledLedger> runs;
  for (const auto& d : dirs)
    for (const auto& r : craw::run_dirs(d)) runs.push_back({r.string(), craw::load_ledger(r)});
  if (runs.size() < 2) throw craw::ValidationError("dirs", "compare needs at least two runs");
  const auto text = craw::compare_report(runs);
  if (out.empty())
    std::cout << text;
  else
    craw::detail::write_file(out, text);
  return 0;
}

int cmd_validate(const std::string& path) {
  const auto s = craw::load_scenario(path);
  std::cout << path << ": ok (" << s.members.size() << " members, " << s.areas.size() << " areas, " << s.events.size()
            << " events, " << s.schemes.size() << " scheme" << (s.schemes.size() == 1 ? "" : "s") << ")\n";
  return 0;
}

int cmd_report(const std::string& dir) {
  std::cout << craw::render_report(craw::load_ledger(dir));
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"CRAW group key management simulator"};
  app.require_subcommand(1);

  std::string scenario, out = "out", scheme, compare_out;
  std::optional<std::uint64_t> seed;
  std::vector<std::string> overrides, dirs;

  auto* run = app.add_subcommand("run", "run a scenario and write its report bundle");
  run->add_option("scenario", scenario, "scenario JSON file")->required();
  run->add_option("--out", out, "output directory")->capture_default_str();
  run->add_option("--seed", seed, "override the scenario seed");
  run->add_option("--scheme", scheme, "run a single scheme")->check(CLI::IsMember({"ckc_craw", "ckc_plain", "lkh"}));
  run->add_option("--override", overrides, "key=value (dotted keys, e.g. delays.t_probe=0.02)");

  auto* cmp = app.add_subcommand("compare", "compare run directories");
  cmp->add_option("dirs", dirs, "run directories")->required();
  cmp->add_option("--out", compare_out, "write the comparison here instead of stdout");

  auto* val = app.add_subcommand("validate", "check a scenario file");
  val->add_option("scenario", scenario, "scenario JSON file")->required();

  std::string report_dir;
  auto* rep = app.add_subcommand("report", "re-render report.txt from a run directory");
  rep->add_option("dir", report_dir, "run directory")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (run->parsed()) return cmd_run(scenario, out, seed, scheme, overrides);
    if (cmp->parsed()) return cmd_compare(dirs, compare_out);
    if (val->parsed()) return cmd_validate(scenario);
    if (rep->parsed()) return cmd_report(report_dir);
  } catch (const craw::ValidationError& e) {
    std::cerr << "invalid: " << e.what() << "\n";
    return kExitInvalid;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
