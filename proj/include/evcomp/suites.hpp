#pragma once

#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "evcomp/harness.hpp"

namespace evc {

// A named batch of conditions sharing one training config and seed list.
struct Suite {
  std::string name;
  TrainConfig cfg;
  std::vector<Condition> conditions;
  std::vector<unsigned long long> seeds;
};

// table1: single-net baselines (LSTM / MLP x four CI variants).
// table2: gated hierarchy, early-switch CI, the four gate modes.
// table3: the four gate modes under fixed(35) / random(20,50) / random(10,30).
// table4: surprise-to-context-layer, in-tune CI, and MLPf function layer,
//         each under closed / open / open-at-switch gates.
// Throws on an unknown name.
Suite make_suite(const std::string& which);

struct SuiteResult {
  Suite suite;
  // Condition-major, seed-minor; index = cond_idx * seeds.size() + seed_idx.
  // Order is independent of how many workers executed the runs.
  std::vector<RunResult> runs;
};

using ProgressFn = std::function<void(const RunResult&, int done, int total)>;

SuiteResult run_suite(const Suite& suite, int jobs,
                      const ProgressFn& progress = {});

// Writes runs.csv, summary.csv, distances.csv, centers.csv, curves/,
// traces/, checkpoints/ and manifest.json under out_dir.
void write_suite_outputs(const SuiteResult& result,
                         const std::filesystem::path& out_dir);

// The manifest captures everything needed to repeat a suite bit-for-bit.
std::string suite_to_manifest(const Suite& suite);
Suite suite_from_manifest(const std::string& json_text);

}  // namespace evc
