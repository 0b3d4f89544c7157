#pragma once

#include <cstddef>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

#include "flashthink/dataset.hpp"
#include "flashthink/orchestrator.hpp"
#include "flashthink/verifier.hpp"

namespace flashthink {

enum class BenchMode { Baseline, Flashthink, Both };

const char* bench_mode_name(BenchMode mode);
BenchMode bench_mode_from_name(const std::string& name);

struct ItemOutcome {
    std::string id;
    double score = 0.0;
    std::size_t baseline_tokens = 0;  // 0 unless a baseline ran for this item
    std::size_t method_tokens = 0;
    std::size_t chunks_kept = 0;
    std::size_t verifier_calls = 0;
    std::string exit_kind;
    std::optional<double> efficiency;  // paired runs only
    std::string error;
};

struct EvalReport {
    BenchMode mode = BenchMode::Baseline;
    std::vector<ItemOutcome> items;  // sorted by id
    double mean_score_x100 = 0.0;    // presentation scale
    std::optional<double> mean_efficiency;
    std::map<std::string, std::size_t> exit_kind_counts;
    std::size_t failures = 0;
};

struct BenchOptions {
    BenchMode mode = BenchMode::Flashthink;
    std::size_t workers = 4;
};

// Evaluates every item, bounded-parallel, results ordered by item id. The
// verifier client and template may be null in Baseline mode. Per-item upstream
// failures are recorded on the row (score 0) and the run continues.
EvalReport run_bench(ModelClient& reasoner, ModelClient* verifier, const PromptTemplate* tmpl,
                     const std::vector<BenchmarkItem>& items, const RunConfig& cfg,
                     const BenchOptions& opts);

// Recomputes the aggregate fields from the rows (loaders and tests use this to
// check report integrity).
void recompute_aggregates(EvalReport& report);

nlohmann::json report_json(const EvalReport& report);

// Deterministic bytes for identical reports. Throws IoError.
void write_report(const EvalReport& report, const std::string& path);

}  // namespace flashthink
