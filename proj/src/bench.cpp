#include "flashthink/bench.hpp"

#include <algorithm>
#include <atomic>
#include <fstream>
#include <thread>

#include "flashthink/errors.hpp"
#include "flashthink/metrics.hpp"

namespace flashthink {

const char* bench_mode_name(BenchMode mode) {
    switch (mode) {
        case BenchMode::Baseline: return "baseline";
        case BenchMode::Flashthink: return "flashthink";
        case BenchMode::Both: return "both";
    }
    return "baseline";
}

BenchMode bench_mode_from_name(const std::string& name) {
    if (name == "baseline") return BenchMode::Baseline;
    if (name == "flashthink") return BenchMode::Flashthink;
    if (name == "both") return BenchMode::Both;
    throw InvalidConfig("unknown bench mode '" + name + "'");
}

namespace {

PromptRecord record_for(const BenchmarkItem& item) {
    PromptRecord x;
    x.question = item.question;
    if (!item.exemplars.empty()) x.messages = {{"user", eval_prompt(item)}};
    return x;
}

ItemOutcome evaluate_item(ModelClient& reasoner, ModelClient* verifier,
                          const PromptTemplate* tmpl, const BenchmarkItem& item,
                          const RunConfig& cfg, BenchMode mode) {
    ItemOutcome row;
    row.id = item.id;
    PromptRecord x = record_for(item);

    FlashThinkResult method;
    if (mode == BenchMode::Baseline) {
        method = run_baseline(reasoner, x, cfg);
    } else {
        method = run_flashthink(reasoner, *verifier, *tmpl, x, cfg);
    }
    row.method_tokens = method.reasoning_tokens;
    row.chunks_kept = method.chunks_kept;
    row.verifier_calls = method.verifier_calls;
    row.exit_kind = exit_kind_name(method.exit_kind);
    if (method.exit_kind == ExitKind::Error) {
        row.error = method.error_detail.empty() ? "upstream failure" : method.error_detail;
        return row;
    }
    row.score = score_item(item, method.answer);

    if (mode == BenchMode::Both) {
        FlashThinkResult base = run_baseline(reasoner, x, cfg);
        if (base.exit_kind == ExitKind::Error) {
            row.error = "baseline: " +
                        (base.error_detail.empty() ? std::string("upstream failure")
                                                   : base.error_detail);
            return row;
        }
        row.baseline_tokens = base.reasoning_tokens;
        if (base.reasoning_tokens > 0)
            row.efficiency =
                efficiency(base.reasoning_tokens, method.reasoning_tokens).efficiency;
    }
    return row;
}

}  // namespace

EvalReport run_bench(ModelClient& reasoner, ModelClient* verifier, const PromptTemplate* tmpl,
                     const std::vector<BenchmarkItem>& items, const RunConfig& cfg,
                     const BenchOptions& opts) {
    if (opts.mode != BenchMode::Baseline && (verifier == nullptr || tmpl == nullptr))
        throw InvalidConfig("run_bench: flashthink modes need a verifier and template");
    if (opts.workers == 0) throw InvalidConfig("run_bench: zero workers");

    EvalReport report;
    report.mode = opts.mode;
    report.items.resize(items.size());

    std::atomic<std::size_t> next{0};
    auto worker = [&] {
        while (true) {
            std::size_t i = next.fetch_add(1);
            if (i >= items.size()) return;
            try {
                report.items[i] =
                    evaluate_item(reasoner, verifier, tmpl, items[i], cfg, opts.mode);
            } catch (const std::exception& e) {
                report.items[i].id = items[i].id;
                report.items[i].exit_kind = exit_kind_name(ExitKind::Error);
                report.items[i].error = e.what();
            }
        }
    };
    std::size_t n = std::min(opts.workers, items.empty() ? std::size_t{1} : items.size());
    std::vector<std::thread> pool;
    for (std::size_t i = 0; i < n; ++i) pool.emplace_back(worker);
    for (auto& t : pool) t.join();

    std::sort(report.items.begin(), report.items.end(),
              [](const ItemOutcome& a, const ItemOutcome& b) { return a.id < b.id; });
    recompute_aggregates(report);
    return report;
}

void recompute_aggregates(EvalReport& report) {
    report.exit_kind_counts.clear();
    report.failures = 0;
    long double score_sum = 0, eff_sum = 0;
    std::size_t eff_n = 0;
    for (const auto& row : report.items) {
        score_sum += row.score;
        if (!row.exit_kind.empty()) ++report.exit_kind_counts[row.exit_kind];
        if (!row.error.empty()) ++report.failures;
        if (row.efficiency) {
            eff_sum += *row.efficiency;
            ++eff_n;
        }
    }
    report.mean_score_x100 =
        report.items.empty()
            ? 0.0
            : static_cast<double>(score_sum / static_cast<long double>(report.items.size())) *
                  100.0;
    if (eff_n > 0)
        report.mean_efficiency = static_cast<double>(eff_sum / static_cast<long double>(eff_n));
    else
        report.mean_efficiency.reset();
}

nlohmann::json report_json(const EvalReport& report) {
    nlohmann::json items = nlohmann::json::array();
    for (const auto& row : report.items) {
        nlohmann::json j = {
            {"id", row.id},
            {"score", row.score},
            {"method_tokens", row.method_tokens},
            {"chunks_kept", row.chunks_kept},
            {"verifier_calls", row.verifier_calls},
            {"exit_kind", row.exit_kind},
        };
        if (report.mode == BenchMode::Both) j["baseline_tokens"] = row.baseline_tokens;
        if (row.efficiency) j["efficiency"] = *row.efficiency;
        if (!row.error.empty()) j["error"] = row.error;
        items.push_back(std::move(j));
    }
    nlohmann::json out = {
        {"mode", bench_mode_name(report.mode)},
        {"items", items},
        {"mean_score_x100", report.mean_score_x100},
        {"exit_kind_counts", report.exit_kind_counts},
        {"failures", report.failures},
    };
    if (report.mean_efficiency) out["mean_efficiency"] = *report.mean_efficiency;
    return out;
}

void write_report(const EvalReport& report, const std::string& path) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write report file " + path);
    out << report_json(report).dump(2) << "\n";
    if (!out) throw IoError("write failed for " + path);
}

}  // namespace flashthink
