#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "json.hpp"

namespace flashthink {

// How an item's answer is scored. The accuracy variants share the Accuracy
// metric with different extraction modes; F1 is the span-overlap metric.
enum class MetricMode { AccuracyExact, AccuracyNumeric, AccuracyChoice, F1 };

const char* metric_mode_name(MetricMode mode);
MetricMode metric_mode_from_name(const std::string& name);

struct Exemplar {
    std::string question;
    std::string answer;
    bool operator==(const Exemplar&) const = default;
};

struct BenchmarkItem {
    std::string id;
    std::string question;
    std::vector<std::string> golds;
    std::vector<Exemplar> exemplars;
    MetricMode metric = MetricMode::AccuracyExact;

    bool operator==(const BenchmarkItem&) const = default;
    void validate() const;
};

// Normalized line-delimited schema:
//   {"id": ..., "question": ..., "gold": [...], "metric": "exact|numeric|choice|f1",
//    "exemplars": [{"question": ..., "answer": ...}]}   (exemplars omitted when empty)
std::vector<BenchmarkItem> load_benchmark(const std::string& path);
void save_benchmark(const std::vector<BenchmarkItem>& items, const std::string& path);

BenchmarkItem parse_benchmark_line(const std::string& line, const std::string& origin);
nlohmann::json benchmark_item_json(const BenchmarkItem& item);

// Adapters from the public dataset layouts into the normalized schema.
BenchmarkItem from_gsm8k(const nlohmann::json& j, const std::string& id);
BenchmarkItem from_math(const nlohmann::json& j, const std::string& id);
// Multiple choice: options are shuffled deterministically from the seed so the
// gold letter is not always the same position.
BenchmarkItem from_gpqa(const nlohmann::json& j, const std::string& id, std::uint64_t seed);
BenchmarkItem from_drop(const nlohmann::json& j, const std::string& id);

// Draws n distinct exemplars from the train items with a fixed seed and
// attaches the same shots to every item (the few-shot setting).
void attach_exemplars(std::vector<BenchmarkItem>& items,
                      const std::vector<BenchmarkItem>& train, std::size_t n,
                      std::uint64_t seed);

// The user-facing prompt: exemplars as Question/Answer pairs, then the item.
std::string eval_prompt(const BenchmarkItem& item);

// Max over gold variants with the item's metric.
double score_item(const BenchmarkItem& item, const std::string& answer);

}  // namespace flashthink
