#pragma once

#include <cstddef>
#include <string>
#include <vector>

namespace flashthink {

struct EfficiencyReport {
    std::size_t baseline_tokens = 0;
    std::size_t method_tokens = 0;
    double efficiency = 0.0;
    // True when the method used more tokens than the baseline (efficiency < 0).
    bool regression = false;
};

// (baseline - method) / baseline. Throws ZeroBaseline when baseline is 0.
EfficiencyReport efficiency(std::size_t baseline_tokens, std::size_t method_tokens);

enum class Metric { Accuracy, F1 };

enum class ScoreMode { ExactNormalized, NumericEquivalence, ChoiceLetter };

struct ScoreResult {
    Metric metric = Metric::Accuracy;
    double value = 0.0;
    std::string normalized_prediction;
    std::string normalized_gold;
    bool extraction_failed = false;
    std::string failure_reason;
};

// Lowercase, strip punctuation, drop the articles a/an/the, collapse whitespace.
std::string normalize_answer(const std::string& s);

// Lowercase + strip punctuation + split on whitespace. Articles are kept:
// they only vanish in the exact-match normalization above.
std::vector<std::string> bag_tokens(const std::string& s);

ScoreResult score_accuracy(const std::string& prediction, const std::string& gold,
                           ScoreMode mode);

ScoreResult score_f1(const std::string& prediction, const std::string& gold);

// Max over gold variants; empty gold list throws EmptySet.
ScoreResult best_score(const std::string& prediction, const std::vector<std::string>& golds,
                       Metric metric, ScoreMode mode = ScoreMode::ExactNormalized);

// Arithmetic mean of single-sample scores. Throws EmptySet on an empty list and
// InvalidConfig if any score falls outside [0, 1].
double aggregate_pass_at_1(const std::vector<double>& scores);

// Extraction helpers, exposed for tests and dataset tooling. Each returns an
// empty string when nothing matches.
std::string extract_boxed(const std::string& text);
std::string extract_final_number(const std::string& text);
std::string extract_choice_letter(const std::string& text);

}  // namespace flashthink
