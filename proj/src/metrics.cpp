#include "flashthink/metrics.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdlib>
#include <map>

#include "flashthink/errors.hpp"

namespace flashthink {

namespace {

bool is_article(const std::string& w) { return w == "a" || w == "an" || w == "the"; }

std::vector<std::string> tokenize(const std::string& s, bool drop_articles) {
    std::vector<std::string> out;
    std::string word;
    auto flush = [&] {
        if (!word.empty() && !(drop_articles && is_article(word))) out.push_back(word);
        word.clear();
    };
    for (unsigned char c : s) {
        if (std::isspace(c)) {
            flush();
        } else if (std::ispunct(c)) {
            continue;
        } else {
            word.push_back(static_cast<char>(std::tolower(c)));
        }
    }
    flush();
    return out;
}

std::string join(const std::vector<std::string>& words) {
    std::string out;
    for (const auto& w : words) {
        if (!out.empty()) out.push_back(' ');
        out += w;
    }
    return out;
}

// Strips decoration commonly wrapped around a final numeric answer.
std::string clean_numeric(std::string s) {
    std::string out;
    for (char c : s) {
        if (c == '$' || c == ',' || c == ' ' || c == '\t' || c == '\n') continue;
        out.push_back(c);
    }
    while (!out.empty() && out.back() == '.') out.pop_back();
    return out;
}

bool parse_number(const std::string& s, long double& value) {
    std::string cleaned = clean_numeric(s);
    if (cleaned.empty()) return false;
    const char* begin = cleaned.c_str();
    char* end = nullptr;
    errno = 0;
    long double v = std::strtold(begin, &end);
    if (errno != 0 || end != begin + cleaned.size()) return false;
    value = v;
    return true;
}

bool numeric_equal(long double a, long double b) {
    if (a == b) return true;
    long double scale = std::max(std::fabs(a), std::fabs(b));
    return std::fabs(a - b) <= 1.0e-9L * scale;
}

bool sign_position(const std::string& text, std::size_t i) {
    if (i == 0) return true;
    unsigned char prev = static_cast<unsigned char>(text[i - 1]);
    return std::isspace(prev) || prev == '=' || prev == '(' || prev == '{' || prev == '$' ||
           prev == ':';
}

}  // namespace

EfficiencyReport efficiency(std::size_t baseline_tokens, std::size_t method_tokens) {
    if (baseline_tokens == 0) throw ZeroBaseline("efficiency: baseline_tokens is 0");
    EfficiencyReport r;
    r.baseline_tokens = baseline_tokens;
    r.method_tokens = method_tokens;
    long double diff = static_cast<long double>(baseline_tokens) -
                       static_cast<long double>(method_tokens);
    r.efficiency = static_cast<double>(diff / static_cast<long double>(baseline_tokens));
    r.regression = method_tokens > baseline_tokens;
    return r;
}

std::string normalize_answer(const std::string& s) { return join(tokenize(s, true)); }

std::vector<std::string> bag_tokens(const std::string& s) { return tokenize(s, false); }

std::string extract_boxed(const std::string& text) {
    std::size_t pos = text.rfind("\\boxed{");
    if (pos == std::string::npos) return "";
    std::size_t i = pos + 7;
    int depth = 1;
    std::string body;
    for (; i < text.size(); ++i) {
        char c = text[i];
        if (c == '{') ++depth;
        if (c == '}' && --depth == 0) return body;
        body.push_back(c);
    }
    return "";
}

std::string extract_final_number(const std::string& text) {
    std::string best;
    std::size_t i = 0;
    auto is_digit = [&](std::size_t k) {
        return k < text.size() && std::isdigit(static_cast<unsigned char>(text[k]));
    };
    while (i < text.size()) {
        std::size_t start = i;
        std::size_t j = i;
        if ((text[j] == '-' || text[j] == '+') && sign_position(text, j) &&
            (is_digit(j + 1) || (j + 1 < text.size() && text[j + 1] == '.' && is_digit(j + 2)))) {
            ++j;
        }
        if (!is_digit(j) && !(j < text.size() && text[j] == '.' && is_digit(j + 1))) {
            ++i;
            continue;
        }
        while (is_digit(j)) {
            ++j;
            if (j < text.size() && text[j] == ',' && is_digit(j + 1)) ++j;  // 1,850
        }
        if (j < text.size() && text[j] == '.' && is_digit(j + 1)) {
            ++j;
            while (is_digit(j)) ++j;
        }
        if (j < text.size() && (text[j] == 'e' || text[j] == 'E')) {
            std::size_t k = j + 1;
            if (k < text.size() && (text[k] == '+' || text[k] == '-')) ++k;
            if (is_digit(k)) {
                while (is_digit(k)) ++k;
                j = k;
            }
        }
        best = clean_numeric(text.substr(start, j - start));
        i = j;
    }
    return best;
}

std::string extract_choice_letter(const std::string& text) {
    std::string best;
    for (std::size_t i = 0; i < text.size(); ++i) {
        char c = text[i];
        char upper = static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
        if (upper < 'A' || upper > 'D') continue;
        bool left_ok = i == 0 || !std::isalnum(static_cast<unsigned char>(text[i - 1]));
        bool right_ok =
            i + 1 == text.size() || !std::isalnum(static_cast<unsigned char>(text[i + 1]));
        if (left_ok && right_ok) best = std::string(1, upper);
    }
    return best;
}

ScoreResult score_accuracy(const std::string& prediction, const std::string& gold,
                           ScoreMode mode) {
    if (gold.empty()) throw InvalidConfig("score_accuracy: empty gold");
    ScoreResult r;
    r.metric = Metric::Accuracy;
    switch (mode) {
        case ScoreMode::ExactNormalized: {
            r.normalized_prediction = normalize_answer(prediction);
            r.normalized_gold = normalize_answer(gold);
            r.value = (r.normalized_prediction == r.normalized_gold) ? 1.0 : 0.0;
            return r;
        }
        case ScoreMode::NumericEquivalence: {
            std::string p = extract_boxed(prediction);
            if (p.empty()) p = extract_final_number(prediction);
            std::string g = extract_boxed(gold);
            if (g.empty()) g = extract_final_number(gold);
            r.normalized_prediction = clean_numeric(p);
            r.normalized_gold = clean_numeric(g);
            long double pv = 0, gv = 0;
            if (p.empty() || !parse_number(p, pv)) {
                r.extraction_failed = true;
                r.failure_reason = "no numeric answer in prediction";
                return r;
            }
            if (g.empty() || !parse_number(g, gv)) {
                r.extraction_failed = true;
                r.failure_reason = "no numeric answer in gold";
                return r;
            }
            r.value = numeric_equal(pv, gv) ? 1.0 : 0.0;
            return r;
        }
        case ScoreMode::ChoiceLetter: {
            r.normalized_prediction = extract_choice_letter(prediction);
            r.normalized_gold = extract_choice_letter(gold);
            if (r.normalized_prediction.empty()) {
                r.extraction_failed = true;
                r.failure_reason = "no choice letter in prediction";
                return r;
            }
            if (r.normalized_gold.empty()) {
                r.extraction_failed = true;
                r.failure_reason = "no choice letter in gold";
                return r;
            }
            r.value = (r.normalized_prediction == r.normalized_gold) ? 1.0 : 0.0;
            return r;
        }
    }
    throw InvalidConfig("score_accuracy: unknown mode");
}

ScoreResult score_f1(const std::string& prediction, const std::string& gold) {
    if (gold.empty()) throw InvalidConfig("score_f1: empty gold");
    ScoreResult r;
    r.metric = Metric::F1;
    r.normalized_prediction = normalize_answer(prediction);
    r.normalized_gold = normalize_answer(gold);
    if (r.normalized_prediction == r.normalized_gold && !r.normalized_gold.empty()) {
        r.value = 1.0;
        return r;
    }
    auto pred = bag_tokens(prediction);
    auto gd = bag_tokens(gold);
    if (pred.empty() || gd.empty()) {
        r.value = 0.0;
        return r;
    }
    std::map<std::string, std::size_t> counts;
    for (const auto& t : gd) ++counts[t];
    std::size_t overlap = 0;
    for (const auto& t : pred) {
        auto it = counts.find(t);
        if (it != counts.end() && it->second > 0) {
            --it->second;
            ++overlap;
        }
    }
    if (overlap == 0) {
        r.value = 0.0;
        return r;
    }
    double precision = static_cast<double>(overlap) / static_cast<double>(pred.size());
    double recall = static_cast<double>(overlap) / static_cast<double>(gd.size());
    r.value = 2.0 * precision * recall / (precision + recall);
    return r;
}

ScoreResult best_score(const std::string& prediction, const std::vector<std::string>& golds,
                       Metric metric, ScoreMode mode) {
    if (golds.empty()) throw EmptySet("best_score: no gold answers");
    ScoreResult best;
    bool first = true;
    for (const auto& g : golds) {
        ScoreResult r = metric == Metric::F1 ? score_f1(prediction, g)
                                             : score_accuracy(prediction, g, mode);
        if (first || r.value > best.value) {
            best = r;
            first = false;
        }
    }
    return best;
}

double aggregate_pass_at_1(const std::vector<double>& scores) {
    if (scores.empty()) throw EmptySet("aggregate_pass_at_1: empty score list");
    long double sum = 0;
    for (double s : scores) {
        if (s < 0.0 || s > 1.0) throw InvalidConfig("aggregate_pass_at_1: score outside [0,1]");
        sum += s;
    }
    return static_cast<double>(sum / static_cast<long double>(scores.size()));
}

}  // namespace flashthink
