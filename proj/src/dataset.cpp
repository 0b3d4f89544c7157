#include "flashthink/dataset.hpp"

#include <algorithm>
#include <fstream>
#include <random>

#include "flashthink/errors.hpp"
#include "flashthink/metrics.hpp"

namespace flashthink {

namespace {

std::string trim(const std::string& s) {
    std::size_t b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return "";
    std::size_t e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
}

std::string require_string(const nlohmann::json& j, const char* key, const std::string& origin) {
    if (!j.contains(key) || !j[key].is_string())
        throw DatasetFormatError(origin + ": missing string field '" + key + "'");
    return j[key].get<std::string>();
}

}  // namespace

const char* metric_mode_name(MetricMode mode) {
    switch (mode) {
        case MetricMode::AccuracyExact: return "exact";
        case MetricMode::AccuracyNumeric: return "numeric";
        case MetricMode::AccuracyChoice: return "choice";
        case MetricMode::F1: return "f1";
    }
    return "exact";
}

MetricMode metric_mode_from_name(const std::string& name) {
    if (name == "exact") return MetricMode::AccuracyExact;
    if (name == "numeric") return MetricMode::AccuracyNumeric;
    if (name == "choice") return MetricMode::AccuracyChoice;
    if (name == "f1") return MetricMode::F1;
    throw DatasetFormatError("unknown metric mode '" + name + "'");
}

void BenchmarkItem::validate() const {
    if (id.empty()) throw DatasetFormatError("benchmark item with empty id");
    if (question.empty()) throw DatasetFormatError(id + ": empty question");
    if (golds.empty()) throw DatasetFormatError(id + ": no gold answers");
    for (const auto& g : golds)
        if (g.empty()) throw DatasetFormatError(id + ": empty gold answer");
}

BenchmarkItem parse_benchmark_line(const std::string& line, const std::string& origin) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
        throw DatasetFormatError(origin + ": " + e.what());
    }
    BenchmarkItem item;
    item.id = require_string(j, "id", origin);
    item.question = require_string(j, "question", origin);
    if (!j.contains("gold")) throw DatasetFormatError(origin + ": missing 'gold'");
    if (j["gold"].is_string()) {
        item.golds.push_back(j["gold"].get<std::string>());
    } else if (j["gold"].is_array()) {
        for (const auto& g : j["gold"]) {
            if (!g.is_string()) throw DatasetFormatError(origin + ": non-string gold entry");
            item.golds.push_back(g.get<std::string>());
        }
    } else {
        throw DatasetFormatError(origin + ": 'gold' must be string or array");
    }
    item.metric = metric_mode_from_name(require_string(j, "metric", origin));
    if (j.contains("exemplars")) {
        if (!j["exemplars"].is_array())
            throw DatasetFormatError(origin + ": 'exemplars' must be an array");
        for (const auto& e : j["exemplars"]) {
            Exemplar ex;
            ex.question = require_string(e, "question", origin);
            ex.answer = require_string(e, "answer", origin);
            item.exemplars.push_back(std::move(ex));
        }
    }
    try {
        item.validate();
    } catch (const DatasetFormatError& e) {
        throw DatasetFormatError(origin + ": " + e.what());
    }
    return item;
}

nlohmann::json benchmark_item_json(const BenchmarkItem& item) {
    nlohmann::json j;
    j["id"] = item.id;
    j["question"] = item.question;
    j["gold"] = item.golds;
    j["metric"] = metric_mode_name(item.metric);
    if (!item.exemplars.empty()) {
        nlohmann::json exs = nlohmann::json::array();
        for (const auto& e : item.exemplars)
            exs.push_back({{"question", e.question}, {"answer", e.answer}});
        j["exemplars"] = exs;
    }
    return j;
}

std::vector<BenchmarkItem> load_benchmark(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open benchmark file " + path);
    std::vector<BenchmarkItem> items;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (trim(line).empty()) continue;
        items.push_back(parse_benchmark_line(line, path + ":" + std::to_string(lineno)));
    }
    return items;
}

void save_benchmark(const std::vector<BenchmarkItem>& items, const std::string& path) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write benchmark file " + path);
    for (const auto& item : items) out << benchmark_item_json(item).dump() << "\n";
    if (!out) throw IoError("write failed for " + path);
}

BenchmarkItem from_gsm8k(const nlohmann::json& j, const std::string& id) {
    BenchmarkItem item;
    item.id = id;
    item.question = require_string(j, "question", id);
    std::string answer = require_string(j, "answer", id);
    std::size_t pos = answer.rfind("#### ");
    if (pos == std::string::npos) throw DatasetFormatError(id + ": no '#### ' answer line");
    item.golds.push_back(trim(answer.substr(pos + 5)));
    item.metric = MetricMode::AccuracyNumeric;
    item.validate();
    return item;
}

BenchmarkItem from_math(const nlohmann::json& j, const std::string& id) {
    BenchmarkItem item;
    item.id = id;
    item.question = require_string(j, "problem", id);
    std::string boxed = extract_boxed(require_string(j, "solution", id));
    if (boxed.empty()) throw DatasetFormatError(id + ": solution has no boxed answer");
    item.golds.push_back(boxed);
    item.metric = MetricMode::AccuracyNumeric;
    item.validate();
    return item;
}

BenchmarkItem from_gpqa(const nlohmann::json& j, const std::string& id, std::uint64_t seed) {
    BenchmarkItem item;
    item.id = id;
    std::string question = require_string(j, "Question", id);
    std::vector<std::string> options = {
        require_string(j, "Correct Answer", id),
        require_string(j, "Incorrect Answer 1", id),
        require_string(j, "Incorrect Answer 2", id),
        require_string(j, "Incorrect Answer 3", id),
    };
    // Fisher-Yates on the raw mt19937 stream: uniform_int_distribution is not
    // portable across standard libraries, the engine output is.
    std::mt19937_64 rng(seed);
    std::vector<std::size_t> order = {0, 1, 2, 3};
    for (std::size_t i = order.size() - 1; i > 0; --i)
        std::swap(order[i], order[rng() % (i + 1)]);

    std::string rendered = question + "\n\nChoices:";
    for (std::size_t pos = 0; pos < order.size(); ++pos) {
        char letter = static_cast<char>('A' + pos);
        rendered += "\n(" + std::string(1, letter) + ") " + options[order[pos]];
        if (order[pos] == 0) item.golds.push_back(std::string(1, letter));
    }
    item.question = rendered;
    item.metric = MetricMode::AccuracyChoice;
    item.validate();
    return item;
}

BenchmarkItem from_drop(const nlohmann::json& j, const std::string& id) {
    BenchmarkItem item;
    item.id = id;
    item.question = require_string(j, "passage", id) + "\n" + require_string(j, "question", id);
    if (j.contains("answers_spans") && j["answers_spans"].contains("spans")) {
        for (const auto& s : j["answers_spans"]["spans"])
            if (s.is_string() && !s.get<std::string>().empty())
                item.golds.push_back(s.get<std::string>());
    }
    if (item.golds.empty() && j.contains("answer")) {
        const auto& a = j["answer"];
        if (a.contains("spans"))
            for (const auto& s : a["spans"])
                if (s.is_string() && !s.get<std::string>().empty())
                    item.golds.push_back(s.get<std::string>());
        if (item.golds.empty() && a.contains("number") && a["number"].is_string() &&
            !a["number"].get<std::string>().empty())
            item.golds.push_back(a["number"].get<std::string>());
    }
    item.metric = MetricMode::F1;
    item.validate();
    return item;
}

void attach_exemplars(std::vector<BenchmarkItem>& items,
                      const std::vector<BenchmarkItem>& train, std::size_t n,
                      std::uint64_t seed) {
    if (train.size() < n)
        throw InvalidConfig("attach_exemplars: train split smaller than shot count");
    std::vector<std::size_t> order(train.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::mt19937_64 rng(seed);
    for (std::size_t i = order.size() - 1; i > 0; --i)
        std::swap(order[i], order[rng() % (i + 1)]);

    std::vector<Exemplar> shots;
    for (std::size_t k = 0; k < n; ++k) {
        const auto& t = train[order[k]];
        shots.push_back({t.question, t.golds.front()});
    }
    for (auto& item : items) item.exemplars = shots;
}

std::string eval_prompt(const BenchmarkItem& item) {
    if (item.exemplars.empty()) return item.question;
    std::string out;
    for (const auto& e : item.exemplars)
        out += "Question: " + e.question + "\nAnswer: " + e.answer + "\n\n";
    out += "Question: " + item.question + "\nAnswer:";
    return out;
}

double score_item(const BenchmarkItem& item, const std::string& answer) {
    switch (item.metric) {
        case MetricMode::AccuracyExact:
            return best_score(answer, item.golds, Metric::Accuracy, ScoreMode::ExactNormalized)
                .value;
        case MetricMode::AccuracyNumeric:
            return best_score(answer, item.golds, Metric::Accuracy, ScoreMode::NumericEquivalence)
                .value;
        case MetricMode::AccuracyChoice:
            return best_score(answer, item.golds, Metric::Accuracy, ScoreMode::ChoiceLetter)
                .value;
        case MetricMode::F1:
            return best_score(answer, item.golds, Metric::F1).value;
    }
    return 0.0;
}

}  // namespace flashthink
