#include "flashthink/ft2.hpp"

#include <cmath>
#include <fstream>

#include "json.hpp"

#include "flashthink/errors.hpp"

namespace flashthink {

const char* label_name(Label label) {
    return label == Label::Positive ? "positive" : "negative";
}

Label label_for(bool prefix_correct, bool baseline_correct) {
    if (prefix_correct) return Label::Positive;
    return prefix_correct == baseline_correct ? Label::Positive : Label::Negative;
}

Label label_for_graded(double prefix_score, double baseline_score, bool prefix_correct,
                       double epsilon) {
    if (prefix_correct) return Label::Positive;
    return std::fabs(prefix_score - baseline_score) <= epsilon ? Label::Positive
                                                               : Label::Negative;
}

std::vector<PrefixResult> generate_prefix_answers(ModelClient& reasoner, const PromptRecord& x,
                                                  const std::vector<Chunk>& chunks,
                                                  const RunConfig& cfg, const AnswerScorer& scorer,
                                                  const Ft2Options& opts) {
    if (chunks.empty()) throw InvalidConfig("generate_prefix_answers: no chunks");
    if (opts.stride == 0) throw InvalidConfig("generate_prefix_answers: stride is 0");
    std::vector<PrefixResult> out;
    std::string prefix;
    std::size_t next_kept = 1;
    for (std::size_t i = 1; i <= chunks.size(); ++i) {
        prefix += chunks[i - 1].text;
        if (i != next_kept) continue;
        next_kept += opts.stride;

        PrefixResult r;
        r.prefix_len = i;
        r.prefix_text = prefix;
        try {
            r.answer = force_answer(reasoner, x, prefix, cfg);
            r.score = scorer(r.answer);
            r.correct = r.score >= opts.correct_threshold;
        } catch (const ReasonerError& e) {
            r.error = e.what();
        }
        out.push_back(std::move(r));
    }
    return out;
}

TrainingSample label_sample(const std::string& question, const PrefixResult& prefix,
                            bool baseline_correct, const std::string& benchmark,
                            const std::string& item_id) {
    TrainingSample s;
    s.question = question;
    s.thought_prefix = prefix.prefix_text;
    s.label = label_for(prefix.correct, baseline_correct);
    s.provenance = {benchmark, item_id, prefix.prefix_len, baseline_correct, prefix.correct};
    return s;
}

TrainingSample label_sample_graded(const std::string& question, const PrefixResult& prefix,
                                   double baseline_score, bool baseline_correct, double epsilon,
                                   const std::string& benchmark, const std::string& item_id) {
    TrainingSample s;
    s.question = question;
    s.thought_prefix = prefix.prefix_text;
    s.label = label_for_graded(prefix.score, baseline_score, prefix.correct, epsilon);
    s.provenance = {benchmark, item_id, prefix.prefix_len, baseline_correct, prefix.correct};
    return s;
}

std::size_t emit_dataset(const std::vector<TrainingSample>& samples, const PromptTemplate& tmpl,
                         const std::string& path) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("emit_dataset: cannot open " + path);
    for (const auto& s : samples) {
        nlohmann::json line = {
            {"input", render_prompt(tmpl, s.question, s.thought_prefix)},
            {"target", s.label == Label::Positive ? "yes" : "no"},
            {"meta",
             {{"benchmark", s.provenance.benchmark},
              {"item_id", s.provenance.item_id},
              {"prefix_len", s.provenance.prefix_len},
              {"baseline_correct", s.provenance.baseline_correct},
              {"prefix_correct", s.provenance.prefix_correct}}},
        };
        out << line.dump() << "\n";
    }
    out.flush();
    if (!out) throw IoError("emit_dataset: write failed for " + path);
    return samples.size();
}

}  // namespace flashthink
