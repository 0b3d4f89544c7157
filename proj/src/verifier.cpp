#include "flashthink/verifier.hpp"

#include <cctype>

#include "flashthink/errors.hpp"

namespace flashthink {

namespace {

const char kInstruction[] =
    "Based on the following question and thought, please judge whether the thought is "
    "sufficient to support solving the question. Please directly output yes or no instead "
    "of outputting other content.";

std::string shared_body() {
    return std::string(kInstruction) + "\n### Question\n{question}\n### Thought\n{thought}";
}

// Note: the Qwen-2.5 prompt really does end in `<im_start>` without pipes;
// kept as-is rather than "fixed".
std::string qwen2_5_text() {
    return std::string("<|im_start|>system\n") +
           "You are Qwen, created by Alibaba Cloud. You are a helpful assistant.\n" +
           "<|im_end|>\n" +
           "<|im_start|>user\n" +
           shared_body() + "\n" +
           "<|im_end|>\n" +
           "<im_start>assistant";
}

std::string llama3_1_text() {
    return std::string("<|begin_of_text|><|start_header_id|>system<|end_header_id|>\n") +
           shared_body() + "\n" +
           "<|eot_id|><|start_header_id|>assistant<|end_header_id|>";
}

std::string mistral_text() {
    return std::string("<s>[INST]\n") + shared_body() + "\n[/INST]";
}

std::string qwen3_text() {
    return std::string("<|im_start|>user\n") +
           shared_body() + "\n" +
           "<|im_end|>\n" +
           "<|im_start|>assistant";
}

std::size_t count_occurrences(const std::string& text, const std::string& needle) {
    std::size_t count = 0;
    for (std::size_t at = text.find(needle); at != std::string::npos;
         at = text.find(needle, at + needle.size())) {
        ++count;
    }
    return count;
}

}  // namespace

const char* family_name(TemplateFamily f) {
    switch (f) {
        case TemplateFamily::Qwen2_5: return "qwen2.5";
        case TemplateFamily::Llama3_1: return "llama3.1";
        case TemplateFamily::Mistral: return "mistral";
        case TemplateFamily::Qwen3: return "qwen3";
        case TemplateFamily::Custom: return "custom";
    }
    return "unknown";
}

std::optional<TemplateFamily> family_from_name(std::string_view name) {
    std::string n;
    for (char ch : name) n += static_cast<char>(std::tolower(static_cast<unsigned char>(ch)));
    if (n == "qwen2.5" || n == "qwen2_5" || n == "qwen-2.5") return TemplateFamily::Qwen2_5;
    if (n == "llama3.1" || n == "llama3_1" || n == "llama-3.1") return TemplateFamily::Llama3_1;
    if (n == "mistral") return TemplateFamily::Mistral;
    if (n == "qwen3" || n == "qwen-3") return TemplateFamily::Qwen3;
    if (n == "custom") return TemplateFamily::Custom;
    return std::nullopt;
}

PromptTemplate PromptTemplate::builtin(TemplateFamily f) {
    PromptTemplate t;
    t.family = f;
    switch (f) {
        case TemplateFamily::Qwen2_5: t.template_text = qwen2_5_text(); break;
        case TemplateFamily::Llama3_1: t.template_text = llama3_1_text(); break;
        case TemplateFamily::Mistral: t.template_text = mistral_text(); break;
        case TemplateFamily::Qwen3: t.template_text = qwen3_text(); break;
        case TemplateFamily::Custom:
            throw InvalidConfig("custom family has no built-in template text");
    }
    return t;
}

PromptTemplate PromptTemplate::custom(std::string text) {
    if (count_occurrences(text, "{question}") != 1 || count_occurrences(text, "{thought}") != 1) {
        throw TemplateError("template must contain {question} and {thought} exactly once");
    }
    PromptTemplate t;
    t.family = TemplateFamily::Custom;
    t.template_text = std::move(text);
    return t;
}

std::string render_prompt(const PromptTemplate& tmpl, const std::string& question,
                          const std::string& thought) {
    const std::string& text = tmpl.template_text;
    std::size_t q_at = text.find("{question}");
    std::size_t t_at = text.find("{thought}");
    if (q_at == std::string::npos) throw TemplateError("template is missing {question}");
    if (t_at == std::string::npos) throw TemplateError("template is missing {thought}");

    struct Slot {
        std::size_t pos;
        std::size_t len;
        const std::string* value;
    };
    Slot first{q_at, sizeof("{question}") - 1, &question};
    Slot second{t_at, sizeof("{thought}") - 1, &thought};
    if (first.pos > second.pos) std::swap(first, second);

    std::string out;
    out.reserve(text.size() + question.size() + thought.size());
    out.append(text, 0, first.pos);
    out += *first.value;
    out.append(text, first.pos + first.len, second.pos - (first.pos + first.len));
    out += *second.value;
    out.append(text, second.pos + second.len, std::string::npos);
    return out;
}

const char* parse_status_name(ParseStatus s) {
    switch (s) {
        case ParseStatus::Clean: return "clean";
        case ParseStatus::Salvaged: return "salvaged";
        case ParseStatus::Unparseable: return "unparseable";
    }
    return "unknown";
}

VerifierDecision parse_decision(const std::string& raw) {
    VerifierDecision d;
    d.raw_output = raw;

    // Words are maximal alphanumeric runs, lowercased; "No." parses as "no",
    // "yes2" does not parse as "yes".
    bool first = true;
    std::string word;
    auto classify = [&](const std::string& w) -> std::optional<bool> {
        if (w == "yes") return true;
        if (w == "no") return false;
        return std::nullopt;
    };
    auto flush = [&]() -> bool {  // returns true when decided
        if (word.empty()) return false;
        auto polarity = classify(word);
        word.clear();
        if (polarity) {
            d.exit_now = *polarity;
            d.parse_status = first ? ParseStatus::Clean : ParseStatus::Salvaged;
            return true;
        }
        first = false;
        return false;
    };
    for (char ch : raw) {
        if (std::isalnum(static_cast<unsigned char>(ch))) {
            word += static_cast<char>(std::tolower(static_cast<unsigned char>(ch)));
        } else if (flush()) {
            return d;
        }
    }
    if (flush()) return d;

    d.exit_now = false;
    d.parse_status = ParseStatus::Unparseable;
    return d;
}

VerifierDecision verify(const std::string& question, const std::string& thought_prefix,
                        const PromptTemplate& tmpl, ModelClient& client,
                        const VerifyParams& params) {
    GenerationRequest req;
    req.raw_context = render_prompt(tmpl, question, thought_prefix);
    req.sampling.temperature = params.temperature;
    req.sampling.max_tokens = params.max_tokens;
    req.stream = false;
    GenerationResult result = generate_text(client, req);
    return parse_decision(result.text);
}

}  // namespace flashthink
