#pragma once

#include <optional>
#include <string>
#include <string_view>

#include "flashthink/client.hpp"

namespace flashthink {

enum class TemplateFamily { Qwen2_5, Llama3_1, Mistral, Qwen3, Custom };

const char* family_name(TemplateFamily f);
std::optional<TemplateFamily> family_from_name(std::string_view name);

// A verification prompt with {question} and {thought} placeholders, each
// appearing exactly once.
struct PromptTemplate {
    TemplateFamily family = TemplateFamily::Custom;
    std::string template_text;

    static PromptTemplate builtin(TemplateFamily f);  // InvalidConfig for Custom
    static PromptTemplate custom(std::string text);   // TemplateError if placeholders are off
};

// Substitutes the placeholders at their positions in the template; the
// substituted strings are inserted verbatim, so placeholder-looking text
// inside them is inert.
std::string render_prompt(const PromptTemplate& tmpl, const std::string& question,
                          const std::string& thought);

enum class ParseStatus { Clean, Salvaged, Unparseable };
const char* parse_status_name(ParseStatus s);

struct VerifierDecision {
    bool exit_now = false;
    std::string raw_output;
    ParseStatus parse_status = ParseStatus::Unparseable;
};

// Total function: first word yes/no parses Clean; a standalone yes/no later
// in the output is Salvaged; anything else is Unparseable and means continue.
VerifierDecision parse_decision(const std::string& raw);

struct VerifyParams {
    double temperature = 0.0;
    int max_tokens = 8;
};

// Issues exactly one generation request with the rendered prompt and parses
// the output. Throws BackendError on upstream failure.
VerifierDecision verify(const std::string& question, const std::string& thought_prefix,
                        const PromptTemplate& tmpl, ModelClient& client,
                        const VerifyParams& params = {});

}  // namespace flashthink
