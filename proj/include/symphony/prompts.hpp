#pragma once

#include <string>
#include <string_view>

#include "symphony/errors.hpp"
#include "symphony/util.hpp"

namespace symphony::prompts {

// Stage-specific prompt templates. The decomposition and execution templates
// are the contract the engines are driven with; data/prompts/ ships the same
// text as standalone files and node config may point at replacements.
//
// Placeholders are replaced by exact substring match: {user_input},
// {context}, {instruction}. Everything else is literal, including the
// $\boxed{<Answer>}$ markers.

inline constexpr std::string_view kDecomposition =
    R"PROMPT(You are a problem decomposer, not a solver. Your task is to break down a complex math or logic problem into a sequence of strictly computable sub-questions. Each sub-question must represent a well-defined, executable step toward solving the original problem.

Each subtask must be phrased as a question. Do not solve the problem or output the final answer.

You MUST strictly output the result in the following **valid JSON** format:

Output:
{
"original_question": "<repeat the original question>",
"subtasks": [
    "Q1: ...",
    "Q2: ...",
    ...
]
}

Important Rules:

- Do NOT include any final answer, intermediate answer, or numerical result.
- Do NOT perform or explain any computation.
- Do NOT include any text outside the JSON object.
- Each subtask must be directly computable (e.g., calculate a value, rewrite an expression, identify a condition).
- Use clear and concise language appropriate for step-by-step problem solving.

Here are some examples:

Example 1:
Input: One root of the equation $5x^2+kx=4$ is 2. What is the other?

Output:
{
  "original_question": "One root of the equation $5x^2+kx=4$ is 2. What is the other?",
  "subtasks": [
    "Q1: What is the equation rewritten in standard quadratic form?",
    "Q2: What is the product of the roots of this quadratic equation?",
    "Q3: Given one root is 2, what is the other root?"
  ]
}

Do NOT include any explanation, prefix, or suffix before or after the JSON. Output ONLY the JSON object.

Now decompose the following problem:

Input: {user_input}

Output:)PROMPT";

inline constexpr std::string_view kExecution =
    R"PROMPT(You are given background information, including previous questions and answers, as well as relevant context. Based on this context, solve the current sub-task and provide the final answer formatted as $\boxed{<Answer>}$. Do not provide additional explanations or code.

Here are some examples:

Example 1:
Input: Background information include: "Consider two positive even integers less than $15$ (not necessarily distinct)". Based on the background information, solve the sub-task: "What are the possible values for the two positive even integers less than 15?". Provide the final answer formatted as $\boxed{<Answer>}$. Do not provide additional explanations or code.

Output: $\boxed{2, 4, 6, 8, 10, 12, 14}$

Example 2:
Input: Background information include: "If $23=x^4+\frac{1}{x^4}$. Q1: How can we express $x^4 + \frac{1}{x^4}$ in terms of $x^2 + \frac{1}{x^2}$? Answer: $\boxed{(x^2 + \frac{1}{x^2})^2 - 2}$". Based on the background information, solve the sub-task: "Q2: Given that $23 = x^4 + \frac{1}{x^4}$, what is the value of $x^2 + \frac{1}{x^2}$?". Provide the final answer formatted as $\boxed{<Answer>}$. Do not provide additional explanations or code.

Output: $\boxed{5}$

DO NOT provide additional explanations or code.

Here is the current sub-task:

Input: Background information include: "{context}". 
Based on the background information, solve the sub-task: "{instruction}". 
Provide the final answer formatted as $\boxed{<Answer>}$. 
Do not provide additional explanations or code. Output:)PROMPT";

// The background-extraction step has no published template; this one keeps
// the instruction minimal and reuses the Input/Output framing.
inline constexpr std::string_view kBackground =
    R"PROMPT(Restate only the given facts of the problem. Do not solve it, do not add commentary.

Input: {user_input}

Output:)PROMPT";

inline std::string replace_all(std::string text, std::string_view placeholder,
                               std::string_view value) {
    std::size_t pos = 0;
    while ((pos = text.find(placeholder, pos)) != std::string::npos) {
        text.replace(pos, placeholder.size(), value);
        pos += value.size();
    }
    return text;
}

struct PromptSet {
    std::string background{kBackground};
    std::string decomposition{kDecomposition};
    std::string execution{kExecution};

    static PromptSet builtin() { return PromptSet{}; }

    // Loads replacements from files; empty paths keep the shipped template.
    // A single trailing newline is stripped so file-backed templates render
    // identically to the embedded ones.
    static PromptSet load(const std::string& background_path,
                          const std::string& decomposition_path,
                          const std::string& execution_path) {
        auto read = [](const std::string& path, std::string_view fallback) {
            if (path.empty()) return std::string(fallback);
            std::string text = util::read_file(path);
            if (!text.empty() && text.back() == '\n') text.pop_back();
            return text;
        };
        PromptSet p;
        p.background = read(background_path, kBackground);
        p.decomposition = read(decomposition_path, kDecomposition);
        p.execution = read(execution_path, kExecution);
        return p;
    }

    std::string render_background(std::string_view user_input) const {
        return replace_all(background, "{user_input}", user_input);
    }

    std::string render_decomposition(std::string_view user_input) const {
        return replace_all(decomposition, "{user_input}", user_input);
    }

    std::string render_execution(std::string_view context, std::string_view instruction) const {
        return replace_all(replace_all(execution, "{context}", context),
                           "{instruction}", instruction);
    }
};

} // namespace symphony::prompts
