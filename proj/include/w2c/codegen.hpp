#pragma once

#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "w2c/datamodel.hpp"

namespace w2c::codegen {

/// What a code document carries. Compared field-exactly in round-trip checks.
struct CodeContent {
    std::string class_name;
    int width = 0;
    int height = 0;
    std::string global_caption;
    std::vector<AnnotatedGroup> groups;

    bool operator==(const CodeContent&) const = default;
};

struct CodeDocument {
    std::string text;
    CodeContent structure;
};

/// "Image_" followed by the id with every character outside [A-Za-z0-9_] replaced by '_'.
std::string class_name_for(std::string_view image_id);

/// Lowercase snake_case identifier for a concept name; throws SanitizationCollapse
/// when nothing identifier-worthy remains.
std::string sanitize_attribute(std::string_view name);

CodeContent content_of(const W2CRecord& record);

CodeDocument emit_code(const W2CRecord& record);

/// Throws CodeSyntaxError for text outside the grammar and SchemaError for
/// well-formed text of the wrong shape.
CodeContent parse_code(std::string_view text);

/// Double-quoted literal with JSON-style escaping of quote, backslash and
/// control characters; everything else is copied through.
std::string quote(std::string_view text);

struct Turn {
    std::string from;
    std::string value;

    bool operator==(const Turn&) const = default;
};

using Conversation = std::vector<Turn>;

Conversation emit_single_round(const W2CRecord& record);
Conversation emit_multi_round(const W2CRecord& record);
/// One human/gpt pair whose answer is the code document.
Conversation emit_code_round(const W2CRecord& record);
Conversation emit_conversation(const W2CRecord& record, OutputFormat format);

/// {"id", "image", "conversations": [{"from", "value"}, ...]}
nlohmann::ordered_json conversation_to_json(const W2CRecord& record, const Conversation& conversation);

struct Shot {
    std::string description;
    std::string question;
    std::string answer;
};

inline constexpr std::string_view kShotDelimiter = "\n\n###\n\n";

/// Shots in order, then the query with an empty answer slot. Throws
/// std::invalid_argument when `shots` is empty.
std::string build_few_shot_prompt(const std::vector<Shot>& shots, std::string_view query_description,
                                  std::string_view query_question);

} // namespace w2c::codegen
