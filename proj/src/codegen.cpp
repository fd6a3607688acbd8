#include "w2c/codegen.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <charconv>
#include <limits>
#include <optional>
#include <set>
#include <stdexcept>
#include <variant>

#include "w2c/errors.hpp"

namespace w2c::codegen {

namespace {

constexpr std::array kPythonKeywords = {
    "false", "none",   "true",  "and",    "as",       "assert", "async",  "await", "break",
    "class", "continue", "def", "del",    "elif",     "else",   "except", "finally", "for",
    "from",  "global", "if",    "import", "in",       "is",     "lambda", "nonlocal", "not",
    "or",    "pass",   "raise", "return", "try",      "while",  "with",   "yield", "match", "case"};

constexpr std::string_view kIndent = "    ";

bool is_keyword(std::string_view word) {
    return std::find(kPythonKeywords.begin(), kPythonKeywords.end(), word) != kPythonKeywords.end();
}

std::string default_name_for(std::string_view attribute) {
    std::string name(attribute);
    std::replace(name.begin(), name.end(), '_', ' ');
    return name;
}

void append_box(std::string& out, const BoundingBox& box) {
    out += '[';
    out += std::to_string(box.x1) + ", " + std::to_string(box.y1) + ", " + std::to_string(box.x2) + ", " +
           std::to_string(box.y2);
    out += ']';
}

std::string mapping_literal(const ConceptAnnotation& item) {
    std::string out = "{\"caption\": " + quote(item.caption);
    if (item.text) out += ", \"text\": " + quote(*item.text);
    out += ", \"bbox\": ";
    append_box(out, item.box);
    out += '}';
    return out;
}

std::string box_text(const BoundingBox& box) {
    std::string out;
    append_box(out, box);
    return out;
}

std::string item_line(const ConceptAnnotation& item) {
    std::string line = box_text(item.box) + ": " + item.caption;
    if (item.text) line += " Text: \"" + *item.text + "\"";
    return line;
}

// ---------------------------------------------------------------------------
// Parser for the emitted Python subset.

struct Value {
    struct Dict {
        std::vector<std::pair<std::string, Value>> entries;
    };
    std::variant<std::string, long long, std::vector<Value>, Dict> data;
    int line = 0;
    int column = 0;
};

class Parser {
  public:
    explicit Parser(std::string_view text) : text_(text) {}

    CodeContent document() {
        skip_blank_lines();
        if (at_end()) fail("expected a class definition");
        if (column_ != 1) fail("class definition must not be indented");
        expect_word("class");
        skip_inline_ws();
        CodeContent content;
        content.class_name = identifier();
        skip_inline_ws();
        expect(':');
        end_of_line(nullptr);

        skip_blank_lines();
        if (at_end() || !indented_line()) fail("expected an indented docstring");
        skip_inline_ws();
        if (peek() != '"') fail("expected the class docstring");
        content.global_caption = string_literal();
        end_of_line(nullptr);

        std::optional<int> width;
        std::optional<int> height;
        std::set<std::string> attributes;
        while (true) {
            skip_blank_lines();
            if (at_end()) break;
            if (!indented_line()) fail("only one class per document");
            skip_inline_ws();
            int attr_line = line_;
            auto attribute = identifier();
            if (!attributes.insert(attribute).second)
                throw SchemaError("line " + std::to_string(attr_line) + ": duplicate attribute '" + attribute + "'");
            skip_inline_ws();
            expect('=');
            skip_inline_ws();
            Value value = literal();
            skip_inline_ws();
            if (!at_end() && std::string_view("+-*/%@&|^<>(.").find(peek()) != std::string_view::npos)
                throw SchemaError(where(line_, column_) + "attribute '" + attribute + "' is not a plain literal");
            std::optional<std::string> comment;
            end_of_line(&comment);

            if (attribute == "width" || attribute == "height") {
                int dim = as_int(value, attribute);
                (attribute == "width" ? width : height) = dim;
                continue;
            }
            AnnotatedGroup group;
            group.name = comment ? *comment : default_name_for(attribute);
            if (auto* list = std::get_if<std::vector<Value>>(&value.data)) {
                for (const auto& element : *list) group.items.push_back(annotation(element, group.name));
            } else {
                group.items.push_back(annotation(value, group.name));
            }
            content.groups.push_back(std::move(group));
        }
        if (!width || !height) throw SchemaError("class must define both width and height");
        content.width = *width;
        content.height = *height;
        return content;
    }

  private:
    [[noreturn]] void fail(const std::string& message) const { throw CodeSyntaxError(message, line_, column_); }

    static std::string where(int line, int column) {
        return "line " + std::to_string(line) + ", column " + std::to_string(column) + ": ";
    }

    [[nodiscard]] bool at_end() const { return pos_ >= text_.size(); }
    [[nodiscard]] char peek() const { return at_end() ? '\0' : text_[pos_]; }

    char advance() {
        char c = text_[pos_++];
        if (c == '\n') {
            ++line_;
            column_ = 1;
        } else {
            ++column_;
        }
        return c;
    }

    void expect(char c) {
        if (peek() != c) fail(std::string("expected '") + c + "'");
        advance();
    }

    void expect_word(std::string_view word) {
        if (text_.substr(pos_, word.size()) != word) fail("expected '" + std::string(word) + "'");
        for (std::size_t i = 0; i < word.size(); ++i) advance();
    }

    void skip_inline_ws() {
        while (!at_end() && (peek() == ' ' || peek() == '\t')) advance();
    }

    [[nodiscard]] bool indented_line() const { return column_ == 1 && (peek() == ' ' || peek() == '\t'); }

    // Blank and comment-only lines between statements.
    void skip_blank_lines() {
        while (!at_end()) {
            std::size_t probe = pos_;
            while (probe < text_.size() && (text_[probe] == ' ' || text_[probe] == '\t' || text_[probe] == '\r')) ++probe;
            if (probe < text_.size() && text_[probe] != '\n' && text_[probe] != '#') return;
            while (!at_end() && peek() != '\n') advance();
            if (!at_end()) advance();
        }
    }

    // Inside brackets newlines and comments are insignificant.
    void skip_any_ws() {
        while (!at_end()) {
            char c = peek();
            if (c == ' ' || c == '\t' || c == '\r' || c == '\n') {
                advance();
            } else if (c == '#') {
                while (!at_end() && peek() != '\n') advance();
            } else {
                return;
            }
        }
    }

    void end_of_line(std::optional<std::string>* comment) {
        skip_inline_ws();
        if (peek() == '#') {
            advance();
            skip_inline_ws();
            if (comment && peek() == '"') {
                *comment = string_literal();
                skip_inline_ws();
                if (!at_end() && peek() != '\n' && peek() != '\r') fail("unexpected text after name comment");
            }
            while (!at_end() && peek() != '\n') advance();
        }
        if (peek() == '\r') advance();
        if (at_end()) return;
        if (peek() != '\n') fail("unexpected text at end of statement");
        advance();
    }

    std::string identifier() {
        auto c = static_cast<unsigned char>(peek());
        if (!(std::isalpha(c) || c == '_')) fail("expected an identifier");
        std::string out;
        while (!at_end()) {
            auto d = static_cast<unsigned char>(peek());
            if (!(std::isalnum(d) || d == '_')) break;
            out += advance();
        }
        return out;
    }

    static void append_utf8(std::string& out, unsigned code) {
        if (code < 0x80) {
            out += static_cast<char>(code);
        } else if (code < 0x800) {
            out += static_cast<char>(0xC0 | (code >> 6));
            out += static_cast<char>(0x80 | (code & 0x3F));
        } else if (code < 0x10000) {
            out += static_cast<char>(0xE0 | (code >> 12));
            out += static_cast<char>(0x80 | ((code >> 6) & 0x3F));
            out += static_cast<char>(0x80 | (code & 0x3F));
        } else {
            out += static_cast<char>(0xF0 | (code >> 18));
            out += static_cast<char>(0x80 | ((code >> 12) & 0x3F));
            out += static_cast<char>(0x80 | ((code >> 6) & 0x3F));
            out += static_cast<char>(0x80 | (code & 0x3F));
        }
    }

    unsigned hex4() {
        unsigned code = 0;
        for (int i = 0; i < 4; ++i) {
            char h = peek();
            unsigned digit;
            if (h >= '0' && h <= '9') digit = static_cast<unsigned>(h - '0');
            else if (h >= 'a' && h <= 'f') digit = static_cast<unsigned>(h - 'a' + 10);
            else if (h >= 'A' && h <= 'F') digit = static_cast<unsigned>(h - 'A' + 10);
            else fail("bad \\u escape");
            advance();
            code = code * 16 + digit;
        }
        return code;
    }

    std::string string_literal() {
        expect('"');
        std::string out;
        while (true) {
            if (at_end()) fail("unterminated string");
            char c = peek();
            if (c == '\n') fail("unterminated string");
            if (c == '"') {
                advance();
                return out;
            }
            if (c != '\\') {
                out += advance();
                continue;
            }
            advance();
            if (at_end()) fail("unterminated string");
            char e = advance();
            switch (e) {
            case '"': out += '"'; break;
            case '\\': out += '\\'; break;
            case '/': out += '/'; break;
            case 'b': out += '\b'; break;
            case 'f': out += '\f'; break;
            case 'n': out += '\n'; break;
            case 'r': out += '\r'; break;
            case 't': out += '\t'; break;
            case 'u': {
                unsigned code = hex4();
                if (code >= 0xD800 && code < 0xDC00 && text_.substr(pos_, 2) == "\\u") {
                    advance();
                    advance();
                    unsigned low = hex4();
                    if (low < 0xDC00 || low > 0xDFFF) fail("bad surrogate pair");
                    code = 0x10000 + ((code - 0xD800) << 10) + (low - 0xDC00);
                }
                append_utf8(out, code);
                break;
            }
            default: fail(std::string("unsupported escape '\\") + e + "'");
            }
        }
    }

    Value integer() {
        Value v{std::string{}, line_, column_};
        std::size_t start = pos_;
        if (peek() == '-') advance();
        if (!std::isdigit(static_cast<unsigned char>(peek()))) fail("expected digits");
        while (std::isdigit(static_cast<unsigned char>(peek()))) advance();
        long long number = 0;
        auto token = text_.substr(start, pos_ - start);
        auto [ptr, ec] = std::from_chars(token.data(), token.data() + token.size(), number);
        if (ec != std::errc{} || ptr != token.data() + token.size())
            throw SchemaError(where(v.line, v.column) + "integer out of range");
        v.data = number;
        return v;
    }

    Value literal() {
        skip_any_ws_if_nested();
        Value v{std::string{}, line_, column_};
        char c = peek();
        if (c == '"') {
            v.data = string_literal();
            return v;
        }
        if (c == '-' || std::isdigit(static_cast<unsigned char>(c))) return integer();
        if (c == '[') {
            advance();
            ++depth_;
            std::vector<Value> items;
            skip_any_ws();
            while (peek() != ']') {
                if (at_end()) fail("unbalanced '['");
                items.push_back(literal());
                skip_any_ws();
                if (peek() == ',') {
                    advance();
                    skip_any_ws();
                } else if (peek() != ']') {
                    if (at_end()) fail("unbalanced '['");
                    fail("expected ',' or ']'");
                }
            }
            advance();
            --depth_;
            v.data = std::move(items);
            return v;
        }
        if (c == '{') {
            advance();
            ++depth_;
            Value::Dict dict;
            skip_any_ws();
            while (peek() != '}') {
                if (at_end()) fail("unbalanced '{'");
                if (peek() != '"') {
                    if (std::isalpha(static_cast<unsigned char>(peek())) || peek() == '_')
                        throw SchemaError(where(line_, column_) + "mapping keys must be string literals");
                    fail("expected a string key");
                }
                auto key = string_literal();
                skip_any_ws();
                expect(':');
                skip_any_ws();
                dict.entries.emplace_back(std::move(key), literal());
                skip_any_ws();
                if (peek() == ',') {
                    advance();
                    skip_any_ws();
                } else if (peek() != '}') {
                    if (at_end()) fail("unbalanced '{'");
                    fail("expected ',' or '}'");
                }
            }
            advance();
            --depth_;
            v.data = std::move(dict);
            return v;
        }
        if (std::isalpha(static_cast<unsigned char>(c)) || c == '_' || c == '(')
            throw SchemaError(where(line_, column_) + "value is not a literal");
        if (at_end() || c == '\n') fail("expected a value");
        fail(std::string("unexpected character '") + c + "'");
    }

    void skip_any_ws_if_nested() {
        if (depth_ > 0) skip_any_ws();
    }

    static int as_int(const Value& value, const std::string& what) {
        const auto* number = std::get_if<long long>(&value.data);
        if (!number) throw SchemaError(where(value.line, value.column) + what + " must be an integer");
        if (*number < std::numeric_limits<int>::min() || *number > std::numeric_limits<int>::max())
            throw SchemaError(where(value.line, value.column) + what + " out of range");
        return static_cast<int>(*number);
    }

    static std::string as_string(const Value& value, const std::string& what) {
        const auto* text = std::get_if<std::string>(&value.data);
        if (!text) throw SchemaError(where(value.line, value.column) + what + " must be a string");
        return *text;
    }

    static ConceptAnnotation annotation(const Value& value, const std::string& name) {
        const auto* dict = std::get_if<Value::Dict>(&value.data);
        if (!dict) throw SchemaError(where(value.line, value.column) + "concept must be a mapping or a list of mappings");
        ConceptAnnotation item;
        item.name = name;
        bool has_caption = false;
        bool has_box = false;
        std::set<std::string> seen;
        for (const auto& [key, field] : dict->entries) {
            if (!seen.insert(key).second) throw SchemaError(where(field.line, field.column) + "duplicate key '" + key + "'");
            if (key == "caption") {
                item.caption = as_string(field, "caption");
                has_caption = true;
            } else if (key == "text") {
                item.text = as_string(field, "text");
            } else if (key == "bbox") {
                const auto* list = std::get_if<std::vector<Value>>(&field.data);
                if (!list || list->size() != 4)
                    throw SchemaError(where(field.line, field.column) + "bbox must be a list of four integers");
                item.box = {as_int((*list)[0], "bbox"), as_int((*list)[1], "bbox"), as_int((*list)[2], "bbox"),
                            as_int((*list)[3], "bbox")};
                has_box = true;
            } else {
                throw SchemaError(where(field.line, field.column) + "unknown key '" + key + "'");
            }
        }
        if (!has_caption || !has_box)
            throw SchemaError(where(value.line, value.column) + "concept mapping needs caption and bbox");
        return item;
    }

    std::string_view text_;
    std::size_t pos_ = 0;
    int line_ = 1;
    int column_ = 1;
    int depth_ = 0;
};

} // namespace

std::string quote(std::string_view text) {
    static constexpr char hex[] = "0123456789abcdef";
    std::string out = "\"";
    for (char ch : text) {
        auto c = static_cast<unsigned char>(ch);
        switch (ch) {
        case '"': out += "\\\""; break;
        case '\\': out += "\\\\"; break;
        case '\b': out += "\\b"; break;
        case '\f': out += "\\f"; break;
        case '\n': out += "\\n"; break;
        case '\r': out += "\\r"; break;
        case '\t': out += "\\t"; break;
        default:
            if (c < 0x20 || c == 0x7F) {
                out += "\\u00";
                out += hex[c >> 4];
                out += hex[c & 0xF];
            } else {
                out += ch;
            }
        }
    }
    out += '"';
    return out;
}

std::string class_name_for(std::string_view image_id) {
    std::string out = "Image_";
    for (char ch : image_id) {
        auto c = static_cast<unsigned char>(ch);
        out += (std::isalnum(c) && c < 0x80) || ch == '_' ? ch : '_';
    }
    return out;
}

std::string sanitize_attribute(std::string_view name) {
    std::string out;
    bool pending_sep = false;
    for (char ch : name) {
        auto c = static_cast<unsigned char>(ch);
        if (c < 0x80 && std::isalnum(c)) {
            if (pending_sep && !out.empty()) out += '_';
            pending_sep = false;
            out += static_cast<char>(std::tolower(c));
        } else {
            pending_sep = true;
        }
    }
    if (out.empty()) throw SanitizationCollapse("concept name '" + std::string(name) + "' has no identifier characters");
    if (std::isdigit(static_cast<unsigned char>(out.front()))) out.insert(out.begin(), '_');
    if (is_keyword(out)) out += '_';
    return out;
}

CodeContent content_of(const W2CRecord& record) {
    CodeContent content;
    content.class_name = class_name_for(record.image.id);
    content.width = record.image.width;
    content.height = record.image.height;
    content.global_caption = record.global_caption;
    content.groups = record.groups;
    for (auto& group : content.groups) {
        for (auto& item : group.items) item.name = group.name;
    }
    return content;
}

CodeDocument emit_code(const W2CRecord& record) {
    std::string text = "class " + class_name_for(record.image.id) + ":\n";
    text += std::string(kIndent) + quote(record.global_caption) + "\n";
    text += std::string(kIndent) + "width = " + std::to_string(record.image.width) + "\n";
    text += std::string(kIndent) + "height = " + std::to_string(record.image.height) + "\n";

    std::set<std::string> taken = {"width", "height"};
    for (const auto& group : record.groups) {
        auto base = sanitize_attribute(group.name);
        auto attribute = base;
        for (int suffix = 2; taken.contains(attribute); ++suffix) attribute = base + "_" + std::to_string(suffix);
        taken.insert(attribute);

        std::string comment;
        if (default_name_for(attribute) != group.name) comment = "  # " + quote(group.name);

        text += std::string(kIndent) + attribute + " = ";
        if (group.items.size() == 1) {
            text += mapping_literal(group.items.front()) + comment + "\n";
            continue;
        }
        if (group.items.empty()) {
            text += "[]" + comment + "\n";
            continue;
        }
        text += "[\n";
        for (const auto& item : group.items) text += std::string(kIndent) + std::string(kIndent) + mapping_literal(item) + ",\n";
        text += std::string(kIndent) + "]" + comment + "\n";
    }
    return {std::move(text), content_of(record)};
}

CodeContent parse_code(std::string_view text) { return Parser(text).document(); }

Conversation emit_single_round(const W2CRecord& record) {
    std::string answer = record.global_caption;
    for (const auto& group : record.groups) {
        for (const auto& item : group.items) answer += "\n" + group.name + " " + item_line(item);
    }
    return {{"human", "<image>\nDescribe the image in detail, including every visual concept with its bounding box."},
            {"gpt", std::move(answer)}};
}

Conversation emit_multi_round(const W2CRecord& record) {
    Conversation turns{{"human", "<image>\nDescribe the image briefly."}, {"gpt", record.global_caption}};
    for (const auto& group : record.groups) {
        std::string question = group.items.size() > 1 ? "Describe each " + group.name + " in the image."
                                                      : "Describe the " + group.name + " in the image.";
        std::string answer;
        for (const auto& item : group.items) {
            if (!answer.empty()) answer += '\n';
            answer += item_line(item);
        }
        turns.push_back({"human", std::move(question)});
        turns.push_back({"gpt", std::move(answer)});
    }
    return turns;
}

Conversation emit_code_round(const W2CRecord& record) {
    return {{"human", "<image>\nParse the image into Python code."}, {"gpt", emit_code(record).text}};
}

Conversation emit_conversation(const W2CRecord& record, OutputFormat format) {
    switch (format) {
    case OutputFormat::SingleRound: return emit_single_round(record);
    case OutputFormat::MultiRound: return emit_multi_round(record);
    case OutputFormat::Code: return emit_code_round(record);
    }
    return emit_code_round(record);
}

nlohmann::ordered_json conversation_to_json(const W2CRecord& record, const Conversation& conversation) {
    nlohmann::ordered_json j;
    j["id"] = record.image.id;
    j["image"] = record.image.path;
    auto& turns = j["conversations"] = nlohmann::ordered_json::array();
    for (const auto& turn : conversation) {
        nlohmann::ordered_json t;
        t["from"] = turn.from;
        t["value"] = turn.value;
        turns.push_back(std::move(t));
    }
    return j;
}

std::string build_few_shot_prompt(const std::vector<Shot>& shots, std::string_view query_description,
                                  std::string_view query_question) {
    if (shots.empty()) throw std::invalid_argument("few-shot prompt needs at least one shot");
    std::string out;
    for (const auto& shot : shots) {
        out += "Description: " + shot.description + "\nQuestion: " + shot.question + "\nAnswer: " + shot.answer;
        out += kShotDelimiter;
    }
    out += "Description: " + std::string(query_description) + "\nQuestion: " + std::string(query_question) + "\nAnswer:";
    return out;
}

} // namespace w2c::codegen
