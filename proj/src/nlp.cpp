#include "w2c/nlp.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <sstream>
#include <unordered_set>

#include "w2c/errors.hpp"

namespace w2c::nlp {

// Defined in the generated bundled_lexicon.cpp.
extern const char* const kBundledLexicon;
extern const char* const kBundledLemmaExceptions;

namespace {

bool is_word_byte(unsigned char c) { return std::isalnum(c) != 0 || c >= 0x80; }

bool has_alnum(std::string_view text) {
    return std::any_of(text.begin(), text.end(), [](char c) { return is_word_byte(static_cast<unsigned char>(c)); });
}

bool ends_with(std::string_view text, std::string_view suffix) {
    return text.size() >= suffix.size() && text.substr(text.size() - suffix.size()) == suffix;
}

bool is_numeral(std::string_view text) {
    bool digit = false;
    for (char c : text) {
        if (std::isdigit(static_cast<unsigned char>(c))) {
            digit = true;
        } else if (c != '.' && c != ',') {
            return false;
        }
    }
    return digit;
}

std::vector<std::string_view> split_lines(std::string_view text) {
    std::vector<std::string_view> lines;
    std::size_t start = 0;
    while (start <= text.size()) {
        auto end = text.find('\n', start);
        if (end == std::string_view::npos) end = text.size();
        auto line = text.substr(start, end - start);
        if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
        lines.push_back(line);
        start = end + 1;
    }
    return lines;
}

template <typename Fn>
void for_each_pair(std::string_view text, std::string_view what, Fn&& fn) {
    int line_no = 0;
    for (auto line : split_lines(text)) {
        ++line_no;
        if (line.empty() || line.front() == '#') continue;
        auto tab = line.find('\t');
        if (tab == std::string_view::npos || tab == 0 || tab + 1 == line.size())
            throw ConfigError(std::string(what) + " line " + std::to_string(line_no) + ": expected key<TAB>value");
        fn(line.substr(0, tab), line.substr(tab + 1));
    }
}

std::string read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError("cannot read " + path.string());
    std::ostringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

bool noun_like(const Tag* tag) { return tag && (*tag == Tag::Noun || *tag == Tag::Adj); }

std::string lemmatize_once(const std::string& word, const Lexicon& lexicon) {
    if (const auto* singular = lexicon.irregular_singular(word)) return *singular;
    if (const auto* tag = lexicon.find(word); tag && *tag == Tag::Noun) return word;
    if (word.size() <= 2 || word.back() != 's') return word;

    std::string_view w = word;
    std::vector<std::string> candidates;
    if (ends_with(w, "ies")) candidates.push_back(std::string(w.substr(0, w.size() - 3)) + "y");
    if (ends_with(w, "ves")) {
        candidates.push_back(std::string(w.substr(0, w.size() - 3)) + "f");
        candidates.push_back(std::string(w.substr(0, w.size() - 3)) + "fe");
    }
    if (ends_with(w, "es")) candidates.emplace_back(w.substr(0, w.size() - 2));
    candidates.emplace_back(w.substr(0, w.size() - 1));
    for (const auto& candidate : candidates) {
        if (noun_like(lexicon.find(candidate))) return candidate;
    }

    if (ends_with(w, "ss") || ends_with(w, "us") || ends_with(w, "is")) return word;
    if (ends_with(w, "ies") && w.size() > 4) return std::string(w.substr(0, w.size() - 3)) + "y";
    for (std::string_view sibilant : {"sses", "xes", "zes", "ches", "shes"}) {
        if (ends_with(w, sibilant)) return std::string(w.substr(0, w.size() - 2));
    }
    return std::string(w.substr(0, w.size() - 1));
}

Tag guess_tag(std::string_view token, bool sentence_initial, const Lexicon& lexicon) {
    if (is_numeral(token)) return Tag::Num;
    if (!has_alnum(token) || token.front() == '\'') return Tag::Other;
    auto lower = to_lower_ascii(token);
    if (const auto* tag = lexicon.find(lower)) return *tag;
    if (lexicon.irregular_singular(lower)) return Tag::Noun;
    if (auto lemma = lemmatize(lower, lexicon); lemma != lower && noun_like(lexicon.find(lemma))) return Tag::Noun;
    if (!sentence_initial && std::isupper(static_cast<unsigned char>(token.front()))) return Tag::Propn;
    std::string_view w = lower;
    if (ends_with(w, "ly") || ends_with(w, "ing")) return Tag::Other;
    for (std::string_view suffix : {"ed", "ful", "ous", "ive", "able", "ible", "less", "ish"}) {
        if (ends_with(w, suffix) && w.size() > suffix.size() + 2) return Tag::Adj;
    }
    return Tag::Noun;
}

bool nominal(Tag tag) { return tag == Tag::Noun || tag == Tag::Propn; }

const std::unordered_set<std::string>& prepositions() {
    static const std::unordered_set<std::string> words = {
        "above",  "across", "against", "along",  "around", "at",   "behind", "below",  "beneath", "beside",
        "between", "by",    "down",    "from",   "in",     "inside", "into", "near",   "off",     "on",
        "onto",   "out",    "outside", "over",   "past",   "through", "toward", "towards", "under", "up",
        "with",   "within"};
    return words;
}

bool plural_noun(const std::string& lower, const Lexicon& lexicon) {
    return lexicon.irregular_singular(lower) || lemmatize(lower, lexicon) != lower;
}

bool plural_quantifier(const std::string& lower, Tag tag) {
    static const std::unordered_set<std::string> determiners = {"these", "those", "several", "many", "some",
                                                                "both",  "all",   "few",     "two"};
    if (tag == Tag::Num) return lower != "one" && lower != "1";
    return tag == Tag::Det && determiners.contains(lower);
}

// A noun that disagrees in number with the noun before it and is followed by a
// determiner, numeral or preposition reads as the verb of that noun
// ("a clock tower rises over", "two giraffes stand beside").
void retag_verbs(std::vector<PosToken>& tokens, const Lexicon& lexicon) {
    for (std::size_t i = 1; i + 1 < tokens.size(); ++i) {
        auto& token = tokens[i];
        const auto& prev = tokens[i - 1];
        const auto& next = tokens[i + 1];
        if (token.tag != Tag::Noun || prev.tag != Tag::Noun) continue;
        auto next_lower = to_lower_ascii(next.text);
        if (next.tag != Tag::Det && next.tag != Tag::Num && !prepositions().contains(next_lower)) continue;
        auto lower = to_lower_ascii(token.text);
        if (lexicon.irregular_singular(lower)) continue;
        bool inflected = lower.size() > 2 && lower.back() == 's' && lemmatize(lower, lexicon) != lower;
        bool prev_plural = plural_noun(to_lower_ascii(prev.text), lexicon);
        if (inflected == prev_plural) continue;
        // "two tennis players on": a plural quantifier announces a plural head.
        std::size_t start = i - 1;
        while (start > 0 && tokens[start - 1].tag == Tag::Noun) --start;
        if (inflected && start > 0 && plural_quantifier(to_lower_ascii(tokens[start - 1].text), tokens[start - 1].tag))
            continue;
        token.tag = Tag::Other;
    }
}

} // namespace

std::string_view to_string(Tag tag) {
    switch (tag) {
    case Tag::Noun: return "NOUN";
    case Tag::Propn: return "PROPN";
    case Tag::Adj: return "ADJ";
    case Tag::Det: return "DET";
    case Tag::Num: return "NUM";
    case Tag::Other: return "OTHER";
    }
    return "OTHER";
}

Tag parse_tag(std::string_view text) {
    for (Tag tag : {Tag::Noun, Tag::Propn, Tag::Adj, Tag::Det, Tag::Num, Tag::Other}) {
        if (to_string(tag) == text) return tag;
    }
    throw ConfigError("unknown tag '" + std::string(text) + "'");
}

std::string to_lower_ascii(std::string_view text) {
    std::string out(text);
    std::transform(out.begin(), out.end(), out.begin(),
                   [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    return out;
}

Lexicon::Lexicon(std::unordered_map<std::string, Tag> tags,
                 std::unordered_map<std::string, std::string> plurals)
    : tags_(std::move(tags)), plurals_(std::move(plurals)) {}

Lexicon Lexicon::parse(std::string_view lexicon_text, std::string_view exceptions_text) {
    std::unordered_map<std::string, Tag> tags;
    std::unordered_map<std::string, std::string> plurals;
    for_each_pair(lexicon_text, "lexicon", [&](std::string_view word, std::string_view tag) {
        tags[to_lower_ascii(word)] = parse_tag(tag);
    });
    for_each_pair(exceptions_text, "lemma exceptions", [&](std::string_view plural, std::string_view singular) {
        plurals[to_lower_ascii(plural)] = to_lower_ascii(singular);
    });
    return Lexicon(std::move(tags), std::move(plurals));
}

Lexicon Lexicon::load(const std::filesystem::path& lexicon_file, const std::filesystem::path& exceptions_file) {
    return parse(read_file(lexicon_file), read_file(exceptions_file));
}

const Lexicon& Lexicon::bundled() {
    static const Lexicon lexicon = parse(kBundledLexicon, kBundledLemmaExceptions);
    return lexicon;
}

const Tag* Lexicon::find(std::string_view lowercase_word) const {
    auto it = tags_.find(std::string(lowercase_word));
    return it == tags_.end() ? nullptr : &it->second;
}

const std::string* Lexicon::irregular_singular(std::string_view lowercase_word) const {
    auto it = plurals_.find(std::string(lowercase_word));
    return it == plurals_.end() ? nullptr : &it->second;
}

std::vector<PosToken> tokenize(std::string_view sentence) {
    std::vector<PosToken> tokens;
    auto byte = [&](std::size_t i) { return static_cast<unsigned char>(sentence[i]); };
    std::size_t i = 0;
    while (i < sentence.size()) {
        if (std::isspace(byte(i))) {
            ++i;
            continue;
        }
        if (!is_word_byte(byte(i))) {
            tokens.push_back({std::string(1, sentence[i]), Tag::Other, i, i + 1});
            ++i;
            continue;
        }
        std::size_t end = i;
        while (end < sentence.size()) {
            if (is_word_byte(byte(end))) {
                ++end;
                continue;
            }
            char c = sentence[end];
            bool has_next = end + 1 < sentence.size();
            bool word_joiner = (c == '-' || c == '\'') && has_next && is_word_byte(byte(end + 1));
            bool digit_joiner = (c == '.' || c == ',') && has_next && std::isdigit(byte(end - 1)) &&
                                std::isdigit(byte(end + 1));
            if (!word_joiner && !digit_joiner) break;
            ++end;
        }
        std::string_view word = sentence.substr(i, end - i);
        if (word.size() > 2 && (ends_with(word, "'s") || ends_with(word, "'S"))) {
            tokens.push_back({std::string(word.substr(0, word.size() - 2)), Tag::Other, i, end - 2});
            tokens.push_back({std::string(word.substr(word.size() - 2)), Tag::Other, end - 2, end});
        } else {
            tokens.push_back({std::string(word), Tag::Other, i, end});
        }
        i = end;
    }
    return tokens;
}

std::vector<PosToken> tag_tokens(std::string_view sentence, const Lexicon& lexicon) {
    auto tokens = tokenize(sentence);
    bool initial = true;
    for (auto& token : tokens) {
        token.tag = guess_tag(token.text, initial, lexicon);
        if (has_alnum(token.text)) {
            initial = false;
        } else if (token.text == "." || token.text == "!" || token.text == "?") {
            initial = true;
        }
    }
    retag_verbs(tokens, lexicon);
    return tokens;
}

std::string lemmatize(std::string_view word, const Lexicon& lexicon) {
    std::string w(word);
    auto once = lemmatize_once(w, lexicon);
    if (once == w || lemmatize_once(once, lexicon) == once) return once;
    return w;
}

std::string normalize_phrase(std::string_view surface, const Lexicon& lexicon) {
    std::vector<PosToken> words;
    for (auto& token : tag_tokens(surface, lexicon)) {
        if (has_alnum(token.text)) words.push_back(std::move(token));
    }
    if (words.empty()) {
        auto first = surface.find_first_not_of(" \t\r\n");
        if (first == std::string_view::npos) return {};
        auto last = surface.find_last_not_of(" \t\r\n");
        return to_lower_ascii(surface.substr(first, last - first + 1));
    }

    auto join = [](auto begin, auto end) {
        std::string out;
        for (auto it = begin; it != end; ++it) {
            if (!out.empty()) out += ' ';
            out += to_lower_ascii(it->text);
        }
        return out;
    };

    auto head = std::find_if(words.begin(), words.end(),
                             [](const PosToken& t) { return t.tag != Tag::Det && t.tag != Tag::Num; });
    if (head == words.end()) return join(words.begin(), words.end());

    words.back().text = lemmatize(to_lower_ascii(words.back().text), lexicon);
    return join(head, words.end());
}

std::vector<NounPhrase> extract_noun_phrases(std::string_view text, const Lexicon& lexicon) {
    auto tokens = tag_tokens(text, lexicon);
    std::vector<NounPhrase> phrases;
    std::size_t i = 0;
    while (i < tokens.size()) {
        std::size_t j = i;
        if (j < tokens.size() && tokens[j].tag == Tag::Det) ++j;
        if (j < tokens.size() && tokens[j].tag == Tag::Num) ++j;
        while (j < tokens.size() && tokens[j].tag == Tag::Adj) ++j;
        std::size_t k = j;
        while (k < tokens.size() && nominal(tokens[k].tag)) ++k;
        if (k == j) {
            ++i;
            continue;
        }
        auto begin = tokens[i].begin;
        auto surface = std::string(text.substr(begin, tokens[k - 1].end - begin));
        phrases.push_back({surface, normalize_phrase(surface, lexicon)});
        i = k;
    }
    return phrases;
}

std::vector<NounPhrase> dedup_phrases(const std::vector<NounPhrase>& phrases, const std::set<std::string>& stoplist) {
    std::vector<NounPhrase> out;
    std::unordered_set<std::string> seen;
    for (const auto& phrase : phrases) {
        if (stoplist.contains(phrase.normalized)) continue;
        if (seen.insert(phrase.normalized).second) out.push_back(phrase);
    }
    return out;
}

} // namespace w2c::nlp
