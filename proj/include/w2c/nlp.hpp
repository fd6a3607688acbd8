#pragma once

#include <cstddef>
#include <filesystem>
#include <memory>
#include <set>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "w2c/datamodel.hpp"

namespace w2c::nlp {

enum class Tag { Noun, Propn, Adj, Det, Num, Other };

std::string_view to_string(Tag tag);
Tag parse_tag(std::string_view text);

struct PosToken {
    std::string text;
    Tag tag = Tag::Other;
    /// Byte offsets of the token in the input sentence.
    std::size_t begin = 0;
    std::size_t end = 0;

    bool operator==(const PosToken&) const = default;
};

/// Word-to-tag table plus irregular plural table.
class Lexicon {
  public:
    Lexicon() = default;
    Lexicon(std::unordered_map<std::string, Tag> tags,
            std::unordered_map<std::string, std::string> plurals);

    /// word<TAB>tag and plural<TAB>singular files; '#' starts a comment line.
    static Lexicon load(const std::filesystem::path& lexicon_file,
                        const std::filesystem::path& exceptions_file);
    static Lexicon parse(std::string_view lexicon_text, std::string_view exceptions_text);
    /// The tables compiled into the library.
    static const Lexicon& bundled();

    [[nodiscard]] const Tag* find(std::string_view lowercase_word) const;
    [[nodiscard]] const std::string* irregular_singular(std::string_view lowercase_word) const;
    [[nodiscard]] std::size_t size() const { return tags_.size(); }

  private:
    std::unordered_map<std::string, Tag> tags_;
    std::unordered_map<std::string, std::string> plurals_;
};

/// Splits on whitespace and punctuation. Apostrophes and hyphens inside a
/// word stay part of it; a trailing "'s" becomes its own token.
std::vector<PosToken> tokenize(std::string_view sentence);

std::vector<PosToken> tag_tokens(std::string_view sentence, const Lexicon& lexicon = Lexicon::bundled());

/// Singular form of one lowercase word. Idempotent.
std::string lemmatize(std::string_view word, const Lexicon& lexicon = Lexicon::bundled());

std::string normalize_phrase(std::string_view surface, const Lexicon& lexicon = Lexicon::bundled());

/// Maximal spans matching DET? NUM? ADJ* NOUN+ (PROPN counts as a noun), left to right.
std::vector<NounPhrase> extract_noun_phrases(std::string_view text,
                                             const Lexicon& lexicon = Lexicon::bundled());

/// Keeps the first phrase of each normalized form and drops stoplisted forms.
std::vector<NounPhrase> dedup_phrases(const std::vector<NounPhrase>& phrases,
                                      const std::set<std::string>& stoplist);

std::string to_lower_ascii(std::string_view text);

} // namespace w2c::nlp
