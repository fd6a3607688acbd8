#include <doctest.h>

#include <random>

#include "test_support.hpp"
#include "w2c/errors.hpp"
#include "w2c/nlp.hpp"

using namespace w2c;
using namespace w2c::nlp;

namespace {

std::vector<std::pair<std::string, Tag>> tags_of(std::string_view sentence) {
    std::vector<std::pair<std::string, Tag>> out;
    for (const auto& t : tag_tokens(sentence)) out.emplace_back(t.text, t.tag);
    return out;
}

std::vector<std::string> surfaces(const std::vector<NounPhrase>& phrases) {
    std::vector<std::string> out;
    for (const auto& p : phrases) out.push_back(p.surface);
    return out;
}

std::vector<std::string> normalized(const std::vector<NounPhrase>& phrases) {
    std::vector<std::string> out;
    for (const auto& p : phrases) out.push_back(p.normalized);
    return out;
}

NounPhrase phrase(const std::string& surface) { return {surface, normalize_phrase(surface)}; }

} // namespace

TEST_CASE("tagging examples") {
    CHECK(tag_tokens("").empty());
    CHECK(tags_of("a red car") ==
          std::vector<std::pair<std::string, Tag>>{{"a", Tag::Det}, {"red", Tag::Adj}, {"car", Tag::Noun}});
    CHECK(tags_of("two wooden benches") ==
          std::vector<std::pair<std::string, Tag>>{{"two", Tag::Num}, {"wooden", Tag::Adj}, {"benches", Tag::Noun}});
    CHECK(tags_of("3 cats")[0].second == Tag::Num);
    CHECK(tags_of("a Coca-Cola sign")[1] == std::pair<std::string, Tag>{"Coca-Cola", Tag::Propn});
}

TEST_CASE("tokens are byte spans of the sentence") {
    const char* sentences[] = {"A man's hat, on 3.5 tables!", "  spaced   out\ttabs\n", "don't-stop well-known",
                               "caf\xc3\xa9 au lait", "((nested)) [brackets]", "'quoted' \"words\""};
    for (std::string_view s : sentences) {
        std::size_t covered = 0;
        for (const auto& t : tokenize(s)) {
            CHECK_FALSE(t.text.empty());
            CHECK(s.substr(t.begin, t.end - t.begin) == t.text);
            REQUIRE(t.begin >= covered);
            for (auto i = covered; i < t.begin; ++i) CHECK(std::isspace(static_cast<unsigned char>(s[i])));
            covered = t.end;
        }
        for (auto i = covered; i < s.size(); ++i) CHECK(std::isspace(static_cast<unsigned char>(s[i])));
    }
}

TEST_CASE("possessive splits off and never joins a chunk") {
    auto tokens = tag_tokens("A man's hat");
    REQUIRE(tokens.size() == 4);
    CHECK(tokens[2].text == "'s");
    CHECK(tokens[2].tag == Tag::Other);
    CHECK(normalized(extract_noun_phrases("A man's hat")) == std::vector<std::string>{"man", "hat"});
}

TEST_CASE("noun phrase extraction examples") {
    auto phrases = extract_noun_phrases("A brown dog sits on a wooden bench");
    CHECK(surfaces(phrases) == std::vector<std::string>{"A brown dog", "a wooden bench"});
    CHECK(normalized(phrases) == std::vector<std::string>{"brown dog", "wooden bench"});
    CHECK(extract_noun_phrases("Running quickly").empty());
    CHECK(extract_noun_phrases("").empty());
    CHECK(normalized(extract_noun_phrases("dogs and dogs")) == std::vector<std::string>{"dog", "dog"});
    CHECK(normalized(extract_noun_phrases("two traffic lights")) == std::vector<std::string>{"traffic light"});
}

TEST_CASE("normalization examples") {
    CHECK(normalize_phrase("The Buses") == "bus");
    CHECK(normalize_phrase("dog") == "dog");
    CHECK(normalize_phrase("three red cars") == "red car");
    CHECK(normalize_phrase("two men") == "man");
    CHECK(normalize_phrase("the leaves") == "leaf");
    CHECK(normalize_phrase("boxes") == "box");
    CHECK(normalize_phrase("puppies") == "puppy");
    CHECK(normalize_phrase("glass") == "glass");
}

TEST_CASE("dedup examples") {
    auto stop = default_stoplist();
    CHECK(dedup_phrases({phrase("brown dog"), phrase("brown dog")}, stop) == std::vector<NounPhrase>{phrase("brown dog")});
    CHECK(dedup_phrases({phrase("image"), phrase("dog")}, {"image"}) == std::vector<NounPhrase>{phrase("dog")});
    CHECK(dedup_phrases({phrase("dogs"), phrase("dog")}, stop) == std::vector<NounPhrase>{phrase("dogs")});
    CHECK(dedup_phrases({}, stop).empty());
}

TEST_CASE("lemmatize is idempotent on generated words") {
    std::mt19937 rng(7);
    const std::string letters = "abcdefghilmnoprstuvwxyz";
    const char* suffixes[] = {"", "s", "es", "ies", "ves", "ss", "us", "is", "ches", "xes"};
    std::uniform_int_distribution<std::size_t> letter(0, letters.size() - 1), suffix(0, std::size(suffixes) - 1);
    for (int i = 0; i < 5000; ++i) {
        std::string w;
        int n = std::uniform_int_distribution<int>(1, 7)(rng);
        for (int k = 0; k < n; ++k) w += letters[letter(rng)];
        w += suffixes[suffix(rng)];
        auto once = lemmatize(w);
        CHECK_MESSAGE(lemmatize(once) == once, w);
        CHECK_FALSE(once.empty());
    }
}

TEST_CASE("extraction properties on the caption fixture") {
    for (const auto& sentence : testing::load_nlp_reference()) {
        auto tokens = tag_tokens(sentence.text);
        auto phrases = extract_noun_phrases(sentence.text);
        CHECK(phrases.size() <= tokens.size());
        std::size_t pos = 0;
        for (const auto& p : phrases) {
            // Contiguous span starting and ending on token boundaries, in order.
            auto at = sentence.text.find(p.surface, pos);
            REQUIRE(at != std::string::npos);
            bool starts = false, ends = false;
            for (const auto& t : tokens) {
                starts = starts || t.begin == at;
                ends = ends || t.end == at + p.surface.size();
            }
            CHECK(starts);
            CHECK(ends);
            pos = at + p.surface.size();

            CHECK(normalize_phrase(p.normalized) == p.normalized);
            CHECK_FALSE(p.normalized.empty());
            CHECK(p.normalized == to_lower_ascii(p.normalized));
        }
        auto stop = default_stoplist();
        auto once = dedup_phrases(phrases, stop);
        CHECK(dedup_phrases(once, stop) == once);
        std::set<std::string> forms;
        for (const auto& p : once) CHECK(forms.insert(p.normalized).second);
    }
}

TEST_CASE("tagger agrees with the reference chunker") {
    testing::PrfScore total;
    for (const auto& sentence : testing::load_nlp_reference()) {
        auto score = testing::phrase_overlap(surfaces(extract_noun_phrases(sentence.text)),
                                             testing::reference_chunks(sentence));
        total.matched += score.matched;
        total.predicted += score.predicted;
        total.expected += score.expected;
    }
    CHECK(total.expected > 100);
    CHECK(total.f1() >= 0.95);
}

TEST_CASE("lexicon files") {
    CHECK(Lexicon::bundled().size() > 1000);
    auto lexicon = Lexicon::parse("# comment\nzorp\tNOUN\nblue\tADJ\n", "zorpen\tzorp\n");
    CHECK(normalize_phrase("blue zorpen", lexicon) == "blue zorp");
    CHECK_THROWS_AS(Lexicon::parse("zorp NOUN\n", ""), ConfigError);
    CHECK_THROWS_AS(Lexicon::parse("zorp\tVERB\n", ""), ConfigError);
}
