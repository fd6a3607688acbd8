// One PASS/FAIL line per acceptance criterion; exits nonzero if any fails.
#include <chrono>
#include <cstdio>
#include <functional>
#include <iostream>
#include <random>
#include <sstream>

#include "test_support.hpp"
#include "w2c/codegen.hpp"
#include "w2c/consistency.hpp"
#include "w2c/nlp.hpp"
#include "w2c/orchestrator.hpp"

using namespace w2c;
namespace fs = std::filesystem;

namespace {

struct Outcome {
    bool pass = false;
    std::string detail;
};

fs::path golden_dir() { return testing::data_dir() / "golden"; }

orchestrator::RunResult run_golden(const fs::path& out, const PipelineConfig& config) {
    auto replay = backends::ReplayBackend::load(golden_dir() / "replay.jsonl");
    return orchestrator::run_pipeline(golden_dir() / "manifest.jsonl", config, {}, replay, replay,
                                      {out, false, std::nullopt});
}

int oracle_beam(const std::vector<CaptionCandidate>& list) {
    for (const auto& c : list) {
        bool best = true;
        for (const auto& other : list) {
            if (*other.score > *c.score || (*other.score == *c.score && other.beam_index < c.beam_index)) best = false;
        }
        if (best) return c.beam_index;
    }
    return -1;
}

// Every score vector a candidate with at most four sub-concepts can have lies
// in [-4, 4], so enumerating all of them over lists of one to six covers every
// verdict assignment; beams run in order and reversed to exercise the tie rule.
// A second pass enumerates sub-concept subsets and verdicts directly for short
// lists and checks the scores that feed the selection.
Outcome criterion_selection() {
    long long lists = 0, mismatches = 0;
    std::vector<CaptionCandidate> list;
    for (int n = 1; n <= 6; ++n) {
        list.assign(n, CaptionCandidate{"c", 0, {}, 0});
        std::vector<int> scores(n, -4);
        while (true) {
            for (int order = 0; order < 2; ++order) {
                for (int k = 0; k < n; ++k) {
                    list[k].score = scores[k];
                    list[k].beam_index = order == 0 ? k : n - 1 - k;
                }
                ++lists;
                if (consistency::select_caption(list).beam_index != oracle_beam(list)) ++mismatches;
            }
            int k = 0;
            while (k < n && scores[k] == 4) scores[k++] = -4;
            if (k == n) break;
            ++scores[k];
        }
    }

    const std::string pool[4] = {"red ball", "dog", "grass", "tree"};
    long long joint = 0;
    std::map<std::string, Verdict> verdicts;
    for (int assignment = 0; assignment < 81; ++assignment) {
        int code = assignment;
        for (const auto& p : pool) {
            verdicts[p] = static_cast<Verdict>(code % 3);
            code /= 3;
        }
        for (int n = 1; n <= 3; ++n) {
            int combos = 1;
            for (int k = 0; k < n; ++k) combos *= 16;
            for (int c = 0; c < combos; ++c) {
                std::vector<CaptionCandidate> cs;
                int rest = c;
                for (int k = 0; k < n; ++k) {
                    int subset = rest % 16;
                    rest /= 16;
                    CaptionCandidate candidate{"c", n - 1 - k, {}, {}};
                    int expected = 0;
                    for (int b = 0; b < 4; ++b) {
                        if (!(subset & (1 << b))) continue;
                        candidate.sub_concepts.push_back({{pool[b], pool[b]}, Verdict::Unknown});
                        auto v = verdicts[pool[b]];
                        expected += v == Verdict::Yes ? 1 : v == Verdict::No ? -1 : 0;
                    }
                    candidate.score = consistency::score_candidate(candidate, verdicts);
                    if (*candidate.score != expected) ++mismatches;
                    cs.push_back(std::move(candidate));
                }
                ++joint;
                if (consistency::select_caption(cs).beam_index != oracle_beam(cs)) ++mismatches;
            }
        }
    }
    return {mismatches == 0, std::to_string(lists) + " score lists + " + std::to_string(joint) + " verdict lists, " +
                                 std::to_string(mismatches) + " mismatches"};
}

Outcome criterion_round_trip() {
    std::mt19937 rng(2024);
    int failures = 0;
    for (int i = 0; i < 1000; ++i) {
        auto r = testing::random_record(rng);
        try {
            if (codegen::parse_code(codegen::emit_code(r).text) != codegen::content_of(r)) ++failures;
        } catch (const std::exception&) {
            ++failures;
        }
    }
    return {failures == 0, "1000 records, " + std::to_string(failures) + " failures"};
}

Outcome criterion_merge() {
    std::mt19937 rng(31337);
    std::uniform_int_distribution<int> coord(0, 4000), size(1, 1000), count(1, 12);
    int failures = 0;
    for (int i = 0; i < 10000; ++i) {
        std::vector<BoundingBox> boxes(count(rng));
        for (auto& b : boxes) {
            b.x1 = coord(rng);
            b.y1 = coord(rng);
            b.x2 = b.x1 + size(rng);
            b.y2 = b.y1 + size(rng);
        }
        BoundingBox expected = boxes.front();
        for (const auto& b : boxes) {
            expected.x1 = std::min(expected.x1, b.x1);
            expected.y1 = std::min(expected.y1, b.y1);
            expected.x2 = std::max(expected.x2, b.x2);
            expected.y2 = std::max(expected.y2, b.y2);
        }
        auto merged = consistency::merge_boxes(boxes);
        bool ok = merged == expected;
        for (const auto& b : boxes) ok = ok && merged.contains(b);
        auto touches = [&](auto side) {
            return std::any_of(boxes.begin(), boxes.end(), [&](const BoundingBox& b) { return side(b); });
        };
        ok = ok && touches([&](const BoundingBox& b) { return b.x1 == merged.x1; }) &&
             touches([&](const BoundingBox& b) { return b.y1 == merged.y1; }) &&
             touches([&](const BoundingBox& b) { return b.x2 == merged.x2; }) &&
             touches([&](const BoundingBox& b) { return b.y2 == merged.y2; });
        if (!ok) ++failures;
    }
    return {failures == 0, "10000 lists, " + std::to_string(failures) + " failures"};
}

Outcome criterion_counting_yield() {
    testing::TempDir dir;
    auto scenes = testing::make_counting_scenes(100, 30, 7);
    auto manifest = testing::write_corpus(dir.path(), scenes);
    int scripted_no = 0;
    for (const auto& s : scenes) scripted_no += s.miscounted.empty() ? 0 : 1;

    testing::ScriptedBackend scripted(scenes);
    testing::record_replay(manifest, scripted, {PipelineConfig{}}, dir / "replay.jsonl");
    auto replay = backends::ReplayBackend::load(dir / "replay.jsonl");
    PipelineConfig config;
    config.drop_policy = DropPolicy::DropRecord;
    auto result = orchestrator::run_pipeline(manifest, config, {}, replay, replay, {dir / "out", false, std::nullopt});
    auto records = testing::read_lines(dir / "out/output.jsonl").size();
    bool pass = scripted_no == 30 && records == 70 && result.stats.images_out == 70 &&
                result.stats.groups_inconsistent == 30 && result.stats.errored == 0;
    return {pass, std::to_string(scripted_no) + " scripted No, " + std::to_string(records) +
                      " records, groups_inconsistent " + std::to_string(result.stats.groups_inconsistent)};
}

Outcome criterion_prompts() {
    stages::PromptSet p;
    const std::vector<std::pair<std::string, std::string>> cases = {
        {p.global(), "Please provide a simple sentence that describes this image accurately."},
        {p.detail(),
         "Please describe all the visual concepts in the image in detail, but use concise words with no more than 120 "
         "words."},
        {p.region_desc("dog"),
         "From the image, provide one sentence that describes dog (you should try your best to include attributes "
         "like shape, color or material), especially, using dog as the beginning of your answer."},
        {p.ocr(),
         "List all the text in the image, answer with the ocr tokens only, and answer 'No' with one word if there "
         "isn't any."},
        {p.valid_concept("dog"),
         "Is 'dog' a valid and visible visual concept in the image? Answer yes or no with only one single word."},
        {p.valid_group(2, "dog"), "Is there 2 or more dog in the image? Answer yes or no with a single word."},
    };
    int mismatches = 0;
    for (const auto& [rendered, expected] : cases) {
        if (rendered != expected) {
            ++mismatches;
            std::cout << "  rendered: " << rendered << "\n  expected: " << expected << '\n';
        }
    }
    return {mismatches == 0, std::to_string(cases.size()) + " templates, " + std::to_string(mismatches) + " mismatches"};
}

Outcome criterion_determinism() {
    testing::TempDir dir;
    PipelineConfig serial, parallel;
    serial.max_concurrent_requests = 1;
    parallel.max_concurrent_requests = 8;
    auto a = run_golden(dir / "a", serial);
    auto b = run_golden(dir / "b", parallel);
    auto out_a = testing::read_text(dir / "a/output.jsonl");
    bool same = a.stats == b.stats && out_a == testing::read_text(dir / "b/output.jsonl");
    auto warm = run_golden(dir / "b", parallel);
    auto warm_stats = warm.stats;
    warm_stats.cache_hits = a.stats.cache_hits;
    warm_stats.backend_calls = a.stats.backend_calls;
    bool warm_ok = warm.stats.backend_calls == 0 && warm_stats == a.stats &&
                   out_a == testing::read_text(dir / "b/output.jsonl");
    return {same && warm_ok && !out_a.empty(),
            std::to_string(a.stats.images_out) + " records, cold backend_calls " + std::to_string(a.stats.backend_calls) +
                ", warm backend_calls " + std::to_string(warm.stats.backend_calls)};
}

Outcome criterion_ablation() {
    testing::TempDir dir;
    PipelineConfig config;
    config.counting_filter_enabled = false;
    config.reranking_enabled = false;
    auto scenes = testing::make_scenes(12, 2024, 6);
    int with_concepts = 0, records = 0, wrong = 0;
    for (const auto& s : scenes) with_concepts += s.objects.empty() ? 0 : 1;
    run_golden(dir.path(), config);
    for (const auto& line : testing::read_lines(dir / "output.jsonl")) {
        ++records;
        auto record = record_from_json(nlohmann::json::parse(line));
        const auto& s = *std::find_if(scenes.begin(), scenes.end(), [&](const auto& x) { return x.id == record.image.id; });
        for (const auto& g : record.groups) {
            const auto& o = *std::find_if(s.objects.begin(), s.objects.end(), [&](const auto& x) { return x.name == g.name; });
            for (const auto& item : g.items) wrong += item.caption == o.region_beams.front() ? 0 : 1;
        }
    }
    return {records == with_concepts && wrong == 0, std::to_string(records) + "/" + std::to_string(with_concepts) +
                                                        " images with concepts kept, " + std::to_string(wrong) +
                                                        " captions not beam 0"};
}

Outcome criterion_formats() {
    testing::TempDir dir;
    std::string detail;
    bool pass = true;
    for (auto format : {OutputFormat::Code, OutputFormat::SingleRound, OutputFormat::MultiRound}) {
        PipelineConfig config;
        config.output_format = format;
        auto out = dir / std::string(to_string(format));
        run_golden(out, config);
        auto fixture = nlohmann::json::parse(
            testing::read_text(golden_dir() / "fixtures" / ("img_001." + std::string(to_string(format)) + ".json")));
        std::optional<nlohmann::json> produced;
        for (const auto& line : testing::read_lines(out / "conversations.jsonl")) {
            auto j = nlohmann::json::parse(line);
            if (j.at("id") == "img_001") produced = j;
        }
        bool match = produced && produced->at("conversations") == fixture.at("conversations");
        if (match && format == OutputFormat::MultiRound) {
            std::size_t groups = 0;
            for (const auto& line : testing::read_lines(out / "output.jsonl")) {
                auto j = nlohmann::json::parse(line);
                if (j.at("id") == "img_001") groups = j.at("groups").size();
            }
            auto rounds = produced->at("conversations").size() / 2;
            match = rounds == 1 + groups;
            detail += ", multi rounds " + std::to_string(rounds) + " for " + std::to_string(groups) + " groups";
        }
        if (!match) detail += ", " + std::string(to_string(format)) + " differs";
        pass = pass && match;
    }
    return {pass, "img_001 code/single/multi" + detail};
}

Outcome criterion_nlp() {
    testing::PrfScore total;
    int sentences = 0, not_idempotent = 0;
    for (const auto& sentence : testing::load_nlp_reference()) {
        ++sentences;
        std::vector<std::string> predicted;
        for (const auto& phrase : nlp::extract_noun_phrases(sentence.text)) {
            predicted.push_back(phrase.surface);
            if (nlp::normalize_phrase(phrase.normalized) != phrase.normalized) ++not_idempotent;
        }
        auto score = testing::phrase_overlap(predicted, testing::reference_chunks(sentence));
        total.matched += score.matched;
        total.predicted += score.predicted;
        total.expected += score.expected;
    }
    char f1[32];
    std::snprintf(f1, sizeof f1, "%.4f", total.f1());
    return {sentences == 50 && total.f1() >= 0.95 && not_idempotent == 0,
            std::to_string(sentences) + " sentences, F1 " + f1 + " (min 0.95), " + std::to_string(not_idempotent) +
                " non-idempotent"};
}

} // namespace

int main() {
    struct Criterion {
        int number;
        const char* name;
        std::function<Outcome()> run;
        std::optional<double> limit_seconds;
    };
    const std::vector<Criterion> criteria = {
        {1, "selection matches the argmax oracle", criterion_selection, 5.0},
        {2, "code round trip", criterion_round_trip, 10.0},
        {3, "box merge oracle", criterion_merge, 5.0},
        {4, "counting filter yield", criterion_counting_yield, std::nullopt},
        {5, "prompt fidelity", criterion_prompts, std::nullopt},
        {6, "end-to-end determinism", criterion_determinism, std::nullopt},
        {7, "ablation keeps beam 0", criterion_ablation, std::nullopt},
        {8, "output formats match fixtures", criterion_formats, std::nullopt},
        {9, "noun phrase oracle", criterion_nlp, 5.0},
    };

    int failed = 0;
    for (const auto& c : criteria) {
        auto start = std::chrono::steady_clock::now();
        Outcome outcome;
        try {
            outcome = c.run();
        } catch (const std::exception& e) {
            outcome = {false, std::string("threw: ") + e.what()};
        }
        double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        bool in_time = !c.limit_seconds || seconds < *c.limit_seconds;
        bool pass = outcome.pass && in_time;
        failed += pass ? 0 : 1;

        std::ostringstream line;
        line << (pass ? "PASS" : "FAIL") << "  criterion " << c.number << ": " << c.name << " - " << outcome.detail;
        char timing[64];
        if (c.limit_seconds)
            std::snprintf(timing, sizeof timing, " [%.2f s, limit %.0f s]", seconds, *c.limit_seconds);
        else
            std::snprintf(timing, sizeof timing, " [%.2f s]", seconds);
        line << timing;
        std::cout << line.str() << std::endl;
    }
    std::cout << (criteria.size() - failed) << "/" << criteria.size() << " criteria passed\n";
    return failed == 0 ? 0 : 1;
}
