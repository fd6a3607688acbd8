#include "w2c/consistency.hpp"

#include <algorithm>

#include "w2c/errors.hpp"
#include "w2c/nlp.hpp"

namespace w2c::consistency {

std::vector<ConceptGroup> group_concepts(const std::vector<DetectedConcept>& concepts) {
    std::vector<ConceptGroup> groups;
    for (const auto& c : concepts) {
        auto it = std::find_if(groups.begin(), groups.end(), [&](const ConceptGroup& g) { return g.name == c.name; });
        if (it == groups.end()) {
            groups.push_back({c.name, {c}, c.box, GroupVerdict::Unchecked});
        } else {
            it->members.push_back(c);
        }
    }
    for (auto& group : groups) {
        std::vector<BoundingBox> boxes;
        for (const auto& m : group.members) boxes.push_back(m.box);
        group.merged_box = merge_boxes(boxes);
    }
    return groups;
}

BoundingBox merge_boxes(const std::vector<BoundingBox>& boxes) {
    if (boxes.empty()) throw EmptyInput("merge_boxes needs at least one box");
    BoundingBox merged = boxes.front();
    for (const auto& b : boxes) {
        merged.x1 = std::min(merged.x1, b.x1);
        merged.y1 = std::min(merged.y1, b.y1);
        merged.x2 = std::max(merged.x2, b.x2);
        merged.y2 = std::max(merged.y2, b.y2);
    }
    return merged;
}

GroupVerdict counting_filter(stages::StageContext& ctx, const ImageRecord& image, const ConceptGroup& group) {
    backends::VlmRequest request{image, group.merged_box, ctx.prompts.valid_group(group.count(), group.name), 1,
                                 backends::PromptKind::ValidGroup};
    auto answer = backends::vlm_complete(ctx.vlm, request).candidates.front();
    return backends::parse_yes_no(answer) == Verdict::Yes ? GroupVerdict::Consistent : GroupVerdict::Inconsistent;
}

std::vector<CaptionCandidate> extract_candidate_concepts(std::vector<CaptionCandidate> candidates,
                                                         const std::set<std::string>& stoplist) {
    if (candidates.empty()) throw EmptyInput("no caption candidates");
    for (auto& candidate : candidates) {
        candidate.sub_concepts.clear();
        for (auto& phrase : nlp::dedup_phrases(nlp::extract_noun_phrases(candidate.text), stoplist))
            candidate.sub_concepts.push_back({std::move(phrase), Verdict::Unknown});
        candidate.score.reset();
    }
    return candidates;
}

std::map<std::string, Verdict> validate_concepts(stages::StageContext& ctx, const ImageRecord& image,
                                                 const BoundingBox& group_box, const std::set<std::string>& phrases,
                                                 ValidationMemo& memo) {
    if (phrases.empty()) throw EmptyInput("no phrases to validate");
    std::map<std::string, Verdict> verdicts;
    for (const auto& phrase : phrases) {
        ValidationMemo::Key key{group_box.x1, group_box.y1, group_box.x2, group_box.y2, phrase};
        verdicts[phrase] = memo.get_or_compute(key, [&] {
            backends::VlmRequest request{image, group_box, ctx.prompts.valid_concept(phrase), 1,
                                         backends::PromptKind::ValidConcept};
            return backends::parse_yes_no(backends::vlm_complete(ctx.vlm, request).candidates.front());
        });
    }
    return verdicts;
}

int score_candidate(const CaptionCandidate& candidate, const std::map<std::string, Verdict>& verdicts) {
    int score = 0;
    for (const auto& sub : candidate.sub_concepts) {
        auto it = verdicts.find(sub.phrase.normalized);
        if (it == verdicts.end()) throw MissingVerdict("no verdict for '" + sub.phrase.normalized + "'");
        if (it->second == Verdict::Yes) ++score;
        if (it->second == Verdict::No) --score;
    }
    return score;
}

const CaptionCandidate& select_caption(const std::vector<CaptionCandidate>& candidates) {
    if (candidates.empty()) throw EmptyInput("no caption candidates to select from");
    const CaptionCandidate* best = nullptr;
    for (const auto& c : candidates) {
        if (!c.score) throw InvalidValue("candidate at beam " + std::to_string(c.beam_index) + " is unscored");
        if (!best || *c.score > *best->score || (*c.score == *best->score && c.beam_index < best->beam_index))
            best = &c;
    }
    return *best;
}

std::vector<CaptionCandidate> rerank_candidates(stages::StageContext& ctx, const ImageRecord& image,
                                                const BoundingBox& group_box, std::vector<CaptionCandidate> candidates,
                                                ValidationMemo& memo) {
    candidates = extract_candidate_concepts(std::move(candidates), ctx.config.stoplist);
    std::set<std::string> phrases;
    for (const auto& c : candidates) {
        for (const auto& sub : c.sub_concepts) phrases.insert(sub.phrase.normalized);
    }
    std::map<std::string, Verdict> verdicts;
    if (!phrases.empty()) verdicts = validate_concepts(ctx, image, group_box, phrases, memo);
    for (auto& c : candidates) {
        for (auto& sub : c.sub_concepts) sub.verdict = verdicts.at(sub.phrase.normalized);
        c.score = score_candidate(c, verdicts);
    }
    return candidates;
}

} // namespace w2c::consistency
