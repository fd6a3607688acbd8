#include "w2c/stages.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <set>

#include "w2c/errors.hpp"
#include "w2c/imaging.hpp"
#include "w2c/nlp.hpp"

namespace w2c::stages {

namespace {

constexpr std::string_view kGlobalPrompt = "Please provide a simple sentence that describes this image accurately.";
constexpr std::string_view kDetailPrompt =
    "Please describe all the visual concepts in the image in detail, but use concise words with no more than 120 "
    "words.";
constexpr std::string_view kRegionDescPrompt =
    "From the image, provide one sentence that describes {e} (you should try your best to include attributes like "
    "shape, color or material), especially, using {e} as the beginning of your answer.";
constexpr std::string_view kOcrPrompt =
    "List all the text in the image, answer with the ocr tokens only, and answer 'No' with one word if there isn't "
    "any.";
constexpr std::string_view kValidConceptPrompt =
    "Is '{e}' a valid and visible visual concept in the image? Answer yes or no with only one single word.";
constexpr std::string_view kValidGroupPrompt =
    "Is there {parse times} or more {group key} in the image? Answer yes or no with a single word.";

std::size_t slot(PromptKind kind) { return static_cast<std::size_t>(kind); }

// Placeholders each template may use, with sample values for checking.
std::map<std::string, std::string> allowed_placeholders(PromptKind kind) {
    switch (kind) {
    case PromptKind::RegionDesc:
    case PromptKind::ValidConcept: return {{"e", "x"}};
    case PromptKind::ValidGroup: return {{"parse times", "1"}, {"group key", "x"}};
    default: return {};
    }
}

std::string trim(std::string_view text) {
    auto first = text.find_first_not_of(" \t\r\n");
    if (first == std::string_view::npos) return {};
    auto last = text.find_last_not_of(" \t\r\n");
    return std::string(text.substr(first, last - first + 1));
}

std::vector<std::string> nonblank(const std::vector<std::string>& candidates) {
    std::vector<std::string> out;
    for (const auto& c : candidates) {
        if (auto t = trim(c); !t.empty()) out.push_back(std::move(t));
    }
    return out;
}

} // namespace

std::string PromptTemplate::render(const std::map<std::string, std::string>& values) const {
    std::string out;
    std::size_t pos = 0;
    while (pos < text.size()) {
        auto open = text.find('{', pos);
        if (open == std::string::npos) {
            out.append(text, pos);
            break;
        }
        out.append(text, pos, open - pos);
        auto close = text.find('}', open);
        if (close == std::string::npos) throw TemplateError("unterminated placeholder in " + std::string(to_string(kind)));
        auto name = text.substr(open + 1, close - open - 1);
        auto it = values.find(name);
        if (it == values.end())
            throw TemplateError("template " + std::string(to_string(kind)) + " uses unknown placeholder {" + name + "}");
        out += it->second;
        pos = close + 1;
    }
    return out;
}

PromptKind parse_prompt_kind(std::string_view name) {
    for (auto kind : kAllPromptKinds) {
        if (to_string(kind) == name) return kind;
    }
    throw ConfigError("unknown prompt template '" + std::string(name) + "'");
}

PromptSet::PromptSet() {
    templates_[slot(PromptKind::Global)] = {PromptKind::Global, std::string(kGlobalPrompt)};
    templates_[slot(PromptKind::Detail)] = {PromptKind::Detail, std::string(kDetailPrompt)};
    templates_[slot(PromptKind::RegionDesc)] = {PromptKind::RegionDesc, std::string(kRegionDescPrompt)};
    templates_[slot(PromptKind::Ocr)] = {PromptKind::Ocr, std::string(kOcrPrompt)};
    templates_[slot(PromptKind::ValidConcept)] = {PromptKind::ValidConcept, std::string(kValidConceptPrompt)};
    templates_[slot(PromptKind::ValidGroup)] = {PromptKind::ValidGroup, std::string(kValidGroupPrompt)};
}

PromptSet PromptSet::from_json(const nlohmann::json& j) {
    if (!j.is_object()) throw ConfigError("prompt templates must be a JSON object");
    PromptSet set;
    for (const auto& [name, value] : j.items()) {
        auto kind = parse_prompt_kind(name);
        if (!value.is_string()) throw ConfigError("prompt template '" + name + "' must be a string");
        PromptTemplate candidate{kind, value.get<std::string>()};
        auto sample = candidate.render(allowed_placeholders(kind));
        if (sample.find_first_of("{}") != std::string::npos)
            throw TemplateError("template " + name + " leaves braces after rendering");
        set.templates_[slot(kind)] = std::move(candidate);
    }
    return set;
}

PromptSet PromptSet::load(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open prompt template file " + path.string());
    try {
        return from_json(nlohmann::json::parse(in));
    } catch (const nlohmann::json::parse_error& e) {
        throw ConfigError(path.string() + ": " + e.what());
    }
}

const PromptTemplate& PromptSet::get(PromptKind kind) const { return templates_[slot(kind)]; }

std::string PromptSet::global() const { return get(PromptKind::Global).render({}); }
std::string PromptSet::detail() const { return get(PromptKind::Detail).render({}); }
std::string PromptSet::ocr() const { return get(PromptKind::Ocr).render({}); }

std::string PromptSet::region_desc(std::string_view entity) const {
    return get(PromptKind::RegionDesc).render({{"e", std::string(entity)}});
}

std::string PromptSet::valid_concept(std::string_view entity) const {
    return get(PromptKind::ValidConcept).render({{"e", std::string(entity)}});
}

std::string PromptSet::valid_group(int count, std::string_view group_key) const {
    return get(PromptKind::ValidGroup).render({{"parse times", std::to_string(count)}, {"group key", std::string(group_key)}});
}

nlohmann::ordered_json PromptSet::to_json() const {
    nlohmann::ordered_json j;
    for (auto kind : kAllPromptKinds) j[std::string(to_string(kind))] = get(kind).text;
    return j;
}

GlobalCaptions gen_global_captions(StageContext& ctx, const ImageRecord& image) {
    auto ask = [&](PromptKind kind, std::string prompt) {
        backends::VlmRequest request{image, std::nullopt, std::move(prompt), ctx.config.beam_width, kind};
        auto beams = nonblank(backends::vlm_complete(ctx.vlm, request).candidates);
        if (beams.empty())
            throw EmptyGeneration(std::string(to_string(kind)) + " caption of '" + image.id + "' is blank");
        return beams;
    };
    auto general = ask(PromptKind::Global, ctx.prompts.global());
    auto detail = ask(PromptKind::Detail, ctx.prompts.detail());

    GlobalCaptions captions{general.front(), detail.front(), {}};
    if (ctx.config.use_all_caption_beams) {
        captions.extra_beams.assign(general.begin() + 1, general.end());
        captions.extra_beams.insert(captions.extra_beams.end(), detail.begin() + 1, detail.end());
    }
    return captions;
}

std::vector<std::string> concept_phrases(const GlobalCaptions& captions, const std::set<std::string>& stoplist) {
    auto phrases = nlp::extract_noun_phrases(captions.general);
    auto append = [&](const std::string& text) {
        auto more = nlp::extract_noun_phrases(text);
        phrases.insert(phrases.end(), more.begin(), more.end());
    };
    append(captions.detail);
    for (const auto& beam : captions.extra_beams) append(beam);

    std::vector<std::string> names;
    for (const auto& phrase : nlp::dedup_phrases(phrases, stoplist)) names.push_back(phrase.normalized);
    return names;
}

std::vector<DetectedConcept> collapse_duplicates(const std::vector<DetectedConcept>& detections,
                                                 const std::vector<std::string>& phrase_order, double iou_threshold) {
    std::vector<DetectedConcept> out;
    for (const auto& phrase : phrase_order) {
        std::vector<DetectedConcept> same;
        std::copy_if(detections.begin(), detections.end(), std::back_inserter(same),
                     [&](const DetectedConcept& d) { return d.name == phrase; });
        std::sort(same.begin(), same.end(), [](const DetectedConcept& a, const DetectedConcept& b) {
            if (a.confidence != b.confidence) return a.confidence > b.confidence;
            return std::tie(a.box.x1, a.box.y1, a.box.x2, a.box.y2) < std::tie(b.box.x1, b.box.y1, b.box.x2, b.box.y2);
        });
        std::vector<DetectedConcept> kept;
        for (const auto& d : same) {
            bool duplicate = std::any_of(kept.begin(), kept.end(),
                                         [&](const DetectedConcept& k) { return iou(k.box, d.box) > iou_threshold; });
            if (!duplicate) kept.push_back(d);
        }
        out.insert(out.end(), kept.begin(), kept.end());
    }
    return out;
}

std::vector<DetectedConcept> extract_concepts(StageContext& ctx, const ImageRecord& image,
                                              const GlobalCaptions& captions) {
    auto phrases = concept_phrases(captions, ctx.config.stoplist);
    if (phrases.empty()) return {};
    backends::GroundingRequest request{image, phrases, ctx.config.detector_box_threshold,
                                       ctx.config.detector_text_threshold};
    auto response = backends::ground_phrases(ctx.grounding, request);
    return collapse_duplicates(response.detections, phrases, ctx.config.duplicate_iou_threshold);
}

BoundingBox region_crop(const ImageRecord& image, const BoundingBox& box, const PipelineConfig& config) {
    return imaging::pad_and_clamp(box, config.crop_pad_fraction, image.width, image.height);
}

std::vector<CaptionCandidate> gen_region_captions(StageContext& ctx, const ImageRecord& image,
                                                  const DetectedConcept& concept_) {
    backends::VlmRequest request{image, region_crop(image, concept_.box, ctx.config),
                                 ctx.prompts.region_desc(concept_.name), ctx.config.beam_width,
                                 PromptKind::RegionDesc};
    auto response = backends::vlm_complete(ctx.vlm, request);
    std::vector<CaptionCandidate> candidates;
    std::set<std::string> seen;
    for (std::size_t i = 0; i < response.candidates.size(); ++i) {
        auto text = trim(response.candidates[i]);
        if (text.empty() || !seen.insert(text).second) continue;
        candidates.push_back({std::move(text), static_cast<int>(i), {}, std::nullopt});
    }
    if (candidates.empty()) throw EmptyGeneration("region captions of '" + concept_.name + "' in '" + image.id + "' are blank");
    return candidates;
}

std::optional<std::string> extract_ocr(StageContext& ctx, const ImageRecord& image, const DetectedConcept& concept_) {
    backends::VlmRequest request{image, region_crop(image, concept_.box, ctx.config), ctx.prompts.ocr(), 1,
                                 PromptKind::Ocr};
    auto answer = trim(backends::vlm_complete(ctx.vlm, request).candidates.front());
    auto sentinel = answer;
    while (!sentinel.empty() && std::ispunct(static_cast<unsigned char>(sentinel.back()))) sentinel.pop_back();
    if (answer.empty() || nlp::to_lower_ascii(trim(sentinel)) == "no") return std::nullopt;
    return answer;
}

} // namespace w2c::stages
