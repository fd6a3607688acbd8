#pragma once

#include <array>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "w2c/backends.hpp"
#include "w2c/datamodel.hpp"

namespace w2c::stages {

using backends::PromptKind;

inline constexpr std::array kAllPromptKinds = {PromptKind::Global,     PromptKind::Detail,
                                               PromptKind::RegionDesc, PromptKind::Ocr,
                                               PromptKind::ValidConcept, PromptKind::ValidGroup};

struct PromptTemplate {
    PromptKind kind = PromptKind::Global;
    std::string text;

    /// Fills {e}, {parse times} and {group key}. Throws TemplateError when the
    /// template uses a placeholder that was not supplied.
    [[nodiscard]] std::string render(const std::map<std::string, std::string>& values) const;
};

/// The six instruction prompts of the construction pipeline.
class PromptSet {
  public:
    /// Built-in prompt wording.
    PromptSet();

    /// JSON object keyed by template name; missing names keep the built-in text.
    static PromptSet from_json(const nlohmann::json& j);
    static PromptSet load(const std::filesystem::path& path);

    [[nodiscard]] const PromptTemplate& get(PromptKind kind) const;

    [[nodiscard]] std::string global() const;
    [[nodiscard]] std::string detail() const;
    [[nodiscard]] std::string region_desc(std::string_view entity) const;
    [[nodiscard]] std::string ocr() const;
    [[nodiscard]] std::string valid_concept(std::string_view entity) const;
    [[nodiscard]] std::string valid_group(int count, std::string_view group_key) const;

    [[nodiscard]] nlohmann::ordered_json to_json() const;

  private:
    std::array<PromptTemplate, kAllPromptKinds.size()> templates_;
};

PromptKind parse_prompt_kind(std::string_view name);

struct StageContext {
    backends::VlmBackend& vlm;
    backends::GroundingBackend& grounding;
    const PipelineConfig& config;
    const PromptSet& prompts;
};

struct GlobalCaptions {
    std::string general;
    std::string detail;
    /// All nonblank beams of both prompts, top beams first; only filled when
    /// the config asks for every caption beam.
    std::vector<std::string> extra_beams;
};

/// Top beam of the general and the detail prompt on the full image. Throws
/// EmptyGeneration when a prompt yields only blank text.
GlobalCaptions gen_global_captions(StageContext& ctx, const ImageRecord& image);

/// Per phrase, keeps the highest-confidence detection of every cluster whose
/// pairwise IoU exceeds `iou_threshold`. Output is in phrase order, then by
/// (-confidence, x1, y1).
std::vector<DetectedConcept> collapse_duplicates(const std::vector<DetectedConcept>& detections,
                                                 const std::vector<std::string>& phrase_order, double iou_threshold);

/// Distinct phrases of the captions, in the order they are sent to the detector.
std::vector<std::string> concept_phrases(const GlobalCaptions& captions, const std::set<std::string>& stoplist);

std::vector<DetectedConcept> extract_concepts(StageContext& ctx, const ImageRecord& image,
                                              const GlobalCaptions& captions);

/// The rectangle a region query is asked about.
BoundingBox region_crop(const ImageRecord& image, const BoundingBox& box, const PipelineConfig& config);

/// Beam candidates for one concept, blank and duplicate texts removed (the
/// lowest beam index survives).
std::vector<CaptionCandidate> gen_region_captions(StageContext& ctx, const ImageRecord& image,
                                                  const DetectedConcept& concept_);

/// Absent when the model answers the "No" sentinel.
std::optional<std::string> extract_ocr(StageContext& ctx, const ImageRecord& image, const DetectedConcept& concept_);

} // namespace w2c::stages
