#pragma once

#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

namespace w2c {

/// One raw image of the input dataset. `content_digest` is the SHA-256 of the
/// file bytes, filled at ingestion; it is what identifies the image in request keys.
struct ImageRecord {
    std::string id;
    std::string path;
    int width = 0;
    int height = 0;
    std::string content_digest;

    /// Rejects empty ids and non-positive dimensions.
    static ImageRecord checked(std::string id, std::string path, int width, int height);

    bool operator==(const ImageRecord&) const = default;
};

/// Absolute pixel box, [x1, y1, x2, y2], half-open on the far edges.
struct BoundingBox {
    int x1 = 0;
    int y1 = 0;
    int x2 = 0;
    int y2 = 0;

    static BoundingBox checked(int x1, int y1, int x2, int y2);

    [[nodiscard]] int width() const { return x2 - x1; }
    [[nodiscard]] int height() const { return y2 - y1; }
    [[nodiscard]] long long area() const;
    [[nodiscard]] bool degenerate() const { return x1 >= x2 || y1 >= y2; }
    [[nodiscard]] bool contains(const BoundingBox& other) const;
    [[nodiscard]] bool fits(int image_width, int image_height) const;

    bool operator==(const BoundingBox&) const = default;
};

double iou(const BoundingBox& a, const BoundingBox& b);

struct NounPhrase {
    std::string surface;
    std::string normalized;

    bool operator==(const NounPhrase&) const = default;
};

struct DetectedConcept {
    std::string name;
    BoundingBox box;
    double confidence = 0.0;

    static DetectedConcept checked(std::string name, BoundingBox box, double confidence);

    bool operator==(const DetectedConcept&) const = default;
};

enum class GroupVerdict { Unchecked, Consistent, Inconsistent };

struct ConceptGroup {
    std::string name;
    std::vector<DetectedConcept> members;
    BoundingBox merged_box;
    GroupVerdict verdict = GroupVerdict::Unchecked;

    [[nodiscard]] int count() const { return static_cast<int>(members.size()); }
};

/// Answer of a yes/no validation prompt.
enum class Verdict { Yes, No, Unknown };

struct SubConcept {
    NounPhrase phrase;
    Verdict verdict = Verdict::Unknown;

    bool operator==(const SubConcept&) const = default;
};

struct CaptionCandidate {
    std::string text;
    int beam_index = 0;
    std::vector<SubConcept> sub_concepts;
    std::optional<int> score;

    bool operator==(const CaptionCandidate&) const = default;
};

struct ConceptAnnotation {
    std::string name;
    std::string caption;
    std::optional<std::string> text;
    BoundingBox box;

    bool operator==(const ConceptAnnotation&) const = default;
};

struct AnnotatedGroup {
    std::string name;
    std::vector<ConceptAnnotation> items;

    bool operator==(const AnnotatedGroup&) const = default;
};

struct W2CRecord {
    ImageRecord image;
    std::string global_caption;
    std::vector<AnnotatedGroup> groups;
    std::string code;

    bool operator==(const W2CRecord&) const = default;
};

enum class DropPolicy { DropRecord, DropGroup };
enum class OutputFormat { Code, SingleRound, MultiRound };

std::string_view to_string(DropPolicy policy);
std::string_view to_string(OutputFormat format);
std::string_view to_string(GroupVerdict verdict);
std::string_view to_string(Verdict verdict);
DropPolicy parse_drop_policy(std::string_view text);
OutputFormat parse_output_format(std::string_view text);

std::set<std::string> default_stoplist();

struct PipelineConfig {
    int beam_width = 4;
    double detector_box_threshold = 0.35;
    double detector_text_threshold = 0.25;
    double duplicate_iou_threshold = 0.9;
    double crop_pad_fraction = 0.0;
    bool counting_filter_enabled = true;
    bool reranking_enabled = true;
    DropPolicy drop_policy = DropPolicy::DropRecord;
    OutputFormat output_format = OutputFormat::Code;
    int max_concurrent_requests = 4;
    std::set<std::string> stoplist = default_stoplist();
    /// Feed every caption beam (not just the top one) into phrase extraction.
    bool use_all_caption_beams = false;

    /// Throws ConfigError naming the first out-of-range field.
    void validate() const;
};

nlohmann::ordered_json to_json(const PipelineConfig& config);
/// Missing keys keep their defaults; unknown keys are rejected.
PipelineConfig pipeline_config_from_json(const nlohmann::json& j);

/// Empty iff every invariant of the record (and of the types it holds) holds,
/// including the code round-trip.
std::vector<std::string> validate_record(const W2CRecord& record);

/// One output line, keys in the fixed order id, global_caption, groups, code.
nlohmann::ordered_json record_to_json(const W2CRecord& record);
std::string record_to_jsonl(const W2CRecord& record);
/// Inverse of record_to_json. Image dimensions are recovered from the code
/// field; the image path is not part of the line and comes back empty.
W2CRecord record_from_json(const nlohmann::json& j);

} // namespace w2c
