#include "w2c/datamodel.hpp"

#include <algorithm>
#include <cmath>

#include "w2c/codegen.hpp"
#include "w2c/errors.hpp"

namespace w2c {

ImageRecord ImageRecord::checked(std::string id, std::string path, int width, int height) {
    if (id.empty()) throw InvalidValue("image id must not be empty");
    if (width <= 0 || height <= 0)
        throw InvalidValue("image '" + id + "' has non-positive dimensions " + std::to_string(width) + "x" +
                           std::to_string(height));
    return {std::move(id), std::move(path), width, height, {}};
}

BoundingBox BoundingBox::checked(int x1, int y1, int x2, int y2) {
    BoundingBox box{x1, y1, x2, y2};
    if (box.degenerate() || x1 < 0 || y1 < 0) throw InvalidValue("degenerate or negative box");
    return box;
}

long long BoundingBox::area() const {
    if (degenerate()) return 0;
    return static_cast<long long>(width()) * height();
}

bool BoundingBox::contains(const BoundingBox& other) const {
    return x1 <= other.x1 && y1 <= other.y1 && x2 >= other.x2 && y2 >= other.y2;
}

bool BoundingBox::fits(int image_width, int image_height) const {
    return !degenerate() && x1 >= 0 && y1 >= 0 && x2 <= image_width && y2 <= image_height;
}

double iou(const BoundingBox& a, const BoundingBox& b) {
    BoundingBox inter{std::max(a.x1, b.x1), std::max(a.y1, b.y1), std::min(a.x2, b.x2), std::min(a.y2, b.y2)};
    auto overlap = inter.area();
    auto total = a.area() + b.area() - overlap;
    return total <= 0 ? 0.0 : static_cast<double>(overlap) / static_cast<double>(total);
}

DetectedConcept DetectedConcept::checked(std::string name, BoundingBox box, double confidence) {
    if (name.empty()) throw InvalidValue("concept name must not be empty");
    if (!(confidence >= 0.0 && confidence <= 1.0))
        throw InvalidValue("confidence of '" + name + "' outside [0,1]");
    if (box.degenerate()) throw InvalidValue("degenerate box for '" + name + "'");
    return {std::move(name), box, confidence};
}

std::string_view to_string(DropPolicy policy) {
    return policy == DropPolicy::DropRecord ? "record" : "group";
}

std::string_view to_string(OutputFormat format) {
    switch (format) {
    case OutputFormat::Code: return "code";
    case OutputFormat::SingleRound: return "single";
    case OutputFormat::MultiRound: return "multi";
    }
    return "code";
}

std::string_view to_string(GroupVerdict verdict) {
    switch (verdict) {
    case GroupVerdict::Unchecked: return "unchecked";
    case GroupVerdict::Consistent: return "consistent";
    case GroupVerdict::Inconsistent: return "inconsistent";
    }
    return "unchecked";
}

std::string_view to_string(Verdict verdict) {
    switch (verdict) {
    case Verdict::Yes: return "yes";
    case Verdict::No: return "no";
    case Verdict::Unknown: return "unknown";
    }
    return "unknown";
}

DropPolicy parse_drop_policy(std::string_view text) {
    if (text == "record") return DropPolicy::DropRecord;
    if (text == "group") return DropPolicy::DropGroup;
    throw ConfigError("drop policy must be 'record' or 'group', got '" + std::string(text) + "'");
}

OutputFormat parse_output_format(std::string_view text) {
    if (text == "code") return OutputFormat::Code;
    if (text == "single") return OutputFormat::SingleRound;
    if (text == "multi") return OutputFormat::MultiRound;
    throw ConfigError("output format must be code, single or multi, got '" + std::string(text) + "'");
}

std::set<std::string> default_stoplist() {
    return {"image", "picture", "photo", "background", "scene", "view", "side", "part"};
}

void PipelineConfig::validate() const {
    auto unit = [](double v) { return v >= 0.0 && v <= 1.0; };
    if (beam_width < 1) throw ConfigError("beam_width must be >= 1");
    if (!unit(detector_box_threshold)) throw ConfigError("detector_box_threshold must be in [0,1]");
    if (!unit(detector_text_threshold)) throw ConfigError("detector_text_threshold must be in [0,1]");
    if (!unit(duplicate_iou_threshold)) throw ConfigError("duplicate_iou_threshold must be in [0,1]");
    if (!(crop_pad_fraction >= 0.0) || !std::isfinite(crop_pad_fraction))
        throw ConfigError("crop_pad_fraction must be >= 0");
    if (max_concurrent_requests < 1) throw ConfigError("max_concurrent_requests must be >= 1");
}

nlohmann::ordered_json to_json(const PipelineConfig& config) {
    nlohmann::ordered_json j;
    j["beam_width"] = config.beam_width;
    j["detector_box_threshold"] = config.detector_box_threshold;
    j["detector_text_threshold"] = config.detector_text_threshold;
    j["duplicate_iou_threshold"] = config.duplicate_iou_threshold;
    j["crop_pad_fraction"] = config.crop_pad_fraction;
    j["counting_filter_enabled"] = config.counting_filter_enabled;
    j["reranking_enabled"] = config.reranking_enabled;
    j["drop_policy"] = to_string(config.drop_policy);
    j["output_format"] = to_string(config.output_format);
    j["max_concurrent_requests"] = config.max_concurrent_requests;
    j["stoplist"] = config.stoplist;
    j["use_all_caption_beams"] = config.use_all_caption_beams;
    return j;
}

PipelineConfig pipeline_config_from_json(const nlohmann::json& j) {
    if (!j.is_object()) throw ConfigError("pipeline config must be a JSON object");
    PipelineConfig config;
    try {
        for (const auto& [key, value] : j.items()) {
            if (key == "beam_width") config.beam_width = value.get<int>();
            else if (key == "detector_box_threshold") config.detector_box_threshold = value.get<double>();
            else if (key == "detector_text_threshold") config.detector_text_threshold = value.get<double>();
            else if (key == "duplicate_iou_threshold") config.duplicate_iou_threshold = value.get<double>();
            else if (key == "crop_pad_fraction") config.crop_pad_fraction = value.get<double>();
            else if (key == "counting_filter_enabled") config.counting_filter_enabled = value.get<bool>();
            else if (key == "reranking_enabled") config.reranking_enabled = value.get<bool>();
            else if (key == "drop_policy") config.drop_policy = parse_drop_policy(value.get<std::string>());
            else if (key == "output_format") config.output_format = parse_output_format(value.get<std::string>());
            else if (key == "max_concurrent_requests") config.max_concurrent_requests = value.get<int>();
            else if (key == "stoplist") config.stoplist = value.get<std::set<std::string>>();
            else if (key == "use_all_caption_beams") config.use_all_caption_beams = value.get<bool>();
            else throw ConfigError("unknown config key '" + key + "'");
        }
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("bad config value: ") + e.what());
    }
    config.validate();
    return config;
}

nlohmann::ordered_json record_to_json(const W2CRecord& record) {
    nlohmann::ordered_json j;
    j["id"] = record.image.id;
    j["global_caption"] = record.global_caption;
    auto& groups = j["groups"] = nlohmann::ordered_json::array();
    for (const auto& group : record.groups) {
        nlohmann::ordered_json g;
        g["name"] = group.name;
        auto& items = g["items"] = nlohmann::ordered_json::array();
        for (const auto& item : group.items) {
            nlohmann::ordered_json it;
            it["caption"] = item.caption;
            if (item.text) it["text"] = *item.text;
            it["bbox"] = {item.box.x1, item.box.y1, item.box.x2, item.box.y2};
            items.push_back(std::move(it));
        }
        groups.push_back(std::move(g));
    }
    j["code"] = record.code;
    return j;
}

std::string record_to_jsonl(const W2CRecord& record) { return record_to_json(record).dump(); }

W2CRecord record_from_json(const nlohmann::json& j) {
    W2CRecord record;
    try {
        record.image.id = j.at("id").get<std::string>();
        record.global_caption = j.at("global_caption").get<std::string>();
        for (const auto& g : j.at("groups")) {
            AnnotatedGroup group;
            group.name = g.at("name").get<std::string>();
            for (const auto& it : g.at("items")) {
                ConceptAnnotation item;
                item.name = group.name;
                item.caption = it.at("caption").get<std::string>();
                if (it.contains("text")) item.text = it.at("text").get<std::string>();
                auto box = it.at("bbox").get<std::vector<int>>();
                if (box.size() != 4) throw SchemaError("bbox must have four coordinates");
                item.box = {box[0], box[1], box[2], box[3]};
                group.items.push_back(std::move(item));
            }
            record.groups.push_back(std::move(group));
        }
        record.code = j.at("code").get<std::string>();
    } catch (const nlohmann::json::exception& e) {
        throw SchemaError(std::string("malformed record line: ") + e.what());
    }
    try {
        auto content = codegen::parse_code(record.code);
        record.image.width = content.width;
        record.image.height = content.height;
    } catch (const Error&) {
        // Dimensions stay zero; validate_record reports the broken code field.
    }
    return record;
}

std::vector<std::string> validate_record(const W2CRecord& record) {
    std::vector<std::string> problems;
    const auto& image = record.image;
    if (image.id.empty()) problems.emplace_back("empty image id");
    if (image.width <= 0 || image.height <= 0) problems.emplace_back("non-positive image dimensions");

    std::set<std::string> names;
    for (const auto& group : record.groups) {
        if (group.name.empty()) problems.emplace_back("empty group name");
        if (!names.insert(group.name).second) problems.push_back("duplicate group name '" + group.name + "'");
        if (group.items.empty()) problems.push_back("group '" + group.name + "' has no items");
        for (const auto& item : group.items) {
            const auto& b = item.box;
            std::string where = "'" + group.name + "' box [" + std::to_string(b.x1) + "," + std::to_string(b.y1) +
                                "," + std::to_string(b.x2) + "," + std::to_string(b.y2) + "]";
            if (b.degenerate()) {
                problems.push_back("degenerate box " + where);
            } else if (!b.fits(image.width, image.height)) {
                problems.push_back("box outside image " + where);
            }
            if (item.name != group.name) problems.push_back("item name differs from group '" + group.name + "'");
            if (item.caption.empty()) problems.push_back("empty caption in '" + group.name + "'");
            if (item.text && item.text->find_first_not_of(" \t\r\n") == std::string::npos)
                problems.push_back("blank OCR text in '" + group.name + "'");
        }
    }

    try {
        if (codegen::parse_code(record.code) != codegen::content_of(record))
            problems.emplace_back("code/structure mismatch");
    } catch (const Error& e) {
        problems.push_back(std::string("code/structure mismatch: ") + e.what());
    }
    return problems;
}

} // namespace w2c
