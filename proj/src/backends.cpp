#include "w2c/backends.hpp"

#include <algorithm>
#include <cctype>
#include <thread>

#include <httplib.h>

#include "w2c/encoding.hpp"
#include "w2c/errors.hpp"
#include "w2c/imaging.hpp"

namespace w2c::backends {

namespace {

nlohmann::ordered_json box_json(const BoundingBox& box) { return {box.x1, box.y1, box.x2, box.y2}; }

BoundingBox box_from_wire(const nlohmann::json& j) {
    if (!j.is_array() || j.size() != 4) throw ContractError("box must be [x1, y1, x2, y2]");
    int v[4];
    for (std::size_t i = 0; i < 4; ++i) {
        if (!j[i].is_number()) throw ContractError("box coordinates must be numbers");
        v[i] = static_cast<int>(std::llround(j[i].get<double>()));
    }
    return {v[0], v[1], v[2], v[3]};
}

bool in_unit_interval(double v) { return v >= 0.0 && v <= 1.0; }

} // namespace

std::string_view to_string(PromptKind kind) {
    switch (kind) {
    case PromptKind::Global: return "global";
    case PromptKind::Detail: return "detail";
    case PromptKind::RegionDesc: return "region_desc";
    case PromptKind::Ocr: return "ocr";
    case PromptKind::ValidConcept: return "valid_concept";
    case PromptKind::ValidGroup: return "valid_group";
    }
    return "global";
}

nlohmann::ordered_json to_json(const VlmResponse& response) {
    nlohmann::ordered_json j;
    j["candidates"] = response.candidates;
    return j;
}

nlohmann::ordered_json to_json(const RawGroundingResponse& response) {
    nlohmann::ordered_json j;
    auto& detections = j["detections"] = nlohmann::ordered_json::array();
    for (const auto& d : response.detections) {
        nlohmann::ordered_json item;
        item["phrase"] = d.phrase;
        item["box"] = box_json(d.box);
        item["score"] = d.score;
        if (d.text_score) item["text_score"] = *d.text_score;
        detections.push_back(std::move(item));
    }
    return j;
}

VlmResponse parse_vlm_response(const nlohmann::json& body) {
    if (!body.is_object() || !body.contains("candidates") || !body["candidates"].is_array())
        throw ContractError("VLM response needs a \"candidates\" array");
    VlmResponse response;
    for (const auto& c : body["candidates"]) {
        if (!c.is_string()) throw ContractError("VLM candidates must be strings");
        response.candidates.push_back(c.get<std::string>());
    }
    return response;
}

RawGroundingResponse parse_grounding_response(const nlohmann::json& body) {
    if (!body.is_object() || !body.contains("detections") || !body["detections"].is_array())
        throw ContractError("grounding response needs a \"detections\" array");
    RawGroundingResponse response;
    for (const auto& d : body["detections"]) {
        if (!d.is_object() || !d.contains("phrase") || !d["phrase"].is_string() || !d.contains("box") ||
            !d.contains("score") || !d["score"].is_number())
            throw ContractError("detection needs phrase, box and score");
        RawDetection detection;
        detection.phrase = d["phrase"].get<std::string>();
        detection.box = box_from_wire(d["box"]);
        detection.score = d["score"].get<double>();
        if (d.contains("text_score")) {
            if (!d["text_score"].is_number()) throw ContractError("text_score must be a number");
            detection.text_score = d["text_score"].get<double>();
        }
        response.detections.push_back(std::move(detection));
    }
    return response;
}

nlohmann::ordered_json vlm_request_body(const VlmRequest& request) {
    auto payload = imaging::prepare_payload(request.image, request.crop);
    nlohmann::ordered_json body;
    body["prompt"] = request.prompt;
    body["image_b64"] = base64_encode(payload.bytes);
    body["num_beams"] = request.beam_width;
    if (payload.crop) body["crop"] = box_json(*payload.crop);
    return body;
}

nlohmann::ordered_json grounding_request_body(const GroundingRequest& request) {
    nlohmann::ordered_json body;
    body["image_b64"] = base64_encode(read_file_bytes(request.image.path));
    body["phrases"] = request.phrases;
    body["box_threshold"] = request.box_threshold;
    body["text_threshold"] = request.text_threshold;
    return body;
}

VlmResponse vlm_complete(VlmBackend& backend, const VlmRequest& request) {
    if (request.beam_width < 1) throw InvalidValue("beam_width must be >= 1");
    if (request.crop && !request.crop->fits(request.image.width, request.image.height))
        throw InvalidValue("crop box outside image '" + request.image.id + "'");
    auto response = backend.complete(request);
    if (response.candidates.empty()) throw ContractError("VLM returned no candidates");
    if (static_cast<int>(response.candidates.size()) > request.beam_width)
        throw ContractError("VLM returned " + std::to_string(response.candidates.size()) + " candidates for " +
                            std::to_string(request.beam_width) + " beams");
    return response;
}

GroundingResponse ground_phrases(GroundingBackend& backend, const GroundingRequest& request) {
    if (request.phrases.empty()) throw InvalidValue("grounding request needs at least one phrase");
    auto raw = backend.detect(request);
    GroundingResponse response;
    for (const auto& d : raw.detections) {
        if (std::find(request.phrases.begin(), request.phrases.end(), d.phrase) == request.phrases.end())
            throw ContractError("detection for unrequested phrase '" + d.phrase + "'");
        if (!d.box.fits(request.image.width, request.image.height))
            throw ContractError("detection box for '" + d.phrase + "' outside image '" + request.image.id + "'");
        if (!in_unit_interval(d.score) || (d.text_score && !in_unit_interval(*d.text_score)))
            throw ContractError("detection score for '" + d.phrase + "' outside [0,1]");
        double text_score = d.text_score.value_or(d.score);
        if (d.score < request.box_threshold || text_score < request.text_threshold) continue;
        response.detections.push_back({d.phrase, d.box, d.score});
    }
    return response;
}

Verdict parse_yes_no(std::string_view answer) {
    std::size_t i = 0;
    while (i < answer.size() && !std::isalnum(static_cast<unsigned char>(answer[i]))) ++i;
    std::string word;
    while (i < answer.size() && std::isalnum(static_cast<unsigned char>(answer[i]))) {
        word += static_cast<char>(std::tolower(static_cast<unsigned char>(answer[i])));
        ++i;
    }
    if (word == "yes") return Verdict::Yes;
    if (word == "no") return Verdict::No;
    return Verdict::Unknown;
}

std::string request_key(const VlmRequest& request) {
    nlohmann::ordered_json identity = nlohmann::ordered_json::array();
    identity.push_back("vlm");
    identity.push_back(to_string(request.kind));
    identity.push_back(imaging::content_digest(request.image));
    identity.push_back(request.crop ? box_json(*request.crop) : nlohmann::ordered_json());
    identity.push_back(request.prompt);
    identity.push_back(request.beam_width);
    return sha256_hex(identity.dump());
}

std::string request_key(const GroundingRequest& request) {
    nlohmann::ordered_json identity = nlohmann::ordered_json::array();
    identity.push_back("grounding");
    identity.push_back(imaging::content_digest(request.image));
    identity.push_back(request.phrases);
    identity.push_back(request.box_threshold);
    identity.push_back(request.text_threshold);
    return sha256_hex(identity.dump());
}

ReplayBackend::ReplayBackend(std::unordered_map<std::string, nlohmann::json> entries)
    : entries_(std::move(entries)) {}

ReplayBackend ReplayBackend::load(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open replay file " + path.string());
    std::unordered_map<std::string, nlohmann::json> entries;
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        try {
            auto j = nlohmann::json::parse(line);
            entries.insert_or_assign(j.at("key").get<std::string>(), j.at("response"));
        } catch (const nlohmann::json::exception& e) {
            throw ConfigError(path.string() + ":" + std::to_string(line_no) + ": " + e.what());
        }
    }
    return ReplayBackend(std::move(entries));
}

const nlohmann::json& ReplayBackend::lookup(const std::string& key) const {
    auto it = entries_.find(key);
    if (it == entries_.end()) throw ReplayMiss(key);
    return it->second;
}

VlmResponse ReplayBackend::complete(const VlmRequest& request) { return parse_vlm_response(lookup(request_key(request))); }

RawGroundingResponse ReplayBackend::detect(const GroundingRequest& request) {
    return parse_grounding_response(lookup(request_key(request)));
}

ReplayWriter::ReplayWriter(const std::filesystem::path& path) : out_(path, std::ios::app) {
    if (!out_) throw ConfigError("cannot open replay file for writing: " + path.string());
    std::ifstream existing(path);
    std::string line;
    while (std::getline(existing, line)) {
        try {
            written_.insert(nlohmann::json::parse(line).at("key").get<std::string>());
        } catch (const nlohmann::json::exception&) {
            // A torn last line from an interrupted run; its key is rewritten.
        }
    }
}

void ReplayWriter::write(const std::string& key, const nlohmann::ordered_json& response) {
    std::lock_guard lock(mutex_);
    if (!written_.insert(key).second) return;
    nlohmann::ordered_json line;
    line["key"] = key;
    line["response"] = response;
    out_ << line.dump() << '\n';
    out_.flush();
}

VlmResponse RecordingBackend::complete(const VlmRequest& request) {
    auto response = vlm_.complete(request);
    writer_.write(request_key(request), to_json(response));
    return response;
}

RawGroundingResponse RecordingBackend::detect(const GroundingRequest& request) {
    auto response = grounding_.detect(request);
    writer_.write(request_key(request), to_json(response));
    return response;
}

Url parse_url(std::string_view url) {
    auto scheme_end = url.find("://");
    if (scheme_end == std::string_view::npos) throw ConfigError("URL needs a scheme: " + std::string(url));
    auto path_start = url.find('/', scheme_end + 3);
    if (path_start == std::string_view::npos) return {std::string(url), "/"};
    return {std::string(url.substr(0, path_start)), std::string(url.substr(path_start))};
}

nlohmann::json post_json(const std::string& url, const nlohmann::ordered_json& body, const HttpOptions& options) {
    auto target = parse_url(url);
    auto payload = body.dump();
    httplib::Headers headers;
    if (!options.bearer_token.empty()) headers.emplace("Authorization", "Bearer " + options.bearer_token);

    std::string last_error;
    for (int attempt = 0; attempt <= options.max_retries; ++attempt) {
        if (attempt > 0) std::this_thread::sleep_for(options.retry_backoff * (1 << (attempt - 1)));
        httplib::Client client(target.scheme_host_port);
        auto seconds = std::chrono::duration_cast<std::chrono::seconds>(options.timeout);
        auto micros = std::chrono::duration_cast<std::chrono::microseconds>(options.timeout - seconds);
        client.set_connection_timeout(seconds.count(), micros.count());
        client.set_read_timeout(seconds.count(), micros.count());
        client.set_write_timeout(seconds.count(), micros.count());

        auto result = client.Post(target.path, headers, payload, "application/json");
        if (!result) {
            last_error = "transport failure: " + httplib::to_string(result.error());
            continue;
        }
        if (result->status == 429 || result->status >= 500) {
            last_error = "HTTP " + std::to_string(result->status);
            continue;
        }
        if (result->status != 200) throw TransportError(url + ": HTTP " + std::to_string(result->status));
        try {
            return nlohmann::json::parse(result->body);
        } catch (const nlohmann::json::parse_error& e) {
            throw ContractError(url + ": response is not JSON: " + e.what());
        }
    }
    throw TransportError(url + ": " + last_error + " after " + std::to_string(options.max_retries + 1) + " attempts");
}

VlmResponse HttpVlmClient::complete(const VlmRequest& request) {
    return parse_vlm_response(post_json(options_.vlm_url, vlm_request_body(request), options_));
}

RawGroundingResponse HttpGroundingClient::detect(const GroundingRequest& request) {
    return parse_grounding_response(post_json(options_.grounding_url, grounding_request_body(request), options_));
}

} // namespace w2c::backends
