#pragma once

#include <chrono>
#include <filesystem>
#include <fstream>
#include <functional>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include <nlohmann/json.hpp>

#include "w2c/datamodel.hpp"

namespace w2c::backends {

/// Which prompt a VLM request renders. Part of the request identity.
enum class PromptKind { Global, Detail, RegionDesc, Ocr, ValidConcept, ValidGroup };

std::string_view to_string(PromptKind kind);

struct VlmRequest {
    ImageRecord image;
    /// Absent means the full image.
    std::optional<BoundingBox> crop;
    std::string prompt;
    int beam_width = 1;
    PromptKind kind = PromptKind::Global;
};

struct VlmResponse {
    /// Index 0 is the backend's top-ranked beam.
    std::vector<std::string> candidates;

    bool operator==(const VlmResponse&) const = default;
};

struct GroundingRequest {
    ImageRecord image;
    std::vector<std::string> phrases;
    double box_threshold = 0.35;
    double text_threshold = 0.25;
};

/// One detection as the service reports it, before any filtering.
struct RawDetection {
    std::string phrase;
    BoundingBox box;
    double score = 0.0;
    /// Phrase-token score when the service reports it separately.
    std::optional<double> text_score;

    bool operator==(const RawDetection&) const = default;
};

struct RawGroundingResponse {
    std::vector<RawDetection> detections;

    bool operator==(const RawGroundingResponse&) const = default;
};

struct GroundingResponse {
    std::vector<DetectedConcept> detections;
};

class VlmBackend {
  public:
    virtual ~VlmBackend() = default;
    virtual VlmResponse complete(const VlmRequest& request) = 0;
};

class GroundingBackend {
  public:
    virtual ~GroundingBackend() = default;
    virtual RawGroundingResponse detect(const GroundingRequest& request) = 0;
};

// Wire codecs. Parsing throws ContractError on a malformed body.
nlohmann::ordered_json to_json(const VlmResponse& response);
nlohmann::ordered_json to_json(const RawGroundingResponse& response);
VlmResponse parse_vlm_response(const nlohmann::json& body);
RawGroundingResponse parse_grounding_response(const nlohmann::json& body);

/// Request body sent to the VLM endpoint.
nlohmann::ordered_json vlm_request_body(const VlmRequest& request);
/// Request body sent to the grounding endpoint.
nlohmann::ordered_json grounding_request_body(const GroundingRequest& request);

/// Calls the backend and enforces the response contract: at least one and at
/// most `beam_width` candidates.
VlmResponse vlm_complete(VlmBackend& backend, const VlmRequest& request);

/// Calls the backend, rejects detections that break the contract, and keeps
/// those at or above both thresholds. Phrases with nothing left are absent.
GroundingResponse ground_phrases(GroundingBackend& backend, const GroundingRequest& request);

/// First word of the answer, case-insensitive, punctuation stripped.
Verdict parse_yes_no(std::string_view answer);

/// SHA-256 over everything that identifies the request, including the image
/// content digest.
std::string request_key(const VlmRequest& request);
std::string request_key(const GroundingRequest& request);

/// JSONL of {"key", "response"}; read-only after load and safe to share.
class ReplayBackend : public VlmBackend, public GroundingBackend {
  public:
    ReplayBackend() = default;
    explicit ReplayBackend(std::unordered_map<std::string, nlohmann::json> entries);

    static ReplayBackend load(const std::filesystem::path& path);

    VlmResponse complete(const VlmRequest& request) override;
    RawGroundingResponse detect(const GroundingRequest& request) override;

    [[nodiscard]] bool contains(const std::string& key) const { return entries_.contains(key); }
    [[nodiscard]] std::size_t size() const { return entries_.size(); }

  private:
    const nlohmann::json& lookup(const std::string& key) const;

    std::unordered_map<std::string, nlohmann::json> entries_;
};

/// Appends {"key", "response"} lines; each key is written once.
class ReplayWriter {
  public:
    explicit ReplayWriter(const std::filesystem::path& path);

    void write(const std::string& key, const nlohmann::ordered_json& response);

  private:
    std::mutex mutex_;
    std::ofstream out_;
    std::unordered_set<std::string> written_;
};

/// Forwards to live backends and records every answer for later replay.
class RecordingBackend : public VlmBackend, public GroundingBackend {
  public:
    RecordingBackend(VlmBackend& vlm, GroundingBackend& grounding, ReplayWriter& writer)
        : vlm_(vlm), grounding_(grounding), writer_(writer) {}

    VlmResponse complete(const VlmRequest& request) override;
    RawGroundingResponse detect(const GroundingRequest& request) override;

  private:
    VlmBackend& vlm_;
    GroundingBackend& grounding_;
    ReplayWriter& writer_;
};

struct HttpOptions {
    std::string vlm_url;
    std::string grounding_url;
    /// Sent as "Authorization: Bearer <token>" when nonempty.
    std::string bearer_token;
    std::chrono::milliseconds timeout{60000};
    int max_retries = 3;
    std::chrono::milliseconds retry_backoff{200};
};

struct Url {
    std::string scheme_host_port;
    std::string path;
};

/// Splits "http://host:port/path" into the httplib client address and path.
Url parse_url(std::string_view url);

/// POSTs JSON and parses the JSON reply. Connection failures, 429 and 5xx are
/// retried with exponential backoff; other statuses fail immediately.
nlohmann::json post_json(const std::string& url, const nlohmann::ordered_json& body, const HttpOptions& options);

class HttpVlmClient : public VlmBackend {
  public:
    explicit HttpVlmClient(HttpOptions options) : options_(std::move(options)) {}

    VlmResponse complete(const VlmRequest& request) override;

  private:
    HttpOptions options_;
};

class HttpGroundingClient : public GroundingBackend {
  public:
    explicit HttpGroundingClient(HttpOptions options) : options_(std::move(options)) {}

    RawGroundingResponse detect(const GroundingRequest& request) override;

  private:
    HttpOptions options_;
};

} // namespace w2c::backends
