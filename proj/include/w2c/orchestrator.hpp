#pragma once

#include <atomic>
#include <filesystem>
#include <fstream>
#include <future>
#include <memory>
#include <mutex>
#include <optional>
#include <semaphore>
#include <string>
#include <unordered_map>
#include <vector>

#include <nlohmann/json.hpp>

#include "w2c/backends.hpp"
#include "w2c/datamodel.hpp"
#include "w2c/stages.hpp"

namespace w2c::orchestrator {

enum class Stage { Global, Detail, RegionDesc, Ocr, ValidConcept, ValidGroup, Grounding };

std::string_view to_string(Stage stage);
Stage parse_stage(std::string_view text);

struct StageCacheEntry {
    std::string request_key;
    Stage stage = Stage::Global;
    nlohmann::json payload;
};

struct RunStats {
    long long images_in = 0;
    long long images_out = 0;
    long long dropped = 0;
    long long dropped_no_concepts = 0;
    long long dropped_inconsistent = 0;
    long long errored = 0;
    long long concepts_detected = 0;
    long long groups_total = 0;
    long long groups_inconsistent = 0;
    long long candidates_scored = 0;
    long long backend_calls = 0;
    long long cache_hits = 0;

    RunStats& operator+=(const RunStats& other);
    bool operator==(const RunStats&) const = default;
};

nlohmann::ordered_json to_json(const RunStats& stats);
RunStats run_stats_from_json(const nlohmann::json& j);

/// Manifest lines {"id","path","width","height"}; relative paths resolve
/// against the manifest's directory. Ids must be unique.
std::vector<ImageRecord> read_manifest(const std::filesystem::path& path);

/// Backend answers keyed by request key, persisted as JSONL so later runs
/// replay them. Identical concurrent requests share one backend call, and at
/// most `max_in_flight` calls run at once.
class StageCache {
  public:
    struct Counters {
        long long backend_calls = 0;
        long long cache_hits = 0;
    };

    StageCache(const std::filesystem::path& file, backends::VlmBackend& vlm, backends::GroundingBackend& grounding,
               int max_in_flight);

    backends::VlmResponse complete(const backends::VlmRequest& request, Counters& counters);
    backends::RawGroundingResponse detect(const backends::GroundingRequest& request, Counters& counters);

    [[nodiscard]] std::size_t size() const;

  private:
    template <typename Call>
    nlohmann::json fetch(const std::string& key, Stage stage, Call&& call, Counters& counters);

    mutable std::mutex mutex_;
    std::unordered_map<std::string, StageCacheEntry> entries_;
    std::unordered_map<std::string, std::shared_future<nlohmann::json>> in_flight_;
    std::ofstream out_;
    backends::VlmBackend& vlm_;
    backends::GroundingBackend& grounding_;
    std::counting_semaphore<> gate_;
};

/// Keeps the record when no group is inconsistent. Otherwise DropRecord
/// discards it and DropGroup removes only the inconsistent groups (and the
/// record when none survive). `verdicts` runs parallel to `record.groups`.
std::optional<W2CRecord> apply_drop_policy(W2CRecord record, const std::vector<GroupVerdict>& verdicts,
                                           DropPolicy policy);

enum class ImageStatus { Ok, Dropped, Error };

struct ImageOutcome {
    ImageStatus status = ImageStatus::Ok;
    std::string reason;
    std::optional<W2CRecord> record;
    RunStats stats;
};

/// The whole construction pipeline for one image, against
/// any backend pair. Backend and stage errors propagate.
ImageOutcome process_image(const ImageRecord& image, backends::VlmBackend& vlm, backends::GroundingBackend& grounding,
                           const PipelineConfig& config, const stages::PromptSet& prompts);

struct RunOptions {
    std::filesystem::path out_dir;
    bool resume = false;
    /// Stop after this many newly processed images (simulates an interrupted run).
    std::optional<long long> limit;
};

struct RunResult {
    RunStats stats;
    bool complete = false;
};

/// Hash of everything in the config and prompts that can change the output.
std::string config_hash(const PipelineConfig& config, const stages::PromptSet& prompts);

/// Runs every manifest image into `out_dir`: output.jsonl (records in manifest
/// order), conversations.jsonl, stats.json, plus run.json, journal.jsonl and
/// cache.jsonl for resuming. Throws ConfigMismatch when resuming a run made
/// with a different config or manifest.
RunResult run_pipeline(const std::filesystem::path& manifest, const PipelineConfig& config,
                       const stages::PromptSet& prompts, backends::VlmBackend& vlm,
                       backends::GroundingBackend& grounding, const RunOptions& options);

RunStats load_stats(const std::filesystem::path& out_dir);

} // namespace w2c::orchestrator
