#include "w2c/orchestrator.hpp"

#include <algorithm>
#include <map>
#include <set>
#include <thread>

#include "w2c/codegen.hpp"
#include "w2c/consistency.hpp"
#include "w2c/encoding.hpp"
#include "w2c/errors.hpp"
#include "w2c/imaging.hpp"

namespace w2c::orchestrator {

namespace fs = std::filesystem;

namespace {

constexpr const char* kRunFile = "run.json";
constexpr const char* kJournalFile = "journal.jsonl";
constexpr const char* kCacheFile = "cache.jsonl";
constexpr const char* kOutputFile = "output.jsonl";
constexpr const char* kConversationFile = "conversations.jsonl";
constexpr const char* kStatsFile = "stats.json";

Stage stage_of(backends::PromptKind kind) {
    switch (kind) {
    case backends::PromptKind::Global: return Stage::Global;
    case backends::PromptKind::Detail: return Stage::Detail;
    case backends::PromptKind::RegionDesc: return Stage::RegionDesc;
    case backends::PromptKind::Ocr: return Stage::Ocr;
    case backends::PromptKind::ValidConcept: return Stage::ValidConcept;
    case backends::PromptKind::ValidGroup: return Stage::ValidGroup;
    }
    return Stage::Global;
}

// Routes one image's calls through the shared cache and counts them for it.
class CachedBackends : public backends::VlmBackend, public backends::GroundingBackend {
  public:
    CachedBackends(StageCache& cache, StageCache::Counters& counters) : cache_(cache), counters_(counters) {}

    backends::VlmResponse complete(const backends::VlmRequest& request) override {
        return cache_.complete(request, counters_);
    }
    backends::RawGroundingResponse detect(const backends::GroundingRequest& request) override {
        return cache_.detect(request, counters_);
    }

  private:
    StageCache& cache_;
    StageCache::Counters& counters_;
};

std::string_view to_string(ImageStatus status) {
    switch (status) {
    case ImageStatus::Ok: return "ok";
    case ImageStatus::Dropped: return "dropped";
    case ImageStatus::Error: return "error";
    }
    return "error";
}

ImageStatus parse_status(std::string_view text) {
    if (text == "ok") return ImageStatus::Ok;
    if (text == "dropped") return ImageStatus::Dropped;
    if (text == "error") return ImageStatus::Error;
    throw SchemaError("unknown image status '" + std::string(text) + "'");
}

void write_json_file(const fs::path& path, const nlohmann::ordered_json& j) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw ConfigError("cannot write " + path.string());
    out << j.dump(2) << '\n';
}

nlohmann::json read_json_file(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot read " + path.string());
    try {
        return nlohmann::json::parse(in);
    } catch (const nlohmann::json::parse_error& e) {
        throw ConfigError(path.string() + ": " + e.what());
    }
}

struct JournalEntry {
    std::size_t index = 0;
    ImageOutcome outcome;
};

nlohmann::ordered_json journal_line(std::size_t index, const ImageRecord& image, const ImageOutcome& outcome) {
    nlohmann::ordered_json j;
    j["index"] = index;
    j["id"] = image.id;
    j["status"] = to_string(outcome.status);
    j["reason"] = outcome.reason;
    j["record"] = outcome.record ? record_to_json(*outcome.record) : nlohmann::ordered_json();
    j["stats"] = to_json(outcome.stats);
    return j;
}

// Completed images of an earlier session; torn or foreign lines are ignored.
std::map<std::size_t, ImageOutcome> read_journal(const fs::path& path, const std::vector<ImageRecord>& manifest) {
    std::map<std::size_t, ImageOutcome> done;
    std::ifstream in(path);
    std::string line;
    while (std::getline(in, line)) {
        try {
            auto j = nlohmann::json::parse(line);
            auto index = j.at("index").get<std::size_t>();
            if (index >= manifest.size() || j.at("id").get<std::string>() != manifest[index].id) continue;
            ImageOutcome outcome;
            outcome.status = parse_status(j.at("status").get<std::string>());
            outcome.reason = j.at("reason").get<std::string>();
            if (!j.at("record").is_null()) {
                auto record = record_from_json(j.at("record"));
                record.image = manifest[index];
                outcome.record = std::move(record);
            }
            outcome.stats = run_stats_from_json(j.at("stats"));
            done[index] = std::move(outcome);
        } catch (const std::exception&) {
            continue;
        }
    }
    return done;
}

class OrderedWriter {
  public:
    OrderedWriter(const fs::path& out_dir, OutputFormat format)
        : output_(out_dir / kOutputFile, std::ios::trunc), conversations_(out_dir / kConversationFile, std::ios::trunc),
          format_(format) {
        if (!output_ || !conversations_) throw ConfigError("cannot open output files in " + out_dir.string());
    }

    void submit(std::size_t index, const ImageOutcome& outcome) {
        std::lock_guard lock(mutex_);
        pending_.emplace(index, outcome.record);
        while (!pending_.empty() && pending_.begin()->first == next_) {
            if (const auto& record = pending_.begin()->second) {
                output_ << record_to_jsonl(*record) << '\n';
                auto conversation = codegen::emit_conversation(*record, format_);
                conversations_ << codegen::conversation_to_json(*record, conversation).dump() << '\n';
            }
            pending_.erase(pending_.begin());
            ++next_;
        }
        output_.flush();
        conversations_.flush();
    }

  private:
    std::mutex mutex_;
    std::ofstream output_;
    std::ofstream conversations_;
    OutputFormat format_;
    std::size_t next_ = 0;
    std::map<std::size_t, std::optional<W2CRecord>> pending_;
};

} // namespace

std::string_view to_string(Stage stage) {
    switch (stage) {
    case Stage::Global: return "global";
    case Stage::Detail: return "detail";
    case Stage::RegionDesc: return "region_desc";
    case Stage::Ocr: return "ocr";
    case Stage::ValidConcept: return "valid_concept";
    case Stage::ValidGroup: return "valid_group";
    case Stage::Grounding: return "grounding";
    }
    return "global";
}

Stage parse_stage(std::string_view text) {
    for (auto stage : {Stage::Global, Stage::Detail, Stage::RegionDesc, Stage::Ocr, Stage::ValidConcept,
                       Stage::ValidGroup, Stage::Grounding}) {
        if (to_string(stage) == text) return stage;
    }
    throw SchemaError("unknown stage '" + std::string(text) + "'");
}

RunStats& RunStats::operator+=(const RunStats& o) {
    images_in += o.images_in;
    images_out += o.images_out;
    dropped += o.dropped;
    dropped_no_concepts += o.dropped_no_concepts;
    dropped_inconsistent += o.dropped_inconsistent;
    errored += o.errored;
    concepts_detected += o.concepts_detected;
    groups_total += o.groups_total;
    groups_inconsistent += o.groups_inconsistent;
    candidates_scored += o.candidates_scored;
    backend_calls += o.backend_calls;
    cache_hits += o.cache_hits;
    return *this;
}

nlohmann::ordered_json to_json(const RunStats& s) {
    nlohmann::ordered_json j;
    j["images_in"] = s.images_in;
    j["images_out"] = s.images_out;
    j["dropped"] = s.dropped;
    j["dropped_no_concepts"] = s.dropped_no_concepts;
    j["dropped_inconsistent"] = s.dropped_inconsistent;
    j["errored"] = s.errored;
    j["concepts_detected"] = s.concepts_detected;
    j["groups_total"] = s.groups_total;
    j["groups_inconsistent"] = s.groups_inconsistent;
    j["candidates_scored"] = s.candidates_scored;
    j["backend_calls"] = s.backend_calls;
    j["cache_hits"] = s.cache_hits;
    return j;
}

RunStats run_stats_from_json(const nlohmann::json& j) {
    RunStats s;
    s.images_in = j.at("images_in").get<long long>();
    s.images_out = j.at("images_out").get<long long>();
    s.dropped = j.at("dropped").get<long long>();
    s.dropped_no_concepts = j.at("dropped_no_concepts").get<long long>();
    s.dropped_inconsistent = j.at("dropped_inconsistent").get<long long>();
    s.errored = j.at("errored").get<long long>();
    s.concepts_detected = j.at("concepts_detected").get<long long>();
    s.groups_total = j.at("groups_total").get<long long>();
    s.groups_inconsistent = j.at("groups_inconsistent").get<long long>();
    s.candidates_scored = j.at("candidates_scored").get<long long>();
    s.backend_calls = j.at("backend_calls").get<long long>();
    s.cache_hits = j.at("cache_hits").get<long long>();
    return s;
}

std::vector<ImageRecord> read_manifest(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open manifest " + path.string());
    auto base = path.parent_path();
    std::vector<ImageRecord> images;
    std::set<std::string> ids;
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        auto where = path.string() + ":" + std::to_string(line_no) + ": ";
        try {
            auto j = nlohmann::json::parse(line);
            fs::path image_path = j.at("path").get<std::string>();
            if (image_path.is_relative()) image_path = base / image_path;
            auto image = ImageRecord::checked(j.at("id").get<std::string>(), image_path.string(),
                                              j.at("width").get<int>(), j.at("height").get<int>());
            if (!ids.insert(image.id).second) throw ConfigError(where + "duplicate id '" + image.id + "'");
            images.push_back(std::move(image));
        } catch (const nlohmann::json::exception& e) {
            throw ConfigError(where + e.what());
        } catch (const InvalidValue& e) {
            throw ConfigError(where + e.what());
        }
    }
    return images;
}

StageCache::StageCache(const fs::path& file, backends::VlmBackend& vlm, backends::GroundingBackend& grounding,
                       int max_in_flight)
    : vlm_(vlm), grounding_(grounding), gate_(std::max(1, max_in_flight)) {
    {
        std::ifstream in(file);
        std::string line;
        while (std::getline(in, line)) {
            try {
                auto j = nlohmann::json::parse(line);
                StageCacheEntry entry{j.at("request_key").get<std::string>(), parse_stage(j.at("stage").get<std::string>()),
                                      j.at("payload")};
                if (entry.stage == Stage::Grounding) {
                    backends::parse_grounding_response(entry.payload);
                } else {
                    backends::parse_vlm_response(entry.payload);
                }
                entries_.insert_or_assign(entry.request_key, std::move(entry));
            } catch (const std::exception&) {
                // Torn tail of an interrupted run.
            }
        }
    }
    out_.open(file, std::ios::app);
    if (!out_) throw ConfigError("cannot open stage cache " + file.string());
}

std::size_t StageCache::size() const {
    std::lock_guard lock(mutex_);
    return entries_.size();
}

template <typename Call>
nlohmann::json StageCache::fetch(const std::string& key, Stage stage, Call&& call, Counters& counters) {
    std::unique_lock lock(mutex_);
    if (auto hit = entries_.find(key); hit != entries_.end()) {
        ++counters.cache_hits;
        return hit->second.payload;
    }
    if (auto flight = in_flight_.find(key); flight != in_flight_.end()) {
        auto shared = flight->second;
        lock.unlock();
        auto payload = shared.get();
        ++counters.cache_hits;
        return payload;
    }
    std::promise<nlohmann::json> promise;
    in_flight_.emplace(key, promise.get_future().share());
    lock.unlock();

    nlohmann::json payload;
    try {
        gate_.acquire();
        try {
            payload = call();
        } catch (...) {
            gate_.release();
            throw;
        }
        gate_.release();
    } catch (...) {
        lock.lock();
        in_flight_.erase(key);
        lock.unlock();
        promise.set_exception(std::current_exception());
        throw;
    }
    ++counters.backend_calls;

    lock.lock();
    nlohmann::ordered_json line;
    line["request_key"] = key;
    line["stage"] = to_string(stage);
    line["payload"] = payload;
    out_ << line.dump() << '\n';
    out_.flush();
    entries_.insert_or_assign(key, StageCacheEntry{key, stage, payload});
    in_flight_.erase(key);
    lock.unlock();
    promise.set_value(payload);
    return payload;
}

backends::VlmResponse StageCache::complete(const backends::VlmRequest& request, Counters& counters) {
    auto payload = fetch(
        backends::request_key(request), stage_of(request.kind),
        [&] { return nlohmann::json(backends::to_json(vlm_.complete(request))); }, counters);
    return backends::parse_vlm_response(payload);
}

backends::RawGroundingResponse StageCache::detect(const backends::GroundingRequest& request, Counters& counters) {
    auto payload = fetch(
        backends::request_key(request), Stage::Grounding,
        [&] { return nlohmann::json(backends::to_json(grounding_.detect(request))); }, counters);
    return backends::parse_grounding_response(payload);
}

std::optional<W2CRecord> apply_drop_policy(W2CRecord record, const std::vector<GroupVerdict>& verdicts,
                                           DropPolicy policy) {
    if (verdicts.size() != record.groups.size()) throw InvalidValue("one verdict per group expected");
    bool any_inconsistent = std::find(verdicts.begin(), verdicts.end(), GroupVerdict::Inconsistent) != verdicts.end();
    if (!any_inconsistent) return record;
    if (policy == DropPolicy::DropRecord) return std::nullopt;

    std::vector<AnnotatedGroup> kept;
    for (std::size_t i = 0; i < record.groups.size(); ++i) {
        if (verdicts[i] != GroupVerdict::Inconsistent) kept.push_back(std::move(record.groups[i]));
    }
    if (kept.empty()) return std::nullopt;
    record.groups = std::move(kept);
    record.code = codegen::emit_code(record).text;
    return record;
}

ImageOutcome process_image(const ImageRecord& input, backends::VlmBackend& vlm, backends::GroundingBackend& grounding,
                           const PipelineConfig& config, const stages::PromptSet& prompts) {
    ImageOutcome outcome;
    auto image = input;
    image.content_digest = imaging::content_digest(image);
    stages::StageContext ctx{vlm, grounding, config, prompts};

    // 1-2: captions, phrases, grounding.
    auto captions = stages::gen_global_captions(ctx, image);
    auto concepts = stages::extract_concepts(ctx, image, captions);
    outcome.stats.concepts_detected = static_cast<long long>(concepts.size());
    if (concepts.empty()) {
        outcome.status = ImageStatus::Dropped;
        outcome.reason = "no_concepts";
        return outcome;
    }

    // 3-4: region captions and OCR per concept.
    std::vector<std::vector<CaptionCandidate>> candidates;
    std::vector<std::optional<std::string>> ocr;
    for (const auto& c : concepts) {
        candidates.push_back(stages::gen_region_captions(ctx, image, c));
        ocr.push_back(stages::extract_ocr(ctx, image, c));
    }

    // 5-6: grouping and counting filter.
    auto groups = consistency::group_concepts(concepts);
    outcome.stats.groups_total = static_cast<long long>(groups.size());
    if (config.counting_filter_enabled) {
        for (auto& group : groups) {
            group.verdict = consistency::counting_filter(ctx, image, group);
            if (group.verdict == GroupVerdict::Inconsistent) ++outcome.stats.groups_inconsistent;
        }
    }

    // 7: caption re-ranking against each concept's group crop.
    consistency::ValidationMemo memo;
    std::vector<std::string> selected(concepts.size());
    for (std::size_t i = 0; i < concepts.size(); ++i) {
        if (!config.reranking_enabled) {
            selected[i] = candidates[i].front().text;
            continue;
        }
        const auto& group = *std::find_if(groups.begin(), groups.end(),
                                          [&](const ConceptGroup& g) { return g.name == concepts[i].name; });
        auto scored = consistency::rerank_candidates(ctx, image, group.merged_box, candidates[i], memo);
        outcome.stats.candidates_scored += static_cast<long long>(scored.size());
        selected[i] = consistency::select_caption(scored).text;
    }

    // 8: structured formatting and the drop policy.
    W2CRecord record;
    record.image = input;
    record.global_caption = captions.general;
    std::vector<GroupVerdict> verdicts;
    for (const auto& group : groups) {
        AnnotatedGroup annotated{group.name, {}};
        for (std::size_t i = 0; i < concepts.size(); ++i) {
            if (concepts[i].name == group.name)
                annotated.items.push_back({group.name, selected[i], ocr[i], concepts[i].box});
        }
        record.groups.push_back(std::move(annotated));
        verdicts.push_back(group.verdict);
    }
    record.code = codegen::emit_code(record).text;

    auto kept = apply_drop_policy(std::move(record), verdicts, config.drop_policy);
    if (!kept) {
        outcome.status = ImageStatus::Dropped;
        outcome.reason = "counting_inconsistent";
        return outcome;
    }
    if (auto problems = validate_record(*kept); !problems.empty())
        throw ContractError("record '" + input.id + "' is invalid: " + problems.front());
    outcome.record = std::move(kept);
    return outcome;
}

std::string config_hash(const PipelineConfig& config, const stages::PromptSet& prompts) {
    auto pipeline = to_json(config);
    pipeline.erase("max_concurrent_requests");
    nlohmann::ordered_json identity;
    identity["pipeline"] = pipeline;
    identity["prompts"] = prompts.to_json();
    return sha256_hex(identity.dump());
}

RunResult run_pipeline(const fs::path& manifest_path, const PipelineConfig& config, const stages::PromptSet& prompts,
                       backends::VlmBackend& vlm, backends::GroundingBackend& grounding, const RunOptions& options) {
    config.validate();
    auto manifest = read_manifest(manifest_path);
    auto manifest_digest = sha256_hex(read_file_bytes(manifest_path));
    auto hash = config_hash(config, prompts);
    fs::create_directories(options.out_dir);

    const auto run_file = options.out_dir / kRunFile;
    const auto journal_file = options.out_dir / kJournalFile;
    std::map<std::size_t, ImageOutcome> done;
    if (options.resume) {
        if (!fs::exists(run_file)) throw ConfigError("nothing to resume in " + options.out_dir.string());
        auto run = read_json_file(run_file);
        if (run.value("config_hash", "") != hash)
            throw ConfigMismatch("config differs from the interrupted run in " + options.out_dir.string());
        if (run.value("manifest_digest", "") != manifest_digest)
            throw ConfigMismatch("manifest differs from the interrupted run in " + options.out_dir.string());
        done = read_journal(journal_file, manifest);
    } else {
        nlohmann::ordered_json run;
        run["config_hash"] = hash;
        run["manifest_digest"] = manifest_digest;
        run["manifest"] = fs::absolute(manifest_path).string();
        run["config"] = to_json(config);
        write_json_file(run_file, run);
        std::ofstream(journal_file, std::ios::trunc);
    }

    // Rewrite the journal so a torn tail from an earlier session is dropped.
    {
        std::ofstream journal(journal_file, std::ios::trunc);
        for (const auto& [index, outcome] : done) journal << journal_line(index, manifest[index], outcome).dump() << '\n';
    }
    std::ofstream journal(journal_file, std::ios::app);
    std::mutex journal_mutex;

    OrderedWriter writer(options.out_dir, config.output_format);
    for (const auto& [index, outcome] : done) writer.submit(index, outcome);

    std::vector<std::size_t> pending;
    for (std::size_t i = 0; i < manifest.size(); ++i) {
        if (!done.contains(i)) pending.push_back(i);
    }
    if (options.limit && static_cast<long long>(pending.size()) > *options.limit)
        pending.resize(static_cast<std::size_t>(std::max(0LL, *options.limit)));

    StageCache cache(options.out_dir / kCacheFile, vlm, grounding, config.max_concurrent_requests);
    std::vector<ImageOutcome> results(manifest.size());
    std::atomic<std::size_t> next{0};
    std::mutex failure_mutex;
    std::exception_ptr failure;

    auto worker = [&] {
        while (true) {
            auto slot = next.fetch_add(1);
            if (slot >= pending.size()) return;
            auto index = pending[slot];
            const auto& image = manifest[index];
            StageCache::Counters counters;
            CachedBackends view(cache, counters);
            ImageOutcome outcome;
            try {
                outcome = process_image(image, view, view, config, prompts);
            } catch (const std::exception& e) {
                outcome = ImageOutcome{};
                outcome.status = ImageStatus::Error;
                outcome.reason = e.what();
            }
            outcome.stats.backend_calls = counters.backend_calls;
            outcome.stats.cache_hits = counters.cache_hits;
            try {
                {
                    std::lock_guard lock(journal_mutex);
                    journal << journal_line(index, image, outcome).dump() << '\n';
                    journal.flush();
                }
                writer.submit(index, outcome);
            } catch (...) {
                std::lock_guard lock(failure_mutex);
                if (!failure) failure = std::current_exception();
            }
            results[index] = std::move(outcome);
        }
    };

    {
        auto workers = std::min<std::size_t>(static_cast<std::size_t>(config.max_concurrent_requests), pending.size());
        std::vector<std::jthread> pool;
        for (std::size_t i = 0; i < workers; ++i) pool.emplace_back(worker);
    }
    if (failure) std::rethrow_exception(failure);

    for (auto index : pending) done[index] = std::move(results[index]);

    RunStats stats;
    for (const auto& [index, outcome] : done) {
        RunStats image_stats = outcome.stats;
        image_stats.images_in = 1;
        switch (outcome.status) {
        case ImageStatus::Ok: image_stats.images_out = 1; break;
        case ImageStatus::Dropped:
            image_stats.dropped = 1;
            if (outcome.reason == "no_concepts") image_stats.dropped_no_concepts = 1;
            else image_stats.dropped_inconsistent = 1;
            break;
        case ImageStatus::Error: image_stats.errored = 1; break;
        }
        stats += image_stats;
    }
    write_json_file(options.out_dir / kStatsFile, to_json(stats));
    return {stats, done.size() == manifest.size()};
}

RunStats load_stats(const fs::path& out_dir) { return run_stats_from_json(read_json_file(out_dir / kStatsFile)); }

} // namespace w2c::orchestrator
