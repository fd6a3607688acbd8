#include <cstdlib>
#include <fstream>
#include <iostream>
#include <memory>
#include <optional>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "w2c/backends.hpp"
#include "w2c/datamodel.hpp"
#include "w2c/errors.hpp"
#include "w2c/orchestrator.hpp"
#include "w2c/stages.hpp"

namespace {

namespace fs = std::filesystem;
using namespace w2c;

struct LoadedConfig {
    PipelineConfig pipeline;
    backends::HttpOptions http;
    stages::PromptSet prompts;
};

// {"backend": {...}, "prompts": <path or object>, ...pipeline keys}
LoadedConfig load_config(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config " + path.string());
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(in);
    } catch (const nlohmann::json::parse_error& e) {
        throw ConfigError(path.string() + ": " + e.what());
    }
    if (!j.is_object()) throw ConfigError("config must be a JSON object");

    LoadedConfig loaded;
    if (j.contains("backend")) {
        const auto& b = j["backend"];
        loaded.http.vlm_url = b.value("vlm_url", "");
        loaded.http.grounding_url = b.value("grounding_url", "");
        loaded.http.timeout = std::chrono::milliseconds(b.value("timeout_ms", 60000));
        loaded.http.max_retries = b.value("max_retries", 3);
        loaded.http.retry_backoff = std::chrono::milliseconds(b.value("retry_backoff_ms", 200));
        j.erase("backend");
    }
    if (j.contains("prompts")) {
        const auto& p = j["prompts"];
        if (p.is_string()) {
            fs::path prompt_file = p.get<std::string>();
            if (prompt_file.is_relative()) prompt_file = path.parent_path() / prompt_file;
            loaded.prompts = stages::PromptSet::load(prompt_file);
        } else {
            loaded.prompts = stages::PromptSet::from_json(p);
        }
        j.erase("prompts");
    }
    loaded.pipeline = pipeline_config_from_json(j);
    return loaded;
}

int run_command(const fs::path& manifest, const fs::path& config_path, const fs::path& out_dir,
                const std::optional<fs::path>& replay, bool record, const std::optional<std::string>& format,
                bool no_counting, bool no_reranking, const std::optional<std::string>& drop_policy,
                std::optional<int> concurrency, bool resume, std::optional<long long> limit) {
    auto loaded = load_config(config_path);
    auto& config = loaded.pipeline;
    if (format) config.output_format = parse_output_format(*format);
    if (no_counting) config.counting_filter_enabled = false;
    if (no_reranking) config.reranking_enabled = false;
    if (drop_policy) config.drop_policy = parse_drop_policy(*drop_policy);
    if (concurrency) config.max_concurrent_requests = *concurrency;
    config.validate();

    if (const char* token = std::getenv("W2C_BACKEND_TOKEN")) loaded.http.bearer_token = token;

    orchestrator::RunOptions options{out_dir, resume, limit};
    orchestrator::RunResult result;
    if (replay && !record) {
        auto backend = backends::ReplayBackend::load(*replay);
        result = orchestrator::run_pipeline(manifest, config, loaded.prompts, backend, backend, options);
    } else {
        if (record && !replay) throw ConfigError("--record needs --replay <file> to write to");
        backends::HttpVlmClient vlm(loaded.http);
        backends::HttpGroundingClient grounding(loaded.http);
        if (record) {
            backends::ReplayWriter writer(*replay);
            backends::RecordingBackend recorder(vlm, grounding, writer);
            result = orchestrator::run_pipeline(manifest, config, loaded.prompts, recorder, recorder, options);
        } else {
            result = orchestrator::run_pipeline(manifest, config, loaded.prompts, vlm, grounding, options);
        }
    }
    std::cout << orchestrator::to_json(result.stats).dump(2) << '\n';
    if (!result.complete) std::cerr << "run stopped before the end of the manifest; continue with --resume\n";
    return 0;
}

int validate_command(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open " + path.string());
    std::string line;
    int line_no = 0;
    int bad = 0;
    int total = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        ++total;
        std::vector<std::string> problems;
        try {
            problems = validate_record(record_from_json(nlohmann::json::parse(line)));
        } catch (const std::exception& e) {
            problems.emplace_back(e.what());
        }
        if (!problems.empty()) ++bad;
        for (const auto& p : problems) std::cout << path.string() << ":" << line_no << ": " << p << '\n';
    }
    std::cout << total - bad << "/" << total << " records valid\n";
    return bad == 0 ? 0 : 1;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"w2c: self-instructed, consistency-filtered region annotations from raw images"};
    app.require_subcommand(1);

    auto* run = app.add_subcommand("run", "Run the construction pipeline over a manifest");
    std::string manifest, config, out_dir;
    std::optional<std::string> replay, format, drop_policy;
    std::optional<int> concurrency;
    std::optional<long long> limit;
    bool record = false, no_counting = false, no_reranking = false, resume = false;
    run->add_option("--manifest", manifest, "JSONL of {id, path, width, height}")->required();
    run->add_option("--config", config, "Pipeline config (JSON)")->required();
    run->add_option("--out", out_dir, "Run directory")->required();
    run->add_option("--replay", replay, "Replay file to answer from (or to write with --record)");
    run->add_flag("--record", record, "Call live backends and record their answers into --replay");
    run->add_option("--format", format, "Conversation format")->check(CLI::IsMember({"code", "single", "multi"}));
    run->add_flag("--no-counting-filter", no_counting, "Skip the counting consistency filter");
    run->add_flag("--no-reranking", no_reranking, "Keep beam 0 instead of re-ranking region captions");
    run->add_option("--drop-policy", drop_policy, "What a counting inconsistency removes")
        ->check(CLI::IsMember({"record", "group"}));
    run->add_option("--concurrency", concurrency, "Images and backend calls in flight")->check(CLI::PositiveNumber);
    run->add_flag("--resume", resume, "Continue an interrupted run in --out");
    run->add_option("--limit", limit, "Stop after this many images");

    auto* validate = app.add_subcommand("validate", "Check every record of an output JSONL");
    std::string validate_path;
    validate->add_option("jsonl", validate_path)->required();

    auto* stats = app.add_subcommand("stats", "Print the run statistics of a run directory");
    std::string stats_dir;
    stats->add_option("dir", stats_dir)->required();

    CLI11_PARSE(app, argc, argv);

    try {
        if (*run)
            return run_command(manifest, config, out_dir, replay ? std::optional<fs::path>(*replay) : std::nullopt,
                               record, format, no_counting, no_reranking, drop_policy, concurrency, resume, limit);
        if (*validate) return validate_command(validate_path);
        if (*stats) {
            std::cout << orchestrator::to_json(orchestrator::load_stats(stats_dir)).dump(2) << '\n';
            return 0;
        }
    } catch (const ConfigMismatch& e) {
        std::cerr << "config mismatch: " << e.what() << '\n';
        return 3;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 2;
    }
    return 0;
}
