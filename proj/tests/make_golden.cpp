// Regenerates tests/data/golden: images, manifest and the recorded replay file.
#include <iostream>

#include "test_support.hpp"

int main(int argc, char** argv) {
    if (argc != 2) {
        std::cerr << "usage: make_golden <dir>\n";
        return 2;
    }
    std::filesystem::path dir = argv[1];
    std::filesystem::remove(dir / "replay.jsonl");
    auto scenes = w2c::testing::make_scenes(12, 2024, 6);
    auto manifest = w2c::testing::write_corpus(dir, scenes);
    w2c::testing::ScriptedBackend backend(scenes);

    w2c::PipelineConfig full;
    w2c::PipelineConfig ablation;
    ablation.counting_filter_enabled = false;
    ablation.reranking_enabled = false;
    w2c::testing::record_replay(manifest, backend, {full, ablation}, dir / "replay.jsonl");
    std::cout << "wrote " << scenes.size() << " images to " << dir.string() << '\n';
    return 0;
}
