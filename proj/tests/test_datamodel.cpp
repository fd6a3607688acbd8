#include <doctest.h>

#include <random>

#include "test_support.hpp"
#include "w2c/codegen.hpp"
#include "w2c/errors.hpp"

using namespace w2c;

namespace {

W2CRecord valid_record() {
    W2CRecord r;
    r.image = {"img", "", 100, 80, ""};
    r.global_caption = "A dog.";
    r.groups = {{"dog", {{"dog", "a dog", std::nullopt, {0, 0, 50, 40}}}}};
    r.code = codegen::emit_code(r).text;
    return r;
}

bool mentions(const std::vector<std::string>& problems, std::string_view what) {
    return std::any_of(problems.begin(), problems.end(),
                       [&](const std::string& p) { return p.find(what) != std::string::npos; });
}

} // namespace

TEST_CASE("checked constructors") {
    CHECK_THROWS_AS(ImageRecord::checked("", "p", 1, 1), InvalidValue);
    CHECK_THROWS_AS(ImageRecord::checked("a", "p", 0, 1), InvalidValue);
    CHECK(ImageRecord::checked("a", "p", 3, 4).width == 3);
    CHECK_THROWS_AS(BoundingBox::checked(5, 0, 5, 3), InvalidValue);
    CHECK_THROWS_AS(BoundingBox::checked(-1, 0, 5, 3), InvalidValue);
    CHECK_THROWS_AS(DetectedConcept::checked("dog", {0, 0, 1, 1}, 1.5), InvalidValue);
    CHECK_THROWS_AS(DetectedConcept::checked("", {0, 0, 1, 1}, 0.5), InvalidValue);
    CHECK_THROWS_AS(DetectedConcept::checked("dog", {0, 0, 0, 1}, 0.5), InvalidValue);
}

TEST_CASE("box geometry") {
    BoundingBox a{0, 0, 10, 10}, b{5, 5, 15, 15}, c{20, 20, 30, 30};
    CHECK(a.area() == 100);
    CHECK(iou(a, a) == doctest::Approx(1.0));
    CHECK(iou(a, b) == doctest::Approx(25.0 / 175.0));
    CHECK(iou(a, c) == 0.0);
    CHECK(iou({0, 0, 0, 0}, {0, 0, 0, 0}) == 0.0);
    CHECK(a.contains({2, 2, 8, 8}));
    CHECK_FALSE(a.contains(b));
    CHECK(a.fits(10, 10));
    CHECK_FALSE(a.fits(9, 10));

    std::mt19937 rng(3);
    std::uniform_int_distribution<int> coord(0, 50);
    for (int i = 0; i < 2000; ++i) {
        BoundingBox p{coord(rng), coord(rng), 0, 0}, q{coord(rng), coord(rng), 0, 0};
        p.x2 = p.x1 + 1 + coord(rng);
        p.y2 = p.y1 + 1 + coord(rng);
        q.x2 = q.x1 + 1 + coord(rng);
        q.y2 = q.y1 + 1 + coord(rng);
        auto v = iou(p, q);
        CHECK(v >= 0.0);
        CHECK(v <= 1.0);
        CHECK(v == iou(q, p));
    }
}

TEST_CASE("enum spellings") {
    CHECK(parse_drop_policy("record") == DropPolicy::DropRecord);
    CHECK(parse_drop_policy("group") == DropPolicy::DropGroup);
    CHECK_THROWS_AS(parse_drop_policy("all"), ConfigError);
    for (auto f : {OutputFormat::Code, OutputFormat::SingleRound, OutputFormat::MultiRound})
        CHECK(parse_output_format(to_string(f)) == f);
    CHECK_THROWS_AS(parse_output_format("xml"), ConfigError);
}

TEST_CASE("pipeline config") {
    PipelineConfig defaults;
    CHECK(defaults.beam_width == 4);
    CHECK(defaults.detector_box_threshold == 0.35);
    CHECK(defaults.detector_text_threshold == 0.25);
    CHECK(defaults.duplicate_iou_threshold == 0.9);
    CHECK(defaults.drop_policy == DropPolicy::DropRecord);
    CHECK(defaults.stoplist == std::set<std::string>{"image", "picture", "photo", "background", "scene", "view",
                                                     "side", "part"});

    auto round = pipeline_config_from_json(nlohmann::json::parse(to_json(defaults).dump()));
    CHECK(to_json(round) == to_json(defaults));

    auto custom = pipeline_config_from_json(nlohmann::json{{"beam_width", 8}, {"drop_policy", "group"}});
    CHECK(custom.beam_width == 8);
    CHECK(custom.drop_policy == DropPolicy::DropGroup);
    CHECK(custom.output_format == OutputFormat::Code);

    CHECK_THROWS_AS(pipeline_config_from_json(nlohmann::json{{"beam_widht", 8}}), ConfigError);
    CHECK_THROWS_AS(pipeline_config_from_json(nlohmann::json{{"beam_width", 0}}), ConfigError);
    CHECK_THROWS_AS(pipeline_config_from_json(nlohmann::json{{"beam_width", "four"}}), ConfigError);
    CHECK_THROWS_AS(pipeline_config_from_json(nlohmann::json{{"detector_box_threshold", 1.5}}), ConfigError);
    CHECK_THROWS_AS(pipeline_config_from_json(nlohmann::json{{"max_concurrent_requests", 0}}), ConfigError);
    CHECK_THROWS_AS(pipeline_config_from_json(nlohmann::json::array()), ConfigError);
}

TEST_CASE("record validation") {
    CHECK(validate_record(valid_record()).empty());

    auto r = valid_record();
    r.groups[0].items[0].box = {10, 10, 10, 20};
    r.code = codegen::emit_code(r).text;
    CHECK(mentions(validate_record(r), "degenerate box"));

    r = valid_record();
    r.groups[0].items[0].box = {10, 10, 101, 20};
    r.code = codegen::emit_code(r).text;
    CHECK(mentions(validate_record(r), "outside image"));

    r = valid_record();
    r.groups.push_back(r.groups[0]);
    CHECK(mentions(validate_record(r), "duplicate group"));

    r = valid_record();
    r.groups[0].items.clear();
    r.code = codegen::emit_code(r).text;
    CHECK(mentions(validate_record(r), "no items"));

    r = valid_record();
    r.groups[0].items[0].text = "  ";
    r.code = codegen::emit_code(r).text;
    CHECK(mentions(validate_record(r), "blank OCR"));

    r = valid_record();
    r.groups[0].items[0].caption.clear();
    r.code = codegen::emit_code(r).text;
    CHECK(mentions(validate_record(r), "empty caption"));

    r = valid_record();
    r.global_caption = "Something else.";
    CHECK(mentions(validate_record(r), "code/structure mismatch"));

    r = valid_record();
    r.code = "class broken";
    CHECK(mentions(validate_record(r), "code/structure mismatch"));

    r = valid_record();
    r.image.id.clear();
    CHECK(mentions(validate_record(r), "empty image id"));
}

TEST_CASE("record lines round trip") {
    auto line = record_to_jsonl(valid_record());
    CHECK(line == R"({"id":"img","global_caption":"A dog.","groups":[{"name":"dog","items":[{"caption":"a dog",)"
                  R"("bbox":[0,0,50,40]}]}],"code":"class Image_img:\n    \"A dog.\"\n    width = 100\n)"
                  R"(    height = 80\n    dog = {\"caption\": \"a dog\", \"bbox\": [0, 0, 50, 40]}\n"})");

    std::mt19937 rng(11);
    for (int i = 0; i < 300; ++i) {
        auto r = testing::random_record(rng);
        auto back = record_from_json(nlohmann::json::parse(record_to_jsonl(r)));
        r.image.path.clear();
        CHECK(back == r);
    }
    CHECK_THROWS_AS(record_from_json(nlohmann::json{{"id", "x"}}), SchemaError);
}
