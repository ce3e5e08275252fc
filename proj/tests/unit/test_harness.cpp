#include <doctest.h>

#include <fstream>

#include "adagent/agent.hpp"
#include "adagent/digest.hpp"
#include "adagent/harness.hpp"
#include "adagent/memory_builder.hpp"
#include "fixtures.hpp"
#include "scripted_providers.hpp"

using namespace adagent;
using namespace adagent::eval;
using testsupport::StubBehavior;
using testsupport::TempDir;

namespace {

const semantic::PromptLibrary& prompt_library() {
  static auto lib = semantic::PromptLibrary::load(semantic::PromptLibrary::default_data_dir());
  return lib;
}

struct FixtureDataset {
  TempDir tmp;
  std::filesystem::path root;
  StubBehavior behavior;

  FixtureDataset(int good, int defect, int train) {
    root = tmp.path() / "fixture_ds";
    for (const std::string class_name : {"bottle", "cable"}) {
      const int seed_shift = class_name == "bottle" ? 0 : 50;
      for (int i = 0; i < good; ++i) {
        const auto img = testsupport::solid_image(32, 32, 100 + i + seed_shift, 100, 100);
        testsupport::write_png(root / class_name / "test" / "good" / (std::to_string(i) + ".png"),
                               img);
        behavior.verdict_by_digest[sha256_hex(vision::encode_png(img))] = "normal";
      }
      for (int i = 0; i < defect; ++i) {
        const auto img = testsupport::defect_image(32, 32, 100 + seed_shift, 200 + i);
        testsupport::write_png(root / class_name / "test" / "crack" / (std::to_string(i) + ".png"),
                               img);
        behavior.verdict_by_digest[sha256_hex(vision::encode_png(img))] = "anomalous";
      }
      for (int i = 0; i < train; ++i) {
        const auto img = testsupport::solid_image(32, 32, 100 + seed_shift, 100 + i, 100);
        testsupport::write_png(root / class_name / "train" / "good" / (std::to_string(i) + ".png"),
                               img);
        behavior.verdict_by_digest[sha256_hex(vision::encode_png(img))] = "normal";
      }
    }
  }
};

struct ScriptedBundle {
  std::shared_ptr<testsupport::ScriptedChatClient> chat;
  std::shared_ptr<testsupport::HashEmbedClient> embed;
  ProviderBundle bundle;

  explicit ScriptedBundle(const StubBehavior& behavior)
      : chat(std::make_shared<testsupport::ScriptedChatClient>(behavior)),
        embed(std::make_shared<testsupport::HashEmbedClient>()) {
    bundle.chat = chat;
    bundle.embed = embed;
  }
};

RunConfig fast_config() {
  RunConfig cfg;
  cfg.termination_n = 1;
  cfg.max_iters = 3;
  cfg.workers = 2;
  cfg.gamma = 0.05;  // hash embeddings are nearly orthogonal
  return cfg;
}

}  // namespace

TEST_CASE("run_benchmark zero-shot over the fixture dataset") {
  FixtureDataset fixture(3, 2, 2);
  ScriptedBundle scripted(fixture.behavior);
  const auto manifest = load_dataset(fixture.root, DatasetLayout::mvtec_dirs, 17);

  RunOptions options;
  TempDir out;
  options.out_dir = out.path() / "run0";
  options.shots = 0;

  const auto summary =
      run_benchmark(manifest, fast_config(), options, scripted.bundle, prompt_library());
  REQUIRE(summary.datasets.count("fixture_ds") == 1);
  const auto& dm = summary.datasets.at("fixture_ds");
  CHECK(dm.records == 10);
  CHECK(dm.failures == 0);
  // scripted verdicts separate the labels perfectly
  CHECK(*dm.auroc == doctest::Approx(1.0));
  CHECK(*dm.f1_max == doctest::Approx(1.0));
  CHECK(dm.per_class.at("bottle").records == 5);
  CHECK(dm.prompt_tokens > 0);

  // reports exist and are stable on re-emit
  const auto metrics_path = options.out_dir / "metrics.json";
  REQUIRE(std::filesystem::exists(metrics_path));
  std::ifstream in(metrics_path);
  std::string first((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  emit_report(summary, options.out_dir);
  std::ifstream in2(metrics_path);
  std::string second((std::istreambuf_iterator<char>(in2)), std::istreambuf_iterator<char>());
  CHECK(first == second);
  CHECK(std::filesystem::exists(options.out_dir / "metrics.csv"));
  CHECK(std::filesystem::exists(options.out_dir / "metrics_per_class.csv"));
  CHECK(std::filesystem::exists(options.out_dir / "candidates" / "fixture_ds" / "bottle.json"));

  // traces: one per image, each with a final verdict
  int trace_count = 0;
  for (const auto& class_name : {"bottle", "cable"}) {
    const auto dir = options.out_dir / "traces" / "fixture_ds" / class_name;
    for (const auto& f : std::filesystem::directory_iterator(dir)) {
      ++trace_count;
      std::ifstream tin(f.path());
      const auto j = nlohmann::json::parse(tin);
      CHECK(j.at("final_verdict") != "uncertain");
      CHECK(j.at("label").get<int>() >= 0);
    }
  }
  CHECK(trace_count == 10);

  SUBCASE("metrics recomputed from traces match the run summary") {
    const auto recomputed = metrics_from_traces(options.out_dir / "traces");
    CHECK(*recomputed.datasets.at("fixture_ds").auroc == doctest::Approx(*dm.auroc));
    CHECK(*recomputed.datasets.at("fixture_ds").f1_max == doctest::Approx(*dm.f1_max));
    CHECK(recomputed.datasets.at("fixture_ds").records == dm.records);
  }

  SUBCASE("resume skips completed episodes") {
    const int calls_before = scripted.chat->calls;
    const auto again =
        run_benchmark(manifest, fast_config(), options, scripted.bundle, prompt_library());
    // candidate generation is memoized per toolkit, but episodes are skipped
    // entirely: no reason-stage calls, only per-class context rebuilds
    CHECK(again.datasets.at("fixture_ds").records == 10);
    const int new_calls = scripted.chat->calls - calls_before;
    CHECK(new_calls <= 4);  // 2 classes x (candidates call + nothing else)
  }

  SUBCASE("invalid shot count is a config error") {
    RunOptions bad = options;
    bad.shots = 3;
    CHECK_THROWS_AS(
        run_benchmark(manifest, fast_config(), bad, scripted.bundle, prompt_library()),
        ConfigError);
  }
}

TEST_CASE("run_benchmark one-shot builds banks before episodes") {
  FixtureDataset fixture(2, 1, 2);
  ScriptedBundle scripted(fixture.behavior);
  const auto manifest = load_dataset(fixture.root, DatasetLayout::mvtec_dirs, 17);

  RunOptions options;
  TempDir out;
  options.out_dir = out.path() / "run1";
  options.shots = 1;

  const auto summary =
      run_benchmark(manifest, fast_config(), options, scripted.bundle, prompt_library());
  CHECK(summary.datasets.at("fixture_ds").records == 6);
  CHECK(summary.shots == 1);

  for (const auto& class_name : {"bottle", "cable"}) {
    const auto bank_path =
        options.out_dir / "memory" / "fixture_ds" / (std::string(class_name) + ".json");
    REQUIRE(std::filesystem::exists(bank_path));
    std::ifstream in(bank_path);
    const auto j = nlohmann::json::parse(in);
    CHECK(j.at("entries").size() == 1);
    CHECK(j.at("provenance").contains("digest"));
    // all references judged normal: no class note
    CHECK(j.at("note_enabled") == false);
  }
  CHECK(std::filesystem::exists(options.out_dir / "shots.json"));

  // traces carry the memory report in few-shot mode
  const auto trace_dir = options.out_dir / "traces" / "fixture_ds" / "bottle";
  bool found_mem = false;
  for (const auto& f : std::filesystem::directory_iterator(trace_dir)) {
    std::ifstream tin(f.path());
    const auto j = nlohmann::json::parse(tin);
    if (!j.at("report_mem").is_null()) found_mem = true;
    CHECK(j.at("report_cr").at("calibrated") == true);
  }
  CHECK(found_mem);

  SUBCASE("bank reuse on a second run (provenance match)") {
    TempDir out2;
    RunOptions options2;
    options2.out_dir = options.out_dir;  // same out dir: banks + traces reused
    options2.shots = 1;
    const int calls_before = scripted.chat->calls;
    run_benchmark(manifest, fast_config(), options2, scripted.bundle, prompt_library());
    CHECK(scripted.chat->calls - calls_before <= 4);
  }
}

TEST_CASE("class setup failure marks all class episodes failed, run continues") {
  FixtureDataset fixture(2, 1, 1);
  // candidate generation returns garbage for one class only
  auto chat = std::make_shared<testsupport::LambdaChatClient>(
      [&](const providers::ChatRequest& req) -> providers::ChatResponse {
        std::string system_text;
        std::string user_text;
        std::vector<std::string> digests;
        for (const auto& msg : req.messages) {
          for (const auto& part : msg.parts) {
            if (part.is_text) {
              (msg.role == "system" ? system_text : user_text) += part.text + "\n";
            } else {
              digests.push_back(sha256_hex(part.image.bytes));
            }
          }
        }
        if (testsupport::detect_stage(system_text) == "candidates" &&
            user_text.find("bottle") != std::string::npos) {
          providers::ChatResponse res;
          res.text = "{\"anomaly_candidates\": [\"x\"], \"normal_candidates\": [\"y\"]}";
          return res;
        }
        providers::ChatResponse res;
        res.text =
            testsupport::stage_response_text(fixture.behavior, system_text, user_text, digests);
        res.usage = {10, 5, 15};
        return res;
      });
  ProviderBundle bundle;
  bundle.chat = chat;
  bundle.embed = std::make_shared<testsupport::HashEmbedClient>();

  const auto manifest = load_dataset(fixture.root, DatasetLayout::mvtec_dirs, 17);
  RunOptions options;
  TempDir out;
  options.out_dir = out.path() / "run";
  options.shots = 0;

  const auto summary = run_benchmark(manifest, fast_config(), options, bundle, prompt_library());
  const auto& dm = summary.datasets.at("fixture_ds");
  CHECK(dm.per_class.at("bottle").failures == 3);
  CHECK(dm.per_class.at("bottle").records == 0);
  CHECK(dm.per_class.at("cable").records == 3);
  CHECK(dm.failures == 3);
  CHECK(summary.total_failures() == 3);
}

TEST_CASE("emit_report csv shape") {
  MetricsSummary summary;
  summary.shots = 0;
  DatasetMetrics dm;
  dm.auroc = 0.75;
  dm.f1_max = 0.8;
  dm.records = 4;
  ClassMetrics cm;
  cm.auroc = 0.75;
  cm.f1_max = 0.8;
  cm.records = 4;
  dm.per_class["bottle"] = cm;
  summary.datasets["ds_a"] = dm;
  summary.datasets["ds_b"] = dm;

  TempDir out;
  emit_report(summary, out.path());
  std::ifstream in(out.path() / "metrics.csv");
  std::string line;
  std::getline(in, line);
  CHECK(line == "dataset,auroc,f1_max,records,failures,fallbacks");
  int rows = 0;
  while (std::getline(in, line)) {
    if (!line.empty()) ++rows;
  }
  CHECK(rows == 2);

  std::ifstream jin(out.path() / "metrics.json");
  const auto j = nlohmann::json::parse(jin);
  CHECK(j.at("datasets").at("ds_a").at("auroc") == doctest::Approx(0.75));
  CHECK(j.at("datasets").at("ds_b").at("classes").contains("bottle"));
}

TEST_CASE("memory gating: note enabled only when it fixes without degrading") {
  // one reference misjudged anomalous, one judged normal
  TempDir tmp;
  const auto ref_bad = testsupport::defect_image(32, 32, 95, 235);
  const auto ref_good = testsupport::solid_image(32, 32, 95, 95, 95);
  const auto bad_digest = sha256_hex(vision::encode_png(ref_bad));
  const auto good_digest = sha256_hex(vision::encode_png(ref_good));

  auto make_inputs = [&]() {
    std::vector<agent::EpisodeInput> refs;
    agent::EpisodeInput a;
    a.image_id = "ref_bad";
    a.class_name = "widget";
    a.image.bytes = vision::encode_png(ref_bad);
    refs.push_back(a);
    agent::EpisodeInput b;
    b.image_id = "ref_good";
    b.class_name = "widget";
    b.image.bytes = vision::encode_png(ref_good);
    refs.push_back(b);
    return refs;
  };

  SUBCASE("accept: note fixes the failure, keeps the correct one") {
    StubBehavior behavior;
    behavior.verdict_by_digest[bad_digest] = "anomalous";
    behavior.verdict_by_digest[good_digest] = "normal";
    behavior.verdict_with_note[bad_digest] = "normal";
    behavior.verdict_with_note[good_digest] = "normal";

    testsupport::ScriptedChatClient chat(behavior);
    testsupport::HashEmbedClient embed;
    semantic::SemanticToolkit toolkit(chat, embed, prompt_library(), {"p", "a", "e"});
    agent::PipelineConfig pcfg;
    pcfg.primary_model = "p";
    pcfg.image_embed_model = "ie";
    pcfg.termination_n = 1;
    pcfg.max_iters = 3;
    pcfg.gamma = 0.05;
    agent::AgentPipeline pipeline(toolkit, pcfg);
    const auto ctx = agent::build_class_context(toolkit, "widget");

    memory::MemoryBuilder builder(pipeline, toolkit);
    const auto result = builder.build_memory_bank(make_inputs(), ctx);
    CHECK(result.misjudged == 1);
    REQUIRE(result.bank.class_note.has_value());
    CHECK(result.bank.note_enabled);
  }

  SUBCASE("reject: note flips a previously correct reference") {
    StubBehavior behavior;
    behavior.verdict_by_digest[bad_digest] = "anomalous";
    behavior.verdict_by_digest[good_digest] = "normal";
    behavior.verdict_with_note[bad_digest] = "normal";
    behavior.verdict_with_note[good_digest] = "anomalous";  // degrades

    testsupport::ScriptedChatClient chat(behavior);
    testsupport::HashEmbedClient embed;
    semantic::SemanticToolkit toolkit(chat, embed, prompt_library(), {"p", "a", "e"});
    agent::PipelineConfig pcfg;
    pcfg.primary_model = "p";
    pcfg.image_embed_model = "ie";
    pcfg.termination_n = 1;
    pcfg.max_iters = 3;
    pcfg.gamma = 0.05;
    agent::AgentPipeline pipeline(toolkit, pcfg);
    const auto ctx = agent::build_class_context(toolkit, "widget");

    memory::MemoryBuilder builder(pipeline, toolkit);
    const auto result = builder.build_memory_bank(make_inputs(), ctx);
    CHECK(result.misjudged == 1);
    REQUIRE(result.bank.class_note.has_value());
    CHECK_FALSE(result.bank.note_enabled);
  }

  SUBCASE("reject: note fails to fix the misjudged reference") {
    StubBehavior behavior;
    behavior.verdict_by_digest[bad_digest] = "anomalous";
    behavior.verdict_by_digest[good_digest] = "normal";
    behavior.verdict_with_note[bad_digest] = "anomalous";  // still wrong
    behavior.verdict_with_note[good_digest] = "normal";

    testsupport::ScriptedChatClient chat(behavior);
    testsupport::HashEmbedClient embed;
    semantic::SemanticToolkit toolkit(chat, embed, prompt_library(), {"p", "a", "e"});
    agent::PipelineConfig pcfg;
    pcfg.primary_model = "p";
    pcfg.image_embed_model = "ie";
    pcfg.termination_n = 1;
    pcfg.max_iters = 3;
    pcfg.gamma = 0.05;
    agent::AgentPipeline pipeline(toolkit, pcfg);
    const auto ctx = agent::build_class_context(toolkit, "widget");

    memory::MemoryBuilder builder(pipeline, toolkit);
    const auto result = builder.build_memory_bank(make_inputs(), ctx);
    CHECK_FALSE(result.bank.note_enabled);
  }
}

TEST_CASE("memory builder: relation judging and weight updates") {
  StubBehavior behavior;
  // every normal candidate fits, every anomaly candidate conflicts
  // (candidate texts come from the scripted candidate generator)
  testsupport::ScriptedChatClient probe(behavior);
  testsupport::HashEmbedClient embed;
  semantic::SemanticToolkit probe_toolkit(probe, embed, prompt_library(), {"p", "a", "e"});
  const auto cands = probe_toolkit.generate_candidates("widget");
  for (const auto& c : cands.normal_candidates) behavior.relation_by_candidate[c] = "fit";
  for (const auto& c : cands.anomaly_candidates) behavior.relation_by_candidate[c] = "conflict";

  testsupport::ScriptedChatClient chat(behavior);
  semantic::SemanticToolkit toolkit(chat, embed, prompt_library(), {"p", "a", "e"});
  agent::PipelineConfig pcfg;
  pcfg.primary_model = "p";
  pcfg.image_embed_model = "ie";
  pcfg.termination_n = 1;
  pcfg.max_iters = 3;
  agent::AgentPipeline pipeline(toolkit, pcfg);
  const auto ctx = agent::build_class_context(toolkit, "widget");

  std::vector<agent::EpisodeInput> refs;
  agent::EpisodeInput ref;
  ref.image_id = "ref_0";
  ref.class_name = "widget";
  ref.image.bytes = vision::encode_png(testsupport::solid_image(32, 32, 60, 60, 60));
  refs.push_back(ref);

  memory::MemoryBuilder builder(pipeline, toolkit);
  const auto result = builder.build_memory_bank(refs, ctx);
  CHECK(result.references_usable == 1);
  CHECK(result.misjudged == 0);
  CHECK_FALSE(result.bank.class_note.has_value());

  // normal-fit weights moved up (when rho > 0), anomaly-conflict nudged up,
  // and everything stays in [0, 1]
  for (const auto& c : ctx.candidates.normal_candidates) {
    CHECK(result.weights.at(c) >= 0.5);
    CHECK(result.weights.at(c) <= 1.0);
  }
  for (const auto& c : ctx.candidates.anomaly_candidates) {
    CHECK(result.weights.at(c) >= 0.5);  // conflict reinforcement is positive
  }

  SUBCASE("undecodable reference is excluded with a warning, bank proceeds") {
    std::vector<agent::EpisodeInput> mixed = refs;
    agent::EpisodeInput broken;
    broken.image_id = "ref_broken";
    broken.class_name = "widget";
    broken.image.bytes = {0xde, 0xad, 0xbe, 0xef};
    mixed.push_back(broken);
    const auto partial = builder.build_memory_bank(mixed, ctx);
    CHECK(partial.references_attempted == 2);
    CHECK(partial.references_usable == 1);
    CHECK(partial.bank.entries.size() == 1);
  }

  SUBCASE("single-candidate judge_relation round trip") {
    const auto rj = builder.judge_relation(result.bank.entries[0].captions, "ref_0",
                                           ctx.candidates, ctx.candidates.normal_candidates[0]);
    CHECK(rj.relation == memory::Relation::fit);
    CHECK(rj.candidate == ctx.candidates.normal_candidates[0]);
  }

  SUBCASE("malformed relation output defaults to unrelated") {
    testsupport::LambdaChatClient broken([&](const providers::ChatRequest& req) {
      std::string system_text;
      for (const auto& msg : req.messages) {
        if (msg.role == "system") {
          for (const auto& part : msg.parts) {
            if (part.is_text) system_text += part.text;
          }
        }
      }
      providers::ChatResponse res;
      if (testsupport::detect_stage(system_text) == "relations") {
        res.text = "completely malformed";
        return res;
      }
      res.text = testsupport::stage_response_text(behavior, system_text, "", {});
      return res;
    });
    semantic::SemanticToolkit tk(broken, embed, prompt_library(), {"p", "a", "e"});
    memory::MemoryBuilder fallback_builder(pipeline, tk);
    const auto relations =
        fallback_builder.judge_relations(result.bank.entries[0].captions, "r", ctx.candidates);
    CHECK(relations.size() ==
          ctx.candidates.normal_candidates.size() + ctx.candidates.anomaly_candidates.size());
    for (const auto& rj : relations) CHECK(rj.relation == memory::Relation::unrelated);
  }
}
