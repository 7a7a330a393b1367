#include <catch2/catch_amalgamated.hpp>

#include <atomic>
#include <chrono>
#include <filesystem>
#include <memory>
#include <string>
#include <thread>
#include <vector>

#include <httplib.h>

#include "dppsumm/gateway.hpp"
#include "dppsumm/http_backend.hpp"
#include "dppsumm/prompts.hpp"

using namespace dppsumm;
namespace fs = std::filesystem;

namespace {

struct ScriptedChatBackend : ChatBackend {
  explicit ScriptedChatBackend(int failures_before_success, bool permanent = false)
      : failures(failures_before_success), permanent_mode(permanent) {}
  std::string name() const override { return "scripted"; }
  ChatResponse complete(const ChatRequest&) override {
    ++calls;
    if (permanent_mode) throw PermanentError("scripted 400");
    if (calls <= failures) throw TransientError("scripted 503");
    return {"ok after " + std::to_string(calls), false};
  }
  int failures;
  bool permanent_mode;
  int calls = 0;
};

struct RecordingSleep {
  std::vector<std::chrono::milliseconds> delays;
  SleepFn fn() {
    return [this](std::chrono::milliseconds d) { delays.push_back(d); };
  }
};

KeyPoint kp(const std::string& id, const std::string& text) {
  KeyPoint k;
  k.kp_id = id;
  k.story_id = "s";
  k.article_id = "a";
  k.ordinal = 0;
  k.text = text;
  return k;
}

}  // namespace

TEST_CASE("templates render with placeholder substitution only") {
  auto p = render_prompt(PromptTemplateId::extract_kp, {{"ARTICLE", "XMARKERX"}});
  CHECK(p.find("Summarize all the content in this article") != std::string::npos);
  CHECK(p.find("XMARKERX") != std::string::npos);
  CHECK(p.find("<ARTICLE>") == std::string::npos);

  auto j = render_prompt(PromptTemplateId::judge, {{"SUMMARY", "S"},
                                                   {"QUESTION", "Q"},
                                                   {"REFERENCE ANSWER", "R"}});
  CHECK(j.find("Please act as an impartial judge") != std::string::npos);
  CHECK(j.find("Model Generated Response:\nS\n") != std::string::npos);
  CHECK(j.find("Reference Answer:\nR") != std::string::npos);
}

TEST_CASE("missing bindings are reported by placeholder name") {
  try {
    render_prompt(PromptTemplateId::rewrite, {});
    FAIL("expected ValidationError");
  } catch (const ValidationError& e) {
    CHECK(std::string(e.what()).find("SELECTED KEYPOINTS") != std::string::npos);
  }
}

TEST_CASE("template bodies keep their original spacing quirks") {
  // These oddities are part of the fixed wording; they must never be tidied.
  CHECK(prompt_template(PromptTemplateId::llm_select).find("you  cover") != std::string::npos);
  CHECK(prompt_template(PromptTemplateId::llm_select_relevance).find("you  cover") !=
        std::string::npos);
  CHECK(prompt_template(PromptTemplateId::judge).find("“0”") != std::string::npos);
  CHECK(prompt_template(PromptTemplateId::extract_kp).ends_with("<ARTICLE>    \n"));
  CHECK(prompt_template(PromptTemplateId::naive).find("lengthy.     \n") != std::string::npos);
  CHECK(prompt_template(PromptTemplateId::rewrite).find("```Report: [your report]```") !=
        std::string::npos);
  CHECK(prompt_template(PromptTemplateId::llm_select).find("```Selected Key Points: [your list]```") !=
        std::string::npos);
}

TEST_CASE("every template renders with its full binding set") {
  std::map<std::string, std::string> all = {
      {"ARTICLE", "a"}, {"ARTICLES", "b"},          {"SELECTED KEYPOINTS", "c"},
      {"ALL KEYPOINTS", "d"}, {"USER INTENT", "e"}, {"SUMMARY", "f"},
      {"QUESTION", "g"},      {"REFERENCE ANSWER", "h"}};
  for (auto id : {PromptTemplateId::extract_kp, PromptTemplateId::rewrite, PromptTemplateId::naive,
                  PromptTemplateId::naive_relevance, PromptTemplateId::llm_select,
                  PromptTemplateId::llm_select_relevance, PromptTemplateId::judge,
                  PromptTemplateId::augment_questions, PromptTemplateId::generate_intents}) {
    auto rendered = render_prompt(id, all);
    CHECK(rendered.find('<') == rendered.find("<"));  // renders without throwing
    CHECK(!rendered.empty());
  }
}

TEST_CASE("bindings are inserted verbatim, never rescanned") {
  auto p = render_prompt(PromptTemplateId::extract_kp, {{"ARTICLE", "text with <QUESTION> inside"}});
  CHECK(p.find("<QUESTION>") != std::string::npos);
}

TEST_CASE("cache store journals to JSONL and replays the first value") {
  auto path = fs::temp_directory_path() / "dppsumm_gateway_tests" / "cache.jsonl";
  fs::remove(path);
  {
    CacheStore cache(path);
    cache.put("k1", json{{"text", "first"}});
    cache.put("k1", json{{"text", "second"}});  // ignored: first value wins
    cache.put("k2", json{{"text", "other"}});
    CHECK(cache.get("k1")->at("text") == "first");
    CHECK(cache.size() == 2);
  }
  CacheStore reloaded(path);
  CHECK(reloaded.size() == 2);
  CHECK(reloaded.get("k1")->at("text") == "first");
  CHECK_FALSE(reloaded.get("missing").has_value());
}

TEST_CASE("chat client serves repeats from cache with zero backend calls") {
  auto backend = std::make_shared<MockChatBackend>();
  auto cache = std::make_shared<CacheStore>();
  ChatClient client(backend, cache);
  ChatRequest req;
  req.model = "mock";
  req.prompt = render_prompt(PromptTemplateId::extract_kp, {{"ARTICLE", "One. Two. Three."}});
  auto first = client.complete(req);
  CHECK(backend->calls() == 1);
  auto second = client.complete(req);
  CHECK(backend->calls() == 1);
  CHECK(first.text == second.text);
}

TEST_CASE("cache keys separate model, prompt, temperature, and extra tag") {
  ChatRequest base;
  base.model = "m";
  base.prompt = "p";
  base.temperature = 0.7;
  base.cache_key_extra = "";
  auto k0 = ChatClient::cache_key(base);
  auto vary = base;
  vary.model = "m2";
  CHECK(ChatClient::cache_key(vary) != k0);
  vary = base;
  vary.prompt = "p2";
  CHECK(ChatClient::cache_key(vary) != k0);
  vary = base;
  vary.temperature = 0.0;
  CHECK(ChatClient::cache_key(vary) != k0);
  vary = base;
  vary.cache_key_extra = "seed=1";
  CHECK(ChatClient::cache_key(vary) != k0);
  CHECK(ChatClient::cache_key(base) == k0);
}

TEST_CASE("transient failures retry with exponential backoff") {
  auto backend = std::make_shared<ScriptedChatBackend>(2);
  RecordingSleep sleeper;
  ChatClient client(backend, std::make_shared<CacheStore>(), RetryPolicy{}, sleeper.fn());
  ChatRequest req;
  req.model = "m";
  req.prompt = "p";
  auto res = client.complete(req);
  CHECK(res.text == "ok after 3");
  CHECK(backend->calls == 3);
  REQUIRE(sleeper.delays.size() == 2);
  CHECK(sleeper.delays[0] == std::chrono::milliseconds(1000));
  CHECK(sleeper.delays[1] == std::chrono::milliseconds(2000));
}

TEST_CASE("retries stop after five attempts") {
  auto backend = std::make_shared<ScriptedChatBackend>(99);
  RecordingSleep sleeper;
  ChatClient client(backend, std::make_shared<CacheStore>(), RetryPolicy{}, sleeper.fn());
  ChatRequest req;
  req.model = "m";
  req.prompt = "p";
  CHECK_THROWS_AS(client.complete(req), TransientError);
  CHECK(backend->calls == 5);
  REQUIRE(sleeper.delays.size() == 4);
  CHECK(sleeper.delays[3] == std::chrono::milliseconds(8000));
}

TEST_CASE("permanent failures never retry") {
  auto backend = std::make_shared<ScriptedChatBackend>(0, true);
  RecordingSleep sleeper;
  ChatClient client(backend, std::make_shared<CacheStore>(), RetryPolicy{}, sleeper.fn());
  ChatRequest req;
  req.model = "m";
  req.prompt = "p";
  CHECK_THROWS_AS(client.complete(req), PermanentError);
  CHECK(backend->calls == 1);
  CHECK(sleeper.delays.empty());
}

TEST_CASE("embedding client batches, caches, and aligns output") {
  auto backend = std::make_shared<MockEmbeddingBackend>();
  auto cache = std::make_shared<CacheStore>();
  EmbeddingClient client(backend, cache, "mock-embed", 32);

  SECTION("identical texts embed identically") {
    auto vecs = client.embed({"a", "a"});
    REQUIRE(vecs.size() == 2);
    CHECK(vecs[0] == vecs[1]);
    CHECK(backend->calls() == 1);
  }
  SECTION("100 texts at batch size 32 is 4 service calls") {
    std::vector<std::string> texts;
    for (int i = 0; i < 100; ++i) texts.push_back("text number " + std::to_string(i));
    auto vecs = client.embed(texts);
    CHECK(vecs.size() == 100);
    CHECK(backend->calls() == 4);
    client.embed(texts);  // warm cache: no further calls
    CHECK(backend->calls() == 4);
  }
  SECTION("empty input is rejected") {
    CHECK_THROWS_AS(client.embed({}), ValidationError);
  }
}

TEST_CASE("embedding dimension mismatches are caught") {
  struct MixedDims : EmbeddingBackend {
    std::string name() const override { return "mixed"; }
    std::vector<std::vector<double>> embed(const std::string&,
                                           const std::vector<std::string>& texts) override {
      std::vector<std::vector<double>> out;
      for (std::size_t i = 0; i < texts.size(); ++i) {
        out.push_back(std::vector<double>(i % 2 == 0 ? 4 : 8, 1.0));
      }
      return out;
    }
  };
  EmbeddingClient client(std::make_shared<MixedDims>(), std::make_shared<CacheStore>(), "m", 32);
  CHECK_THROWS_AS(client.embed({"a", "b"}), ValidationError);
}

TEST_CASE("parse_keypoints extracts list items") {
  CHECK(parse_keypoints("- A\n- B") == std::vector<std::string>{"A", "B"});
  CHECK(parse_keypoints("1. A\n2. B") == std::vector<std::string>{"A", "B"});
  CHECK(parse_keypoints("Here are the points:\n- A\n\nThanks!") == std::vector<std::string>{"A"});
  CHECK(parse_keypoints("* C\n\xe2\x80\xa2 D") == std::vector<std::string>{"C", "D"});
  CHECK(parse_keypoints("  - indented\n12. twelve") ==
        std::vector<std::string>{"indented", "twelve"});
  try {
    parse_keypoints("no list here at all");
    FAIL("expected ParseError");
  } catch (const ParseError& e) {
    CHECK(std::string(e.what()).find("no list here at all") != std::string::npos);
  }
}

TEST_CASE("parse_judge reads the first JSON object") {
  auto v = parse_judge(R"({"answerable": true, "coverage": 1})");
  CHECK(v.answerable);
  CHECK(v.coverage == 1);

  v = parse_judge(R"(Sure! {"answerable": false, "coverage": 0})");
  CHECK_FALSE(v.answerable);
  CHECK(v.coverage == 0);

  v = parse_judge(R"({"answerable": "true", "coverage": "1"} and {"answerable": false})");
  CHECK(v.answerable);
  CHECK(v.coverage == 1);

  // Unparseable braces before a valid object are skipped.
  v = parse_judge(R"(weird {not json} then {"answerable": true, "coverage": 0})");
  CHECK(v.answerable);
  CHECK(v.coverage == 0);

  CHECK_THROWS_AS(parse_judge(R"({"answerable": "maybe", "coverage": 1})"), ParseError);
  CHECK_THROWS_AS(parse_judge(R"({"answerable": true})"), ParseError);
  CHECK_THROWS_AS(parse_judge(R"({"answerable": true, "coverage": 2})"), ParseError);
  CHECK_THROWS_AS(parse_judge("no json at all"), ParseError);
  CHECK(parse_judge(R"({"answerable": true, "coverage": 1})").raw.find("answerable") !=
        std::string::npos);
}

TEST_CASE("parse_selected_keypoints matches echoes back to candidates") {
  KeyPointSet candidates = {kp("id0", "The dam failed on Tuesday."),
                            kp("id1", "Officials ordered evacuations."),
                            kp("id2", "Rainfall broke a century record.")};

  SECTION("verbatim echoes map to ids") {
    auto r = parse_selected_keypoints(
        "```Selected Key Points:\n- The dam failed on Tuesday.\n- Rainfall broke a century record.\n```",
        candidates);
    CHECK(r.kp_ids == std::vector<std::string>{"id0", "id2"});
    CHECK(r.dropped == 0);
  }
  SECTION("case and whitespace differences still match") {
    auto r = parse_selected_keypoints("- the  DAM failed on tuesday.", candidates);
    CHECK(r.kp_ids == std::vector<std::string>{"id0"});
  }
  SECTION("high token overlap falls back to the nearest candidate") {
    // 5 of 6 tokens shared with id2: overlap 0.83, above the 0.8 floor.
    auto r = parse_selected_keypoints(
        "- Rainfall broke a century record yesterday.\n- The dam failed on Tuesday.", candidates);
    CHECK(r.kp_ids == std::vector<std::string>{"id2", "id0"});
    CHECK(r.dropped == 0);
  }
  SECTION("overlap just below the floor is dropped") {
    // 3 of 4 tokens shared with id1: overlap 0.75, under the floor, so
    // the only line drops and the parse reports zero matches.
    CHECK_THROWS_AS(parse_selected_keypoints("- Officials ordered evacuations immediately.", candidates),
                    ParseError);
  }
  SECTION("low-overlap paraphrases are dropped and counted") {
    auto r = parse_selected_keypoints(
        "- Something completely unrelated happened elsewhere yesterday evening.\n- The dam failed on Tuesday.",
        candidates);
    CHECK(r.kp_ids == std::vector<std::string>{"id0"});
    CHECK(r.dropped == 1);
  }
  SECTION("duplicates collapse to one id") {
    auto r = parse_selected_keypoints("- The dam failed on Tuesday.\n- The dam failed on Tuesday.",
                                      candidates);
    CHECK(r.kp_ids == std::vector<std::string>{"id0"});
  }
  SECTION("zero matches is an error") {
    CHECK_THROWS_AS(parse_selected_keypoints("- nothing relevant whatsoever", candidates),
                    ParseError);
  }
}

TEST_CASE("mock chat backend behaviors compose with the parsers") {
  MockChatBackend backend;

  SECTION("extraction yields one point per sentence") {
    ChatRequest req;
    req.model = "mock";
    req.prompt = render_prompt(PromptTemplateId::extract_kp,
                               {{"ARTICLE", "Alpha one. Beta two. Gamma three. Delta four. Epsilon five."}});
    auto points = parse_keypoints(backend.complete(req).text);
    REQUIRE(points.size() == 5);
    CHECK(points[0] == "Alpha one.");
    CHECK(points[4] == "Epsilon five.");
  }
  SECTION("rewrite joins the selected points inside the report scaffold") {
    ChatRequest req;
    req.model = "mock";
    req.prompt = render_prompt(PromptTemplateId::rewrite,
                               {{"SELECTED KEYPOINTS", "- First point.\n- Second point.\n- Third point."}});
    auto text = backend.complete(req).text;
    CHECK(text == "```Report: First point. Second point. Third point.```");
  }
  SECTION("judge requires every content word of the reference") {
    auto make_judge = [&](const std::string& summary, const std::string& answer) {
      ChatRequest req;
      req.model = "mock";
      req.prompt = render_prompt(PromptTemplateId::judge, {{"SUMMARY", summary},
                                                           {"QUESTION", "What failed?"},
                                                           {"REFERENCE ANSWER", answer}});
      return parse_judge(backend.complete(req).text);
    };
    auto hit = make_judge("The dam failed during heavy rainfall.", "The dam failed.");
    CHECK(hit.answerable);
    CHECK(hit.coverage == 1);
    auto miss = make_judge("Officials spoke to the press.", "The dam failed.");
    CHECK_FALSE(miss.answerable);
    CHECK(miss.coverage == 0);
  }
  SECTION("question generation emits ten numbered pairs") {
    ChatRequest req;
    req.model = "mock";
    req.prompt = render_prompt(PromptTemplateId::augment_questions,
                               {{"ARTICLE", "Fact one. Fact two. Fact three."}});
    auto items = parse_keypoints(backend.complete(req).text);
    CHECK(items.size() == 10);
    CHECK(items[0].find("Answer:") != std::string::npos);
  }
  SECTION("selection echoes every second candidate") {
    KeyPointSet candidates = {kp("a", "Point alpha stands."), kp("b", "Point beta stands."),
                              kp("c", "Point gamma stands."), kp("d", "Point delta stands.")};
    std::string block;
    for (const auto& c : candidates) block += "- " + c.text + "\n";
    ChatRequest req;
    req.model = "mock";
    req.prompt = render_prompt(PromptTemplateId::llm_select,
                               {{"ALL KEYPOINTS", block}, {"ARTICLES", "ARTICLE 1: x"}});
    auto parsed = parse_selected_keypoints(backend.complete(req).text, candidates);
    CHECK(parsed.kp_ids == std::vector<std::string>{"a", "c"});
  }
  SECTION("intent generation emits five numbered intents") {
    ChatRequest req;
    req.model = "mock";
    req.prompt = render_prompt(PromptTemplateId::generate_intents,
                               {{"ARTICLES", "Floods hit the valley region. Dams strained badly."}});
    auto items = parse_keypoints(backend.complete(req).text);
    CHECK(items.size() == 5);
  }
}

TEST_CASE("mock embedder is deterministic and unit-normalized") {
  auto v1 = MockEmbeddingBackend::embed_one("The dam failed on Tuesday.");
  auto v2 = MockEmbeddingBackend::embed_one("The dam failed on Tuesday.");
  CHECK(v1 == v2);
  REQUIRE(v1.size() == 128);
  double norm = 0.0;
  for (double x : v1) norm += x * x;
  CHECK(norm == Catch::Approx(1.0).epsilon(1e-12));
  auto v3 = MockEmbeddingBackend::embed_one("Completely different words entirely.");
  CHECK(v1 != v3);
}

TEST_CASE("http backends speak the wire format against a local server") {
  httplib::Server server;
  std::atomic<int> chat_hits{0};

  server.Post("/v1/chat/completions", [&](const httplib::Request& req, httplib::Response& res) {
    int hit = ++chat_hits;
    auto body = json::parse(req.body);
    REQUIRE(body.at("messages").at(0).at("role") == "user");
    if (hit <= 2) {
      res.status = 503;
      res.set_content("overloaded", "text/plain");
      return;
    }
    json out = {{"choices",
                 json::array({{{"message", {{"content", "echo: " + body.at("model").get<std::string>()}}},
                               {"finish_reason", "stop"}}})}};
    res.set_content(out.dump(), "application/json");
  });
  server.Post("/v1/teapot", [&](const httplib::Request&, httplib::Response& res) {
    res.status = 418;
    res.set_content("short and stout", "text/plain");
  });
  server.Post("/v1/embeddings", [&](const httplib::Request& req, httplib::Response& res) {
    auto body = json::parse(req.body);
    const auto& inputs = body.at("input");
    json data = json::array();
    // Rows returned in reverse order to exercise index-based alignment.
    for (int i = static_cast<int>(inputs.size()) - 1; i >= 0; --i) {
      double len = static_cast<double>(inputs.at(i).get<std::string>().size());
      data.push_back({{"index", i}, {"embedding", {len, 1.0}}});
    }
    res.set_content(json{{"data", data}}.dump(), "application/json");
  });

  int port = server.bind_to_any_port("127.0.0.1");
  std::thread server_thread([&] { server.listen_after_bind(); });
  server.wait_until_ready();
  std::string base = "http://127.0.0.1:" + std::to_string(port);

  SECTION("chat retries through 5xx and succeeds") {
    auto backend = std::make_shared<HttpChatBackend>(base, "test-key");
    RecordingSleep sleeper;
    ChatClient client(backend, std::make_shared<CacheStore>(), RetryPolicy{}, sleeper.fn());
    ChatRequest req;
    req.model = "gpt-test";
    req.prompt = "hello";
    auto res = client.complete(req);
    CHECK(res.text == "echo: gpt-test");
    CHECK(chat_hits.load() == 3);
    CHECK(sleeper.delays.size() == 2);
  }
  SECTION("4xx is permanent") {
    HttpChatBackend backend(base, "", "/v1/teapot");
    ChatRequest req;
    req.model = "m";
    req.prompt = "p";
    CHECK_THROWS_AS(backend.complete(req), PermanentError);
  }
  SECTION("embeddings align rows by index") {
    HttpEmbeddingBackend backend(base, "");
    auto vecs = backend.embed("embed-test", {"ab", "abcd", "a"});
    REQUIRE(vecs.size() == 3);
    CHECK(vecs[0][0] == Catch::Approx(2.0));
    CHECK(vecs[1][0] == Catch::Approx(4.0));
    CHECK(vecs[2][0] == Catch::Approx(1.0));
  }
  SECTION("connection refusal is transient") {
    HttpChatBackend backend("http://127.0.0.1:1", "");
    ChatRequest req;
    req.model = "m";
    req.prompt = "p";
    CHECK_THROWS_AS(backend.complete(req), TransientError);
  }

  server.stop();
  server_thread.join();
}
