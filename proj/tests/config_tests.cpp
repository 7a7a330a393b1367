#include <catch2/catch_amalgamated.hpp>

#include <cstdlib>
#include <filesystem>
#include <string>

#include "dppsumm/config.hpp"

using namespace dppsumm;

TEST_CASE("config document parses keys, comments, and blanks") {
  RunConfig cfg = parse_run_config(
      "# corpus\n"
      "\n"
      "out = artifacts/run1\n"
      "backend=mock\n"
      "  strategy   =   kdpp  \n"
      "kernel = linear\n"
      "sigma = 0.5\n"
      "k = 20\n"
      "seed = 42\n"
      "intent_mode = per-intent\n"
      "max_in_flight = 2\n"
      "temperature = 0.1\n"
      "max_tokens = 512\n"
      "chat_model = m-large\n"
      "judge_model = m-judge\n"
      "chat_api_key_env = MY_CHAT_KEY\n");
  CHECK(cfg.out == "artifacts/run1");
  CHECK(cfg.backend == "mock");
  CHECK(cfg.strategy == "kdpp");
  CHECK(cfg.kernel == "linear");
  CHECK(cfg.sigma == 0.5);
  CHECK(cfg.k == std::optional<int>(20));
  CHECK(cfg.seed == 42u);
  CHECK(cfg.intent_mode == "per-intent");
  CHECK(cfg.max_in_flight == 2);
  CHECK(cfg.temperature == 0.1);
  CHECK(cfg.max_tokens == 512);
  CHECK(cfg.chat_model == "m-large");
  CHECK(cfg.judge_model == "m-judge");
  CHECK(cfg.chat_api_key_env == "MY_CHAT_KEY");
  CHECK(cfg.stories.empty());  // untouched defaults survive
}

TEST_CASE("config document rejects malformed input") {
  CHECK_THROWS_AS(parse_run_config("no_equals_here\n"), ValidationError);
  CHECK_THROWS_AS(parse_run_config("= value\n"), ValidationError);
  CHECK_THROWS_AS(parse_run_config("mystery_key = 1\n"), ValidationError);
  CHECK_THROWS_AS(parse_run_config("seed = 1\nseed = 2\n"), ValidationError);
  CHECK_THROWS_AS(parse_run_config("sigma = abc\n"), ValidationError);
  CHECK_THROWS_AS(parse_run_config("k = 20x\n"), ValidationError);
  CHECK_THROWS_AS(parse_run_config("max_in_flight = 1.5\n"), ValidationError);
  try {
    parse_run_config("sigma = abc\n");
    FAIL("expected throw");
  } catch (const ValidationError& e) {
    CHECK(std::string(e.what()).find("sigma") != std::string::npos);
  }
}

TEST_CASE("environment variables interpolate into values") {
  setenv("DPPSUMM_TEST_MODEL", "remote-model-v2", 1);
  setenv("DPPSUMM_TEST_DIR", "/data", 1);
  RunConfig cfg = parse_run_config(
      "chat_model = ${DPPSUMM_TEST_MODEL}\n"
      "out = ${DPPSUMM_TEST_DIR}/runs\n");
  CHECK(cfg.chat_model == "remote-model-v2");
  CHECK(cfg.out == "/data/runs");

  unsetenv("DPPSUMM_TEST_UNSET");
  try {
    parse_run_config("chat_model = ${DPPSUMM_TEST_UNSET}\n");
    FAIL("expected throw");
  } catch (const ValidationError& e) {
    std::string msg = e.what();
    CHECK(msg.find("DPPSUMM_TEST_UNSET") != std::string::npos);
    CHECK(msg.find("chat_model") != std::string::npos);
  }

  CHECK_THROWS_AS(parse_run_config("chat_model = ${NOT_CLOSED\n"), ValidationError);
  CHECK_THROWS_AS(parse_run_config("chat_model = ${}\n"), ValidationError);
}

TEST_CASE("run config validation catches bad settings") {
  RunConfig cfg;
  cfg.validate();  // defaults are valid

  auto expect_invalid = [](RunConfig bad) { CHECK_THROWS_AS(bad.validate(), ValidationError); };
  {
    RunConfig bad;
    bad.backend = "cloud";
    expect_invalid(bad);
  }
  {
    RunConfig bad;
    bad.intent_mode = "always";
    expect_invalid(bad);
  }
  {
    RunConfig bad;
    bad.strategy = "magic";
    expect_invalid(bad);
  }
  {
    RunConfig bad;
    bad.kernel = "cubic";
    expect_invalid(bad);
  }
  {
    RunConfig bad;
    bad.sigma = 0.0;
    expect_invalid(bad);
  }
  {
    RunConfig bad;
    bad.max_in_flight = 0;
    expect_invalid(bad);
  }
  {
    RunConfig bad;
    bad.stories = "/definitely/not/a/real/path.jsonl";
    expect_invalid(bad);
  }
}

TEST_CASE("run config maps onto strategy and pipeline settings") {
  RunConfig cfg;
  cfg.strategy = "kdpp";
  cfg.kernel = "linear";
  cfg.sigma = 0.25;
  cfg.psd_epsilon = 1e-9;
  cfg.k = 10;
  cfg.seed = 99;
  cfg.chat_model = "m";
  cfg.temperature = 0.3;
  cfg.max_tokens = 128;
  cfg.max_prompt_chars = 1000;

  auto scfg = cfg.strategy_config();
  CHECK(scfg.strategy == Strategy::kdpp);
  CHECK(scfg.kernel.family == KernelFamily::linear);
  CHECK(scfg.kernel.sigma == 0.25);
  CHECK(scfg.kernel.psd_epsilon == 1e-9);
  CHECK(scfg.k == std::optional<int>(10));
  CHECK(scfg.seed == 99u);
  scfg.validate();

  auto popts = cfg.pipeline_options();
  CHECK(popts.chat_model == "m");
  CHECK(popts.temperature == 0.3);
  CHECK(popts.max_tokens == 128);
  CHECK(popts.max_prompt_chars == 1000u);
}
