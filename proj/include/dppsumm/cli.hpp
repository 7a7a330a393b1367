#pragma once

// Operator entry point. Subcommands cover each pipeline stage plus the
// end-to-end run, evaluation, corpus augmentation, and a brute-force DPP
// oracle. Configuration comes from one key/value file; every flag overrides
// its file value. Exit codes: 0 success, 1 validation error, 2 runtime
// failure. Events go to stderr one line each; artifacts only to --out.

#include <atomic>
#include <csignal>
#include <cstdio>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include <CLI11.hpp>

#include "dppsumm/config.hpp"
#include "dppsumm/corpus.hpp"
#include "dppsumm/dpp.hpp"
#include "dppsumm/errors.hpp"
#include "dppsumm/eval.hpp"
#include "dppsumm/gateway.hpp"
#include "dppsumm/http_backend.hpp"
#include "dppsumm/kernel.hpp"
#include "dppsumm/pipeline.hpp"
#include "dppsumm/rng.hpp"
#include "dppsumm/util.hpp"

namespace dppsumm {
namespace cli_detail {

inline std::atomic<bool>& interrupt_flag() {
  static std::atomic<bool> flag{false};
  return flag;
}

inline void handle_interrupt(int) { interrupt_flag().store(true); }

// Reads a credential by the env-var name from the config. Only the variable
// name ever appears in errors or logs.
inline std::string env_credential(const std::string& var) {
  if (var.empty()) return "";
  const char* v = std::getenv(var.c_str());
  if (!v) throw ValidationError("environment variable '" + var + "' is not set");
  return v;
}

struct Services {
  std::shared_ptr<CacheStore> cache;
  std::shared_ptr<ChatClient> chat;
  std::shared_ptr<EmbeddingClient> embed;  // null when live config has no embed endpoint
};

inline Services build_services(const RunConfig& cfg) {
  Services svc;
  svc.cache = cfg.cache.empty() ? std::make_shared<CacheStore>()
                                : std::make_shared<CacheStore>(cfg.cache);
  std::shared_ptr<ChatBackend> chat_backend;
  std::shared_ptr<EmbeddingBackend> embed_backend;
  if (cfg.backend == "mock") {
    chat_backend = std::make_shared<MockChatBackend>();
    embed_backend = std::make_shared<MockEmbeddingBackend>();
  } else {
    if (cfg.chat_endpoint.empty()) {
      throw ValidationError("live backend requires chat_endpoint");
    }
    chat_backend = std::make_shared<HttpChatBackend>(cfg.chat_endpoint,
                                                     env_credential(cfg.chat_api_key_env));
    if (!cfg.embed_endpoint.empty()) {
      embed_backend = std::make_shared<HttpEmbeddingBackend>(
          cfg.embed_endpoint, env_credential(cfg.embed_api_key_env));
    }
  }
  svc.chat = std::make_shared<ChatClient>(chat_backend, svc.cache);
  if (embed_backend) {
    svc.embed = std::make_shared<EmbeddingClient>(embed_backend, svc.cache, cfg.embed_model,
                                                  cfg.embed_batch_size);
  }
  return svc;
}

inline std::vector<StoryBundle> require_stories(const RunConfig& cfg) {
  if (cfg.stories.empty()) throw ValidationError("this subcommand requires --stories");
  return load_stories(cfg.stories);
}

inline std::filesystem::path out_path(const RunConfig& cfg, const char* name) {
  return std::filesystem::path(cfg.out) / name;
}

inline std::optional<UserIntent> resolve_intent(const StoryBundle& story,
                                                const std::optional<std::string>& intent_id) {
  if (!intent_id) return std::nullopt;
  for (const auto& intent : story.intents) {
    if (intent.intent_id == *intent_id) return intent;
  }
  throw ValidationError("intent '" + *intent_id + "' not found in story " + story.story_id);
}

inline KeyPointSet story_units(const KeyPointSet& kps, const std::string& story_id) {
  KeyPointSet units;
  for (const auto& kp : kps) {
    if (kp.story_id == story_id) units.push_back(kp);
  }
  return units;
}

inline void log_warnings(const std::string& story_id, const std::vector<std::string>& warnings) {
  for (const auto& w : warnings) log_event("warning", {{"story", story_id}, {"message", w}});
}

inline int cmd_extract(const RunConfig& cfg) {
  auto stories = require_stories(cfg);
  auto svc = build_services(cfg);
  Pipeline pipe(svc.chat, svc.embed, cfg.pipeline_options());
  const Strategy strat = strategy_from_name(cfg.strategy);
  KeyPointSet all;
  for (const auto& story : stories) {
    KeyPointSet units;
    if (strat == Strategy::dpp_sentences) {
      units = pipe.sentence_units(story);
    } else {
      auto ex = pipe.extract_keypoints(story);
      units = std::move(ex.points);
      log_warnings(story.story_id, ex.warnings);
    }
    log_event("extracted",
              {{"story", story.story_id}, {"units", std::to_string(units.size())}});
    all.insert(all.end(), units.begin(), units.end());
  }
  store_keypoints(out_path(cfg, "keypoints.jsonl"), all);
  return 0;
}

inline int cmd_embed(const RunConfig& cfg) {
  auto kps = load_keypoints(out_path(cfg, "keypoints.jsonl"));
  if (kps.empty()) throw ValidationError("keypoints.jsonl is empty; run extract first");
  auto svc = build_services(cfg);
  Pipeline pipe(svc.chat, svc.embed, cfg.pipeline_options());
  auto store = pipe.embed_units(kps);
  store_embeddings(out_path(cfg, "embeddings.jsonl"), store);
  log_event("embedded", {{"units", std::to_string(store.size())},
                         {"dim", std::to_string(store.dim())}});
  return 0;
}

inline int cmd_select(const RunConfig& cfg) {
  auto scfg = cfg.strategy_config();
  scfg.validate();
  auto stories = require_stories(cfg);
  auto kps = load_keypoints(out_path(cfg, "keypoints.jsonl"));
  EmbeddingStore embeddings;
  if (strategy_uses_embeddings(scfg.strategy)) {
    embeddings = load_embeddings(out_path(cfg, "embeddings.jsonl"));
  }
  auto svc = build_services(cfg);
  Pipeline pipe(svc.chat, svc.embed, cfg.pipeline_options());
  std::vector<SelectionRecord> selections;
  for (const auto& story : stories) {
    auto units = story_units(kps, story.story_id);
    if (units.empty()) {
      throw ValidationError("no extracted units for story " + story.story_id +
                            "; run extract first");
    }
    auto intent = resolve_intent(story, scfg.intent_id);
    std::vector<std::string> warnings;
    auto result = pipe.select(scfg, story, units, embeddings, intent, warnings);
    log_warnings(story.story_id, warnings);
    SelectionRecord record;
    record.story_id = story.story_id;
    record.strategy = strategy_name(scfg.strategy);
    record.intent_id = scfg.intent_id;
    record.selected_kp_ids = result.selected_ids;
    if (strategy_uses_embeddings(scfg.strategy)) record.kernel = json(scfg.kernel);
    record.seed = scfg.seed;
    log_event("selected", {{"story", story.story_id},
                           {"units", std::to_string(result.selected_ids.size())}});
    selections.push_back(std::move(record));
  }
  store_selections(out_path(cfg, "selections.jsonl"), selections);
  return 0;
}

inline int cmd_rewrite(const RunConfig& cfg) {
  auto kps = load_keypoints(out_path(cfg, "keypoints.jsonl"));
  auto selections = load_selections(out_path(cfg, "selections.jsonl"));
  auto svc = build_services(cfg);
  Pipeline pipe(svc.chat, svc.embed, cfg.pipeline_options());
  std::vector<SummaryRecord> summaries;
  for (const auto& sel : selections) {
    auto units = story_units(kps, sel.story_id);
    std::vector<std::string> warnings;
    auto text = pipe.rewrite(sel.selected_kp_ids, units, warnings);
    log_warnings(sel.story_id, warnings);
    summaries.push_back(SummaryRecord{sel.story_id, sel.strategy, sel.intent_id, std::move(text),
                                      cfg.chat_model});
  }
  store_summaries(out_path(cfg, "summaries.jsonl"), summaries);
  log_event("rewritten", {{"summaries", std::to_string(summaries.size())}});
  return 0;
}

inline int cmd_run(const RunConfig& cfg) {
  auto stories = require_stories(cfg);
  auto scfg = cfg.strategy_config();
  auto svc = build_services(cfg);
  Pipeline pipe(svc.chat, svc.embed, cfg.pipeline_options());

  BatchOptions opts;
  opts.max_in_flight = cfg.max_in_flight;
  opts.per_intent = cfg.intent_mode == "per-intent";
  interrupt_flag().store(false);
  opts.should_abort = [] { return interrupt_flag().load(); };
  auto prev = std::signal(SIGINT, handle_interrupt);
  auto result = run_batch(pipe, stories, scfg, cfg.out, opts);
  std::signal(SIGINT, prev);

  std::map<std::string, int> counts;
  for (const auto& row : result.manifest.at("stories")) {
    counts[row.at("status").get<std::string>()] += 1;
  }
  log_event("run_done", {{"out", cfg.out},
                         {"ok", std::to_string(counts["ok"])},
                         {"failed", std::to_string(counts["failed"])},
                         {"interrupted", std::to_string(counts["interrupted"])},
                         {"skipped", std::to_string(counts["skipped_no_intents"])}});
  return counts["interrupted"] > 0 ? 2 : 0;
}

inline int cmd_judge(const RunConfig& cfg) {
  auto stories = require_stories(cfg);
  auto summaries = load_summaries(out_path(cfg, "summaries.jsonl"));
  auto svc = build_services(cfg);
  Judge judge(svc.chat, cfg.judge_model.empty() ? cfg.chat_model : cfg.judge_model,
              cfg.temperature, cfg.max_tokens);
  std::map<std::string, const StoryBundle*> by_id;
  for (const auto& s : stories) by_id[s.story_id] = &s;

  std::vector<std::vector<CoverageVerdictRecord>> per(summaries.size());
  parallel_for_bounded(summaries.size(), cfg.max_in_flight, [&](std::size_t i) {
    const auto& summary = summaries[i];
    auto it = by_id.find(summary.story_id);
    if (it == by_id.end()) {
      throw ValidationError("summary references unknown story '" + summary.story_id + "'");
    }
    for (const auto& q : questions_for_run(*it->second, summary.intent_id)) {
      per[i].push_back(
          judge.judge_question(summary.summary_text, q, summary.strategy, summary.intent_id));
    }
  });

  std::vector<CoverageVerdictRecord> verdicts;
  int unjudged = 0;
  for (const auto& block : per) {
    for (const auto& v : block) {
      if (!v.judged) ++unjudged;
      verdicts.push_back(v);
    }
  }
  store_verdicts(out_path(cfg, "verdicts.jsonl"), verdicts);
  log_event("judged", {{"verdicts", std::to_string(verdicts.size())},
                       {"unjudged", std::to_string(unjudged)},
                       {"model", judge.model()}});
  return 0;
}

inline int cmd_report(const RunConfig& cfg) {
  ReportInputs in;
  in.verdicts = load_verdicts(out_path(cfg, "verdicts.jsonl"));
  in.stories = require_stories(cfg);
  in.selections = load_selections(out_path(cfg, "selections.jsonl"));
  in.keypoints = load_keypoints(out_path(cfg, "keypoints.jsonl"));
  in.summaries = load_summaries(out_path(cfg, "summaries.jsonl"));

  auto embeddings_file = out_path(cfg, "embeddings.jsonl");
  if (std::filesystem::exists(embeddings_file)) {
    auto store = load_embeddings(embeddings_file);
    for (const auto& sel : in.selections) {
      std::set<std::string> chosen(sel.selected_kp_ids.begin(), sel.selected_kp_ids.end());
      for (const auto& kp : in.keypoints) {
        if (kp.story_id != sel.story_id || !store.has(kp.kp_id)) continue;
        EmbeddingExportRow row;
        row.id = kp.kp_id;
        row.vector = store.get(kp.kp_id);
        row.selected = chosen.count(kp.kp_id) > 0;
        row.story_id = kp.story_id;
        row.strategy = sel.strategy;
        row.intent_id = sel.intent_id;
        in.embedding_rows.push_back(std::move(row));
      }
    }
  }

  auto report_dir = out_path(cfg, "report");
  emit_report(in, report_dir);
  log_event("report_done", {{"dir", report_dir.string()},
                            {"verdicts", std::to_string(in.verdicts.size())},
                            {"export_rows", std::to_string(in.embedding_rows.size())}});
  return 0;
}

inline int cmd_augment_questions(const RunConfig& cfg) {
  auto stories = require_stories(cfg);
  auto svc = build_services(cfg);
  Pipeline pipe(svc.chat, svc.embed, cfg.pipeline_options());
  for (auto& story : stories) {
    auto res = pipe.augment_questions(story);
    log_warnings(story.story_id, res.warnings);
    story.questions = std::move(res.questions);
    log_event("questions_augmented", {{"story", story.story_id},
                                      {"questions", std::to_string(story.questions.size())}});
  }
  store_stories(out_path(cfg, "stories.jsonl"), stories);
  return 0;
}

inline int cmd_augment_intents(const RunConfig& cfg) {
  auto stories = require_stories(cfg);
  auto svc = build_services(cfg);
  if (!svc.embed) throw ValidationError("augment-intents requires an embedding backend");
  Pipeline pipe(svc.chat, svc.embed, cfg.pipeline_options());
  for (auto& story : stories) {
    if (story.questions.empty()) {
      throw ValidationError("story " + story.story_id +
                            " has no questions; run augment-questions first");
    }
    std::vector<std::string> texts;
    texts.reserve(story.questions.size());
    for (const auto& q : story.questions) texts.push_back(q.text);
    auto vectors = svc.embed->embed(texts);
    EmbeddingStore question_embeddings;
    for (std::size_t i = 0; i < story.questions.size(); ++i) {
      question_embeddings.add(story.questions[i].question_id, vectors[i]);
    }
    auto res = pipe.augment_intents(story, question_embeddings);
    log_warnings(story.story_id, res.warnings);
    story.intents = std::move(res.intents);
    log_event("intents_augmented", {{"story", story.story_id},
                                    {"intents", std::to_string(story.intents.size())}});
  }
  store_stories(out_path(cfg, "stories.jsonl"), stories);
  return 0;
}

// Brute-force checks on a kernel file: subset probabilities must sum to 1,
// the exact sampler's empirical distribution must match them, and the greedy
// MAP subset is reported for inspection. Small n only (full enumeration).
inline int cmd_oracle(const RunConfig& cfg, const std::string& kernel_file) {
  json doc = json::parse(read_file(kernel_file), nullptr, false);
  if (doc.is_discarded()) throw ParseError("kernel file is not valid JSON: " + kernel_file);
  json matrix = doc.is_array() ? doc : doc.value("matrix", json());
  if (!matrix.is_array() || matrix.empty()) {
    throw ValidationError("kernel file needs a non-empty 'matrix' array: " + kernel_file);
  }

  const int n = static_cast<int>(matrix.size());
  if (n > 16) {
    throw ValidationError("oracle enumerates all subsets; n=" + std::to_string(n) +
                          " exceeds the limit of 16");
  }
  KernelMatrix kernel;
  kernel.n = n;
  kernel.entries = Eigen::MatrixXd(n, n);
  for (int i = 0; i < n; ++i) {
    auto row = matrix.at(i).get<std::vector<double>>();
    if (static_cast<int>(row.size()) != n) {
      throw ValidationError("kernel row " + std::to_string(i) + " has " +
                            std::to_string(row.size()) + " entries, expected " +
                            std::to_string(n));
    }
    for (int j = 0; j < n; ++j) kernel.entries(i, j) = row[static_cast<std::size_t>(j)];
  }
  if (doc.is_object() && doc.contains("item_ids")) {
    kernel.item_ids = doc.at("item_ids").get<std::vector<std::string>>();
  } else {
    for (int i = 0; i < n; ++i) kernel.item_ids.push_back(std::to_string(i));
  }
  kernel.check_shape();

  auto projected = psd_project(kernel, 0.0);
  double clamp_delta = (projected.entries - kernel.entries).cwiseAbs().maxCoeff();
  std::printf("oracle: n=%d, psd projection moved entries by at most %.3e\n", n, clamp_delta);

  std::map<std::string, int> index_of;
  for (int i = 0; i < n; ++i) index_of[projected.item_ids[static_cast<std::size_t>(i)]] = i;

  const std::uint32_t subsets = 1u << n;
  std::vector<double> exact(subsets, 0.0);
  double mass = 0.0;
  for (std::uint32_t m = 0; m < subsets; ++m) {
    std::vector<int> subset;
    for (int i = 0; i < n; ++i) {
      if (m & (1u << i)) subset.push_back(i);
    }
    exact[m] = std::exp(subset_log_probability(projected, subset));
    mass += exact[m];
  }
  bool mass_ok = std::fabs(mass - 1.0) <= 1e-6;
  std::printf("oracle: total probability mass %.9f [%s]\n", mass, mass_ok ? "ok" : "FAIL");

  auto spectrum = eigendecompose(projected);
  const int draws = n <= 8 ? 200000 : 50000;
  const bool gate_tv = n <= 8;
  std::vector<int> counts(subsets, 0);
  SplitMix64 seeder(cfg.seed);
  for (int d = 0; d < draws; ++d) {
    auto result = sample_exact(spectrum, seeder.next_u64());
    std::uint32_t m = 0;
    for (const auto& id : result.selected_ids) m |= 1u << index_of.at(id);
    counts[m] += 1;
  }
  double tv = 0.0;
  for (std::uint32_t m = 0; m < subsets; ++m) {
    tv += std::fabs(static_cast<double>(counts[m]) / draws - exact[m]);
  }
  tv *= 0.5;
  bool tv_ok = !gate_tv || tv <= 0.02;
  std::printf("oracle: sampler TV distance %.4f over %d draws [%s]\n", tv, draws,
              gate_tv ? (tv_ok ? "ok" : "FAIL") : "info");

  auto greedy = map_greedy(projected);
  std::string ids;
  for (const auto& id : greedy.selected_ids) {
    if (!ids.empty()) ids += ' ';
    ids += id;
  }
  std::printf("oracle: greedy map subset [%s] log_det %.6f\n",
              ids.empty() ? "(empty)" : ids.c_str(), greedy.log_det.value_or(0.0));

  log_event("oracle", {{"n", std::to_string(n)},
                       {"mass", format_sig6(mass)},
                       {"tv", format_sig6(tv)},
                       {"draws", std::to_string(draws)}});
  if (!mass_ok || !tv_ok) {
    std::printf("oracle: CHECKS FAILED\n");
    return 2;
  }
  std::printf("oracle: all checks passed\n");
  return 0;
}

}  // namespace cli_detail

inline int cli_main(int argc, char** argv) {
  CLI::App app{"diversity summarization: extract, select, rewrite, evaluate"};
  app.require_subcommand(1);

  std::optional<std::string> config_path, stories, out, strategy, kernel, intent_mode, backend;
  std::optional<double> sigma;
  std::optional<int> k, max_in_flight;
  std::optional<std::uint64_t> seed;

  app.add_option("--config", config_path, "configuration file (key = value lines)");
  app.add_option("--stories", stories, "story corpus file (jsonl)");
  app.add_option("--out", out, "artifact directory");
  app.add_option("--strategy", strategy,
                 "naive|all_kps|llm_selected|dpp|dpp_relevance|kdpp|uniform|dpp_sentences");
  app.add_option("--kernel", kernel, "kernel family: gaussian|linear");
  app.add_option("--sigma", sigma, "gaussian kernel bandwidth");
  app.add_option("--k", k, "subset size for kdpp/uniform");
  app.add_option("--seed", seed, "root random seed");
  app.add_option("--intent-mode", intent_mode, "none|per-intent");
  app.add_option("--max-in-flight", max_in_flight, "concurrent stories");
  app.add_option("--backend", backend, "mock|live");

  auto* c_extract = app.add_subcommand("extract", "extract key points per article");
  auto* c_embed = app.add_subcommand("embed", "embed extracted units");
  auto* c_select = app.add_subcommand("select", "select a diverse subset of units");
  auto* c_rewrite = app.add_subcommand("rewrite", "rewrite selections into summaries");
  auto* c_run = app.add_subcommand("run", "end-to-end batch over all stories");
  auto* c_judge = app.add_subcommand("judge", "judge summaries against benchmark questions");
  auto* c_report = app.add_subcommand("report", "emit coverage and significance reports");
  auto* c_aq = app.add_subcommand("augment-questions", "generate benchmark questions");
  auto* c_ai = app.add_subcommand("augment-intents", "generate user intents");
  auto* c_oracle = app.add_subcommand("oracle", "brute-force DPP checks on a kernel file");
  std::string oracle_file;
  c_oracle->add_option("kernel_file", oracle_file, "JSON file with a 'matrix' array")->required();
  for (auto* sub : app.get_subcommands({})) sub->fallthrough();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);  // prints help or the parse error
    return code == 0 ? 0 : 1;
  }

  try {
    RunConfig cfg;
    if (config_path) cfg = load_run_config(*config_path);
    if (stories) cfg.stories = *stories;
    if (out) cfg.out = *out;
    if (strategy) cfg.strategy = *strategy;
    if (kernel) cfg.kernel = *kernel;
    if (sigma) cfg.sigma = *sigma;
    if (k) cfg.k = *k;
    if (seed) cfg.seed = *seed;
    if (intent_mode) cfg.intent_mode = *intent_mode;
    if (max_in_flight) cfg.max_in_flight = *max_in_flight;
    if (backend) cfg.backend = *backend;
    cfg.validate();

    using namespace cli_detail;
    if (*c_extract) return cmd_extract(cfg);
    if (*c_embed) return cmd_embed(cfg);
    if (*c_select) return cmd_select(cfg);
    if (*c_rewrite) return cmd_rewrite(cfg);
    if (*c_run) return cmd_run(cfg);
    if (*c_judge) return cmd_judge(cfg);
    if (*c_report) return cmd_report(cfg);
    if (*c_aq) return cmd_augment_questions(cfg);
    if (*c_ai) return cmd_augment_intents(cfg);
    if (*c_oracle) return cmd_oracle(cfg, oracle_file);
    throw ValidationError("no subcommand given");
  } catch (const ValidationError& e) {
    log_event("error", {{"kind", "validation"}, {"message", e.what()}});
    return 1;
  } catch (const ParseError& e) {
    log_event("error", {{"kind", "validation"}, {"message", e.what()}});
    return 1;
  } catch (const std::exception& e) {
    log_event("error", {{"kind", "runtime"}, {"message", e.what()}});
    return 2;
  }
}

}  // namespace dppsumm
