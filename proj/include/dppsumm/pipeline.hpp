#pragma once

// Orchestration of the extract -> select -> rewrite method and its baselines,
// plus corpus augmentation (benchmark questions and user intents).
//
// Stories are independent units of work; a batch runner processes up to
// max_in_flight stories concurrently, stages within a story run sequentially,
// and artifacts are buffered and written in job order so a warm-cache re-run
// reproduces every output file byte for byte.

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "dppsumm/corpus.hpp"
#include "dppsumm/dpp.hpp"
#include "dppsumm/errors.hpp"
#include "dppsumm/gateway.hpp"
#include "dppsumm/kernel.hpp"
#include "dppsumm/prompts.hpp"
#include "dppsumm/rng.hpp"
#include "dppsumm/util.hpp"

namespace dppsumm {

enum class Strategy {
  naive,
  all_kps,
  llm_selected,
  dpp,
  dpp_relevance,
  kdpp,
  uniform,
  dpp_sentences,
};

inline std::string strategy_name(Strategy s) {
  switch (s) {
    case Strategy::naive: return "naive";
    case Strategy::all_kps: return "all_kps";
    case Strategy::llm_selected: return "llm_selected";
    case Strategy::dpp: return "dpp";
    case Strategy::dpp_relevance: return "dpp_relevance";
    case Strategy::kdpp: return "kdpp";
    case Strategy::uniform: return "uniform";
    case Strategy::dpp_sentences: return "dpp_sentences";
  }
  throw ValidationError("unknown strategy enum value");
}

inline Strategy strategy_from_name(const std::string& name) {
  static const std::map<std::string, Strategy> table = {
      {"naive", Strategy::naive},
      {"all_kps", Strategy::all_kps},
      {"llm_selected", Strategy::llm_selected},
      {"dpp", Strategy::dpp},
      {"dpp_relevance", Strategy::dpp_relevance},
      {"kdpp", Strategy::kdpp},
      {"uniform", Strategy::uniform},
      {"dpp_sentences", Strategy::dpp_sentences},
  };
  auto it = table.find(name);
  if (it == table.end()) throw ValidationError("unknown strategy '" + name + "'");
  return it->second;
}

// Kernel-based strategies need unit embeddings; the rest must never touch the
// embedding service (strategy isolation).
inline bool strategy_uses_embeddings(Strategy s) {
  return s == Strategy::dpp || s == Strategy::dpp_relevance || s == Strategy::kdpp ||
         s == Strategy::dpp_sentences;
}

inline bool strategy_takes_k(Strategy s) {
  return s == Strategy::kdpp || s == Strategy::uniform;
}

// Strategies with a query-focused variant conditioned on a user intent.
inline bool strategy_allows_intent(Strategy s) {
  return s == Strategy::naive || s == Strategy::llm_selected || s == Strategy::dpp_relevance;
}

struct StrategyConfig {
  Strategy strategy = Strategy::dpp;
  KernelConfig kernel;
  std::optional<int> k;
  std::uint64_t seed = 0;
  std::optional<std::string> intent_id;

  void validate() const {
    if (strategy_takes_k(strategy)) {
      if (!k) throw ValidationError("strategy " + strategy_name(strategy) + " requires k");
      if (*k < 1) throw ValidationError("k must be at least 1");
    } else if (k) {
      throw ValidationError("strategy " + strategy_name(strategy) + " does not take k");
    }
    if (intent_id && !strategy_allows_intent(strategy)) {
      throw ValidationError("strategy " + strategy_name(strategy) + " does not take an intent");
    }
    if (strategy == Strategy::dpp_relevance && !intent_id) {
      throw ValidationError("dpp_relevance requires an intent_id");
    }
    if (strategy_uses_embeddings(strategy)) kernel.validate();
  }

  json to_json() const {
    json j;
    j["strategy"] = strategy_name(strategy);
    j["seed"] = seed;
    if (strategy_uses_embeddings(strategy)) j["kernel"] = kernel;
    if (k) j["k"] = *k;
    if (intent_id) j["intent_id"] = *intent_id;
    return j;
  }

  static StrategyConfig from_json(const json& j) {
    StrategyConfig cfg;
    cfg.strategy = strategy_from_name(require_field<std::string>(j, "strategy", "strategy config"));
    cfg.seed = require_field<std::uint64_t>(j, "seed", "strategy config");
    if (j.contains("kernel")) cfg.kernel = j.at("kernel").get<KernelConfig>();
    if (j.contains("k")) cfg.k = j.at("k").get<int>();
    if (j.contains("intent_id")) cfg.intent_id = j.at("intent_id").get<std::string>();
    cfg.validate();
    return cfg;
  }
};

// Articles joined in ascending index order under numbered headers. The fixed
// order is what makes positional coverage analysis meaningful.
inline std::string concat_articles(const StoryBundle& story) {
  std::vector<const Article*> order;
  order.reserve(story.articles.size());
  for (const auto& a : story.articles) order.push_back(&a);
  std::sort(order.begin(), order.end(),
            [](const Article* a, const Article* b) { return a->index < b->index; });
  std::string out;
  for (std::size_t i = 0; i < order.size(); ++i) {
    if (i > 0) out += "\n\n";
    out += "ARTICLE " + std::to_string(order[i]->index + 1) + ":\n" + order[i]->text;
  }
  return out;
}

// Summaries arrive wrapped as ```Report: ...```; the body is extracted when
// the scaffold is present and the raw text is kept (with a warning) when not.
inline std::string strip_report_scaffold(const std::string& raw, std::vector<std::string>& warnings) {
  static const std::string open = "```Report:";
  auto start = raw.find(open);
  if (start == std::string::npos) {
    warnings.push_back("summary missing report scaffold; kept verbatim");
    return trim(raw);
  }
  auto body_start = start + open.size();
  auto end = raw.find("```", body_start);
  if (end == std::string::npos) end = raw.size();
  return trim(raw.substr(body_start, end - body_start));
}

struct StoryArtifacts {
  RunRecord record;
  std::optional<KeyPointSet> units;
  std::optional<SelectionRecord> selection;
  std::optional<SummaryRecord> summary;
  std::optional<EmbeddingStore> embeddings;
};

struct PipelineOptions {
  std::string chat_model = "mock-chat";
  double temperature = 0.7;
  int max_tokens = 4096;
  // Upper bound on rendered selection prompts. Overflow is resolved by
  // truncating the articles block, never the key points.
  std::size_t max_prompt_chars = 250000;
};

class Pipeline {
 public:
  Pipeline(std::shared_ptr<ChatClient> chat, std::shared_ptr<EmbeddingClient> embed,
           PipelineOptions opts = {})
      : chat_(std::move(chat)), embed_(std::move(embed)), opts_(std::move(opts)) {
    if (!chat_) throw ValidationError("pipeline requires a chat client");
  }

  const PipelineOptions& options() const { return opts_; }

  struct Extracted {
    KeyPointSet points;
    std::vector<std::string> warnings;
  };

  // One extraction call per article, ascending index. A parse failure on one
  // article degrades the story (warning, no points from that article); the
  // story as a whole fails only when every article fails.
  Extracted extract_keypoints(const StoryBundle& story) const {
    Extracted out;
    std::vector<const Article*> order;
    for (const auto& a : story.articles) order.push_back(&a);
    std::sort(order.begin(), order.end(),
              [](const Article* a, const Article* b) { return a->index < b->index; });
    std::size_t failed = 0;
    for (const Article* a : order) {
      try {
        auto resp = complete(render_prompt(PromptTemplateId::extract_kp, {{"ARTICLE", a->text}}));
        if (resp.truncated) {
          out.warnings.push_back("extract: article " + a->article_id + ": output truncated");
        }
        int ordinal = 0;
        for (const auto& text : parse_keypoints(resp.text)) {
          KeyPoint kp;
          kp.story_id = story.story_id;
          kp.article_id = a->article_id;
          kp.ordinal = ordinal++;
          kp.text = text;
          kp.kp_id = derive_kp_id(story.story_id, a->article_id, kp.ordinal);
          out.points.push_back(std::move(kp));
        }
      } catch (const ParseError& e) {
        ++failed;
        out.warnings.push_back("extract: article " + a->article_id + ": " + e.what());
      }
    }
    if (!order.empty() && failed == order.size()) {
      throw PipelineError("extraction failed for every article in story " + story.story_id);
    }
    return out;
  }

  // Sentence units for the extractive ablation: same shape as key points but
  // produced by the segmenter, with no chat call involved.
  KeyPointSet sentence_units(const StoryBundle& story) const {
    std::vector<const Article*> order;
    for (const auto& a : story.articles) order.push_back(&a);
    std::sort(order.begin(), order.end(),
              [](const Article* a, const Article* b) { return a->index < b->index; });
    KeyPointSet units;
    for (const Article* a : order) {
      auto sents = segment_sentences(*a, story.story_id);
      units.insert(units.end(), sents.begin(), sents.end());
    }
    return units;
  }

  EmbeddingStore embed_units(const KeyPointSet& units) const {
    require_embedder();
    std::vector<std::string> texts;
    texts.reserve(units.size());
    for (const auto& kp : units) texts.push_back(kp.text);
    auto vectors = embed_->embed(texts);
    EmbeddingStore store;
    for (std::size_t i = 0; i < units.size(); ++i) store.add(units[i].kp_id, vectors[i]);
    return store;
  }

  std::vector<double> embed_text(const std::string& text) const {
    require_embedder();
    return embed_->embed({text}).front();
  }

  SelectionResult select(const StrategyConfig& cfg, const StoryBundle& story,
                         const KeyPointSet& units, const EmbeddingStore& embeddings,
                         const std::optional<UserIntent>& intent,
                         std::vector<std::string>& warnings) const {
    cfg.validate();
    if (units.empty()) throw ValidationError("select: no candidate units");
    const std::uint64_t seed = story_seed(cfg.seed, story.story_id);

    SelectionResult result;
    switch (cfg.strategy) {
      case Strategy::naive:
        throw ValidationError("naive strategy has no selection stage");
      case Strategy::all_kps: {
        result.strategy = SelectionStrategy::all;
        result.seed = seed;
        for (const auto& kp : units) result.selected_ids.push_back(kp.kp_id);
        break;
      }
      case Strategy::uniform: {
        result = sample_uniform(unit_ids(units), *cfg.k, seed);
        break;
      }
      case Strategy::llm_selected: {
        result = select_via_llm(story, units, intent, warnings);
        result.seed = seed;
        break;
      }
      case Strategy::dpp:
      case Strategy::dpp_sentences:
      case Strategy::dpp_relevance:
      case Strategy::kdpp: {
        auto kernel = build_unit_kernel(cfg, units, embeddings, intent);
        auto spectrum = eigendecompose(kernel);
        result = cfg.strategy == Strategy::kdpp ? sample_kdpp(spectrum, *cfg.k, seed)
                                                : sample_exact(spectrum, seed);
        result.kernel_config = cfg.kernel;
        break;
      }
    }
    if (result.selected_ids.empty()) {
      throw PipelineError("selection came back empty for story " + story.story_id);
    }
    return result;
  }

  // The rewrite prompt takes only the selected key points, listed in
  // selection order.
  std::string rewrite(const std::vector<std::string>& selected_ids, const KeyPointSet& units,
                      std::vector<std::string>& warnings) const {
    if (selected_ids.empty()) throw ValidationError("rewrite: empty selection");
    std::map<std::string, const KeyPoint*> by_id;
    for (const auto& kp : units) by_id[kp.kp_id] = &kp;
    std::string block;
    for (const auto& id : selected_ids) {
      auto it = by_id.find(id);
      if (it == by_id.end()) throw ValidationError("rewrite: unknown unit id '" + id + "'");
      block += "- " + it->second->text + "\n";
    }
    auto resp = complete(render_prompt(PromptTemplateId::rewrite, {{"SELECTED KEYPOINTS", block}}));
    if (resp.truncated) warnings.push_back("rewrite: output truncated");
    return strip_report_scaffold(resp.text, warnings);
  }

  // End-to-end run for one story. Never throws: every stage failure becomes a
  // failed record naming the stage, so batch runners can keep going.
  StoryArtifacts run_story(const StoryBundle& story, const StrategyConfig& cfg) const {
    StoryArtifacts out;
    RunRecord& rec = out.record;
    rec.story_id = story.story_id;
    rec.status = "ok";
    auto fail = [&](const std::string& stage, const std::exception& e) {
      rec.status = "failed";
      rec.failed_stage = stage;
      rec.warnings.push_back(stage + ": " + e.what());
    };

    std::optional<UserIntent> intent;
    try {
      cfg.validate();
      rec.strategy = strategy_name(cfg.strategy);
      rec.intent_id = cfg.intent_id;
      if (cfg.intent_id) {
        auto it = std::find_if(story.intents.begin(), story.intents.end(),
                               [&](const UserIntent& i) { return i.intent_id == *cfg.intent_id; });
        if (it == story.intents.end()) {
          throw ValidationError("intent '" + *cfg.intent_id + "' not found in story " +
                                story.story_id);
        }
        intent = *it;
      }
    } catch (const std::exception& e) {
      rec.strategy = strategy_name(cfg.strategy);
      rec.intent_id = cfg.intent_id;
      fail("config", e);
      return out;
    }

    if (cfg.strategy == Strategy::naive) {
      try {
        std::map<std::string, std::string> bindings{{"ARTICLES", concat_articles(story)}};
        auto tpl = PromptTemplateId::naive;
        if (intent) {
          tpl = PromptTemplateId::naive_relevance;
          bindings["USER INTENT"] = intent->text;
        }
        auto resp = complete(render_prompt(tpl, bindings));
        if (resp.truncated) rec.warnings.push_back("rewrite: output truncated");
        out.summary = SummaryRecord{story.story_id, rec.strategy, cfg.intent_id,
                                    strip_report_scaffold(resp.text, rec.warnings),
                                    opts_.chat_model};
        rec.summary_ref = "summaries.jsonl";
      } catch (const std::exception& e) {
        fail("rewrite", e);
      }
      return out;
    }

    KeyPointSet units;
    try {
      if (cfg.strategy == Strategy::dpp_sentences) {
        units = sentence_units(story);
      } else {
        auto ex = extract_keypoints(story);
        units = std::move(ex.points);
        rec.warnings.insert(rec.warnings.end(), ex.warnings.begin(), ex.warnings.end());
      }
      if (units.empty()) throw PipelineError("no units produced for story " + story.story_id);
    } catch (const std::exception& e) {
      fail("extract", e);
      return out;
    }
    rec.extracted = static_cast<int>(units.size());
    out.units = units;

    EmbeddingStore embeddings;
    if (strategy_uses_embeddings(cfg.strategy)) {
      try {
        embeddings = embed_units(units);
      } catch (const std::exception& e) {
        fail("embed", e);
        return out;
      }
      out.embeddings = embeddings;
    }

    SelectionResult sel;
    try {
      sel = select(cfg, story, units, embeddings, intent, rec.warnings);
    } catch (const std::exception& e) {
      fail("select", e);
      return out;
    }
    rec.selected = static_cast<int>(sel.selected_ids.size());
    SelectionRecord selection;
    selection.story_id = story.story_id;
    selection.strategy = rec.strategy;
    selection.intent_id = cfg.intent_id;
    selection.selected_kp_ids = sel.selected_ids;
    if (strategy_uses_embeddings(cfg.strategy)) selection.kernel = json(cfg.kernel);
    selection.seed = cfg.seed;
    out.selection = std::move(selection);
    rec.selection_ref = "selections.jsonl";

    try {
      auto text = rewrite(sel.selected_ids, units, rec.warnings);
      out.summary =
          SummaryRecord{story.story_id, rec.strategy, cfg.intent_id, text, opts_.chat_model};
      rec.summary_ref = "summaries.jsonl";
    } catch (const std::exception& e) {
      fail("rewrite", e);
      return out;
    }
    return out;
  }

  struct AugmentedQuestions {
    std::vector<Question> questions;
    std::vector<std::string> warnings;
  };

  // Ten benchmark questions per article, parsed from a numbered list of
  // "question Answer: answer" pairs; provenance is always the one article the
  // question was generated from.
  AugmentedQuestions augment_questions(const StoryBundle& story) const {
    AugmentedQuestions out;
    std::vector<const Article*> order;
    for (const auto& a : story.articles) order.push_back(&a);
    std::sort(order.begin(), order.end(),
              [](const Article* a, const Article* b) { return a->index < b->index; });
    for (const Article* a : order) {
      std::vector<std::string> items;
      try {
        auto resp =
            complete(render_prompt(PromptTemplateId::augment_questions, {{"ARTICLE", a->text}}));
        items = parse_keypoints(resp.text);
      } catch (const ParseError& e) {
        out.warnings.push_back("augment_questions: article " + a->article_id + ": " + e.what());
        continue;
      }
      int emitted = 0;
      for (const auto& item : items) {
        auto split = item.find("Answer:");
        if (split == std::string::npos) continue;
        Question q;
        q.text = trim(item.substr(0, split));
        q.reference_answer = trim(item.substr(split + std::string("Answer:").size()));
        if (q.text.empty() || q.reference_answer.empty()) continue;
        q.story_id = story.story_id;
        q.source_article_ids = {a->article_id};
        q.question_id = story.story_id + "/" + a->article_id + "/q" + std::to_string(emitted);
        ++emitted;
        out.questions.push_back(std::move(q));
      }
      if (emitted < 10) {
        out.warnings.push_back("augment_questions: article " + a->article_id + ": " +
                               std::to_string(emitted) + " questions (expected 10)");
      }
    }
    return out;
  }

  struct AugmentedIntents {
    std::vector<UserIntent> intents;
    std::vector<std::string> warnings;
  };

  // Five candidate intents; each keeps the questions whose embedding scores
  // strictly above 0.6 against the intent embedding, and survives only with
  // at least 20 of them.
  AugmentedIntents augment_intents(const StoryBundle& story,
                                   const EmbeddingStore& question_embeddings) const {
    AugmentedIntents out;
    auto resp = complete(
        render_prompt(PromptTemplateId::generate_intents, {{"ARTICLES", concat_articles(story)}}));
    auto texts = parse_keypoints(resp.text);
    if (texts.size() != 5) {
      out.warnings.push_back("augment_intents: " + std::to_string(texts.size()) +
                             " intents generated (expected 5)");
    }
    require_embedder();
    auto vectors = embed_->embed(texts);
    for (std::size_t j = 0; j < texts.size(); ++j) {
      std::vector<std::string> relevant;
      for (const auto& q : story.questions) {
        double score = similarity(vectors[j], question_embeddings.get(q.question_id));
        if (score > 0.6) relevant.push_back(q.question_id);
      }
      if (relevant.size() >= 20) {
        UserIntent intent;
        intent.intent_id = story.story_id + "/intent" + std::to_string(j);
        intent.story_id = story.story_id;
        intent.text = texts[j];
        intent.relevant_question_ids = std::move(relevant);
        out.intents.push_back(std::move(intent));
      } else {
        out.warnings.push_back("augment_intents: intent " + std::to_string(j) + " filtered with " +
                               std::to_string(relevant.size()) + " relevant questions");
      }
    }
    if (out.intents.empty()) {
      out.warnings.push_back("augment_intents: no intents survived for story " + story.story_id);
    }
    return out;
  }

  ChatResponse complete(const std::string& prompt) const {
    ChatRequest req;
    req.model = opts_.chat_model;
    req.prompt = prompt;
    req.temperature = opts_.temperature;
    req.max_tokens = opts_.max_tokens;
    return chat_->complete(req);
  }

  static std::uint64_t story_seed(std::uint64_t seed, const std::string& story_id) {
    return SplitMix64(seed).split(story_id).state();
  }

 private:
  void require_embedder() const {
    if (!embed_) throw ValidationError("no embedding client configured");
  }

  static std::vector<std::string> unit_ids(const KeyPointSet& units) {
    std::vector<std::string> ids;
    ids.reserve(units.size());
    for (const auto& kp : units) ids.push_back(kp.kp_id);
    return ids;
  }

  KernelMatrix build_unit_kernel(const StrategyConfig& cfg, const KeyPointSet& units,
                                 const EmbeddingStore& embeddings,
                                 const std::optional<UserIntent>& intent) const {
    std::vector<std::vector<double>> vectors;
    vectors.reserve(units.size());
    for (const auto& kp : units) vectors.push_back(embeddings.get(kp.kp_id));
    auto kernel = build_kernel(vectors, unit_ids(units), cfg.kernel);
    kernel = psd_project(kernel, cfg.kernel.psd_epsilon);
    if (cfg.strategy == Strategy::dpp_relevance) {
      auto rel = relevance_scores(embed_text(intent->text), vectors);
      kernel = apply_relevance(kernel, rel);
    }
    return kernel;
  }

  SelectionResult select_via_llm(const StoryBundle& story, const KeyPointSet& units,
                                 const std::optional<UserIntent>& intent,
                                 std::vector<std::string>& warnings) const {
    std::string kp_block;
    for (const auto& kp : units) kp_block += "- " + kp.text + "\n";
    std::map<std::string, std::string> bindings{{"ALL KEYPOINTS", kp_block}};
    auto tpl = PromptTemplateId::llm_select;
    if (intent) {
      tpl = PromptTemplateId::llm_select_relevance;
      bindings["USER INTENT"] = intent->text;
    }

    std::string articles = concat_articles(story);
    std::size_t base = prompt_template(tpl).size() + kp_block.size() +
                       (intent ? intent->text.size() : 0);
    if (base + articles.size() > opts_.max_prompt_chars) {
      std::size_t budget = opts_.max_prompt_chars > base ? opts_.max_prompt_chars - base : 0;
      warnings.push_back("llm_select: articles truncated from " +
                         std::to_string(articles.size()) + " to " + std::to_string(budget) +
                         " chars");
      articles.resize(budget);
    }
    bindings["ARTICLES"] = std::move(articles);

    auto resp = complete(render_prompt(tpl, bindings));
    if (resp.truncated) warnings.push_back("llm_select: output truncated");
    auto parsed = parse_selected_keypoints(resp.text, units);
    if (parsed.dropped > 0) {
      warnings.push_back("llm_select: dropped " + std::to_string(parsed.dropped) +
                         " unmatched selections");
    }
    SelectionResult result;
    result.strategy = SelectionStrategy::llm;
    result.selected_ids = std::move(parsed.kp_ids);
    return result;
  }

  std::shared_ptr<ChatClient> chat_;
  std::shared_ptr<EmbeddingClient> embed_;
  PipelineOptions opts_;
};

struct BatchOptions {
  int max_in_flight = 4;
  // Expand query-focused strategies into one run per story intent when the
  // config does not already pin an intent.
  bool per_intent = false;
  // Polled before each job starts (e.g. bound to a SIGINT flag). Once it
  // returns true, unstarted jobs are recorded as "interrupted"; jobs already
  // running finish, and every artifact file is still written.
  std::function<bool()> should_abort;
};

struct BatchResult {
  std::vector<StoryArtifacts> artifacts;  // job order
  json manifest;
};

// Runs every job, then persists all artifacts in job order under out_dir:
// runs.jsonl, keypoints.jsonl, selections.jsonl, summaries.jsonl,
// embeddings.jsonl, manifest.json. Unit-level artifacts are written once per
// story even when several intents reuse the same extraction.
inline BatchResult run_batch(const Pipeline& pipe, const std::vector<StoryBundle>& stories,
                             const StrategyConfig& cfg, const std::filesystem::path& out_dir,
                             const BatchOptions& opts = {}) {
  cfg.validate();
  struct Job {
    std::size_t story;
    std::optional<std::string> intent_id;
  };
  std::vector<Job> jobs;
  std::vector<std::string> skipped;
  for (std::size_t i = 0; i < stories.size(); ++i) {
    if (opts.per_intent && strategy_allows_intent(cfg.strategy) && !cfg.intent_id) {
      if (stories[i].intents.empty()) {
        skipped.push_back(stories[i].story_id);
        continue;
      }
      for (const auto& intent : stories[i].intents) jobs.push_back({i, intent.intent_id});
    } else {
      jobs.push_back({i, cfg.intent_id});
    }
  }

  std::vector<StoryArtifacts> results(jobs.size());
  parallel_for_bounded(jobs.size(), opts.max_in_flight, [&](std::size_t idx) {
    if (opts.should_abort && opts.should_abort()) {
      RunRecord& rec = results[idx].record;
      rec.story_id = stories[jobs[idx].story].story_id;
      rec.strategy = strategy_name(cfg.strategy);
      rec.intent_id = jobs[idx].intent_id;
      rec.status = "interrupted";
      return;
    }
    StrategyConfig job_cfg = cfg;
    job_cfg.intent_id = jobs[idx].intent_id;
    results[idx] = pipe.run_story(stories[jobs[idx].story], job_cfg);
  });

  std::filesystem::create_directories(out_dir);
  std::vector<RunRecord> records;
  KeyPointSet all_units;
  std::vector<SelectionRecord> selections;
  std::vector<SummaryRecord> summaries;
  EmbeddingStore all_embeddings;
  std::set<std::string> units_written;
  for (const auto& art : results) {
    records.push_back(art.record);
    if (art.units && units_written.insert(art.record.story_id).second) {
      all_units.insert(all_units.end(), art.units->begin(), art.units->end());
      if (art.embeddings) {
        for (const auto& id : art.embeddings->ids()) {
          all_embeddings.add(id, art.embeddings->get(id));
        }
      }
    }
    if (art.selection) selections.push_back(*art.selection);
    if (art.summary) summaries.push_back(*art.summary);
  }
  store_runrecords(out_dir / "runs.jsonl", records);
  store_keypoints(out_dir / "keypoints.jsonl", all_units);
  store_selections(out_dir / "selections.jsonl", selections);
  store_summaries(out_dir / "summaries.jsonl", summaries);
  store_embeddings(out_dir / "embeddings.jsonl", all_embeddings);

  std::string story_bytes;
  for (const auto& s : stories) story_bytes += story_to_json(s).dump() + "\n";
  json manifest;
  manifest["config"] = cfg.to_json();
  manifest["seed"] = cfg.seed;
  manifest["input_hash"] = git_blob_sha1(story_bytes);
  manifest["per_intent"] = opts.per_intent;
  json status = json::array();
  for (std::size_t i = 0; i < jobs.size(); ++i) {
    json row;
    row["story_id"] = results[i].record.story_id;
    if (jobs[i].intent_id) row["intent_id"] = *jobs[i].intent_id;
    row["status"] = results[i].record.status;
    if (results[i].record.status == "failed") row["failed_stage"] = results[i].record.failed_stage;
    status.push_back(row);
  }
  for (const auto& id : skipped) {
    status.push_back(json{{"story_id", id}, {"status", "skipped_no_intents"}});
  }
  manifest["stories"] = status;
  write_file(out_dir / "manifest.json", manifest.dump(2) + "\n");

  BatchResult out;
  out.artifacts = std::move(results);
  out.manifest = std::move(manifest);
  return out;
}

}  // namespace dppsumm
