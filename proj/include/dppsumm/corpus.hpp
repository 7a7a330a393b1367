#pragma once

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <set>
#include <string>
#include <tuple>
#include <unordered_map>
#include <unordered_set>
#include <utility>
#include <vector>

#include "dppsumm/errors.hpp"
#include "dppsumm/jsonl.hpp"
#include "dppsumm/util.hpp"

namespace dppsumm {

struct Article {
  std::string article_id;
  int index = 0;  // 0-based position within the story's ordered list
  std::string title;
  std::string text;
};

struct Question {
  std::string question_id;
  std::string story_id;
  std::vector<std::string> source_article_ids;
  std::string text;
  std::string reference_answer;
};

struct UserIntent {
  std::string intent_id;
  std::string story_id;
  std::string text;
  std::vector<std::string> relevant_question_ids;
};

struct StoryBundle {
  std::string story_id;
  std::vector<Article> articles;
  std::vector<Question> questions;
  std::vector<UserIntent> intents;

  const Article* find_article(const std::string& article_id) const {
    for (const auto& a : articles) {
      if (a.article_id == article_id) return &a;
    }
    return nullptr;
  }
};

struct KeyPoint {
  std::string kp_id;
  std::string story_id;
  std::string article_id;
  int ordinal = 0;  // position in the extraction list for its article
  std::string text;
};

using KeyPointSet = std::vector<KeyPoint>;

inline std::string derive_kp_id(const std::string& story_id, const std::string& article_id,
                                int ordinal) {
  return story_id + "/" + article_id + "/kp" + std::to_string(ordinal);
}

// Story-level validation. Enforced once at load; bundles are immutable after.
inline void validate_story(const StoryBundle& story) {
  const std::string ctx = "story '" + story.story_id + "'";
  if (story.story_id.empty()) throw ValidationError("story with empty story_id");
  if (story.articles.empty()) throw ValidationError(ctx + ": has no articles");

  std::set<int> indices;
  std::unordered_set<std::string> article_ids;
  for (const auto& a : story.articles) {
    if (a.article_id.empty()) throw ValidationError(ctx + ": article with empty article_id");
    if (a.text.empty()) {
      throw ValidationError(ctx + ": article '" + a.article_id + "' has empty text");
    }
    if (!article_ids.insert(a.article_id).second) {
      throw ValidationError(ctx + ": duplicate article_id '" + a.article_id + "'");
    }
    if (!indices.insert(a.index).second) {
      throw ValidationError(ctx + ": duplicate article index " + std::to_string(a.index));
    }
  }
  // Indices must be exactly 0..n-1.
  int expected = 0;
  for (int idx : indices) {
    if (idx != expected) {
      throw ValidationError(ctx + ": article indices not contiguous from 0 (saw " +
                            std::to_string(idx) + ", expected " + std::to_string(expected) + ")");
    }
    ++expected;
  }

  std::unordered_set<std::string> question_ids;
  for (const auto& q : story.questions) {
    if (q.question_id.empty()) throw ValidationError(ctx + ": question with empty question_id");
    if (!question_ids.insert(q.question_id).second) {
      throw ValidationError(ctx + ": duplicate question_id '" + q.question_id + "'");
    }
    if (q.source_article_ids.empty()) {
      throw ValidationError(ctx + ": question '" + q.question_id + "' has no source articles");
    }
    for (const auto& aid : q.source_article_ids) {
      if (!article_ids.count(aid)) {
        throw ValidationError(ctx + ": question '" + q.question_id +
                              "' references unknown article '" + aid + "'");
      }
    }
  }

  std::unordered_set<std::string> intent_ids;
  for (const auto& in : story.intents) {
    if (in.intent_id.empty()) throw ValidationError(ctx + ": intent with empty intent_id");
    if (!intent_ids.insert(in.intent_id).second) {
      throw ValidationError(ctx + ": duplicate intent_id '" + in.intent_id + "'");
    }
    for (const auto& qid : in.relevant_question_ids) {
      if (!question_ids.count(qid)) {
        throw ValidationError(ctx + ": intent '" + in.intent_id +
                              "' references unknown question '" + qid + "'");
      }
    }
  }
}

inline json story_to_json(const StoryBundle& story) {
  json articles = json::array();
  for (const auto& a : story.articles) {
    articles.push_back({{"article_id", a.article_id},
                        {"index", a.index},
                        {"title", a.title},
                        {"text", a.text}});
  }
  json questions = json::array();
  for (const auto& q : story.questions) {
    questions.push_back({{"question_id", q.question_id},
                         {"source_article_ids", q.source_article_ids},
                         {"text", q.text},
                         {"reference_answer", q.reference_answer}});
  }
  json intents = json::array();
  for (const auto& in : story.intents) {
    intents.push_back({{"intent_id", in.intent_id},
                       {"text", in.text},
                       {"relevant_question_ids", in.relevant_question_ids}});
  }
  return {{"story_id", story.story_id},
          {"articles", std::move(articles)},
          {"questions", std::move(questions)},
          {"intents", std::move(intents)}};
}

inline StoryBundle story_from_json(const json& j) {
  StoryBundle story;
  story.story_id = require_field<std::string>(j, "story_id", "story record");
  const std::string ctx = "story '" + story.story_id + "'";
  for (const auto& aj : require_field<json>(j, "articles", ctx)) {
    Article a;
    a.article_id = require_field<std::string>(aj, "article_id", ctx + " article");
    a.index = require_field<int>(aj, "index", ctx + " article '" + a.article_id + "'");
    a.title = aj.value("title", std::string{});
    a.text = require_field<std::string>(aj, "text", ctx + " article '" + a.article_id + "'");
    story.articles.push_back(std::move(a));
  }
  if (j.contains("questions")) {
    for (const auto& qj : j.at("questions")) {
      Question q;
      q.question_id = require_field<std::string>(qj, "question_id", ctx + " question");
      q.story_id = story.story_id;
      q.source_article_ids = require_field<std::vector<std::string>>(
          qj, "source_article_ids", ctx + " question '" + q.question_id + "'");
      q.text = require_field<std::string>(qj, "text", ctx + " question '" + q.question_id + "'");
      q.reference_answer = require_field<std::string>(
          qj, "reference_answer", ctx + " question '" + q.question_id + "'");
      story.questions.push_back(std::move(q));
    }
  }
  if (j.contains("intents")) {
    for (const auto& ij : j.at("intents")) {
      UserIntent in;
      in.intent_id = require_field<std::string>(ij, "intent_id", ctx + " intent");
      in.story_id = story.story_id;
      in.text = require_field<std::string>(ij, "text", ctx + " intent '" + in.intent_id + "'");
      if (ij.contains("relevant_question_ids")) {
        in.relevant_question_ids =
            ij.at("relevant_question_ids").get<std::vector<std::string>>();
      }
      story.intents.push_back(std::move(in));
    }
  }
  return story;
}

// One story object per line, file order preserved, all invariants enforced.
inline std::vector<StoryBundle> load_stories(const std::filesystem::path& path) {
  std::vector<StoryBundle> stories;
  std::unordered_set<std::string> seen_ids;
  for (const auto& j : load_jsonl(path)) {
    StoryBundle story = story_from_json(j);
    validate_story(story);
    if (!seen_ids.insert(story.story_id).second) {
      throw ValidationError("duplicate story_id '" + story.story_id + "' in " + path.string());
    }
    stories.push_back(std::move(story));
  }
  return stories;
}

inline void store_stories(const std::filesystem::path& path,
                          const std::vector<StoryBundle>& stories) {
  std::vector<json> records;
  records.reserve(stories.size());
  for (const auto& s : stories) {
    validate_story(s);
    records.push_back(story_to_json(s));
  }
  store_jsonl(path, records);
}

// Naive sentence splitter: a unit ends at '.', '!' or '?' followed by
// whitespace. Known limitation: abbreviations ("Dr.") also split. Good enough
// as a deterministic unit source for the sentence-selection baseline.
inline KeyPointSet segment_sentences(const Article& article, const std::string& story_id) {
  KeyPointSet units;
  std::string cur;
  const std::string& text = article.text;
  auto flush = [&] {
    std::string unit = trim(cur);
    cur.clear();
    if (unit.empty()) return;
    KeyPoint kp;
    kp.story_id = story_id;
    kp.article_id = article.article_id;
    kp.ordinal = static_cast<int>(units.size());
    kp.kp_id = derive_kp_id(story_id, article.article_id, kp.ordinal);
    kp.text = std::move(unit);
    units.push_back(std::move(kp));
  };
  for (std::size_t i = 0; i < text.size(); ++i) {
    cur.push_back(text[i]);
    char c = text[i];
    if ((c == '.' || c == '!' || c == '?') && i + 1 < text.size() &&
        std::isspace(static_cast<unsigned char>(text[i + 1]))) {
      flush();
    }
  }
  flush();
  return units;
}

inline void validate_keypoints(const KeyPointSet& kps) {
  // Article ids are only unique within their story, so the ordinal slot is
  // scoped by story as well.
  std::set<std::tuple<std::string, std::string, int>> seen;
  std::unordered_set<std::string> ids;
  for (const auto& kp : kps) {
    if (kp.text.empty()) {
      throw ValidationError("key point '" + kp.kp_id + "' has empty text");
    }
    if (kp.kp_id.empty()) throw ValidationError("key point with empty kp_id");
    if (!ids.insert(kp.kp_id).second) {
      throw ValidationError("duplicate kp_id '" + kp.kp_id + "'");
    }
    if (!seen.insert({kp.story_id, kp.article_id, kp.ordinal}).second) {
      throw ValidationError("duplicate (story_id, article_id, ordinal) = ('" + kp.story_id +
                            "', '" + kp.article_id + "', " + std::to_string(kp.ordinal) + ")");
    }
  }
}

inline void store_keypoints(const std::filesystem::path& path, const KeyPointSet& kps) {
  validate_keypoints(kps);
  std::vector<json> records;
  records.reserve(kps.size());
  for (const auto& kp : kps) {
    records.push_back({{"kp_id", kp.kp_id},
                       {"story_id", kp.story_id},
                       {"article_id", kp.article_id},
                       {"ordinal", kp.ordinal},
                       {"text", kp.text}});
  }
  store_jsonl(path, records);
}

inline KeyPointSet load_keypoints(const std::filesystem::path& path) {
  KeyPointSet kps;
  for (const auto& j : load_jsonl(path)) {
    KeyPoint kp;
    kp.kp_id = require_field<std::string>(j, "kp_id", "key point record");
    const std::string ctx = "key point '" + kp.kp_id + "'";
    kp.story_id = require_field<std::string>(j, "story_id", ctx);
    kp.article_id = require_field<std::string>(j, "article_id", ctx);
    kp.ordinal = require_field<int>(j, "ordinal", ctx);
    kp.text = require_field<std::string>(j, "text", ctx);
    kps.push_back(std::move(kp));
  }
  validate_keypoints(kps);
  return kps;
}

// Ordered map of id -> embedding vector. All vectors share one dimension and
// every entry is finite; insertion order is preserved for deterministic writes.
class EmbeddingStore {
 public:
  void add(const std::string& id, std::vector<double> vec) {
    if (id.empty()) throw ValidationError("embedding with empty id");
    if (vec.empty()) throw ValidationError("embedding '" + id + "' has empty vector");
    if (index_.count(id)) throw ValidationError("duplicate embedding id '" + id + "'");
    if (dim_ == 0) {
      dim_ = vec.size();
    } else if (vec.size() != dim_) {
      throw ValidationError("embedding '" + id + "' has dimension " +
                            std::to_string(vec.size()) + ", store has " + std::to_string(dim_));
    }
    for (double v : vec) {
      if (!std::isfinite(v)) {
        throw ValidationError("embedding '" + id + "' has non-finite entry");
      }
    }
    index_[id] = ids_.size();
    ids_.push_back(id);
    vectors_.push_back(std::move(vec));
  }

  bool has(const std::string& id) const { return index_.count(id) != 0; }

  const std::vector<double>& get(const std::string& id) const {
    auto it = index_.find(id);
    if (it == index_.end()) throw ValidationError("no embedding for id '" + id + "'");
    return vectors_[it->second];
  }

  std::size_t size() const { return ids_.size(); }
  std::size_t dim() const { return dim_; }
  const std::vector<std::string>& ids() const { return ids_; }

 private:
  std::size_t dim_ = 0;
  std::vector<std::string> ids_;
  std::vector<std::vector<double>> vectors_;
  std::unordered_map<std::string, std::size_t> index_;
};

inline void store_embeddings(const std::filesystem::path& path, const EmbeddingStore& store) {
  std::vector<json> records;
  records.reserve(store.size());
  for (const auto& id : store.ids()) {
    records.push_back({{"id", id}, {"vector", store.get(id)}});
  }
  store_jsonl(path, records);
}

inline EmbeddingStore load_embeddings(const std::filesystem::path& path) {
  EmbeddingStore store;
  for (const auto& j : load_jsonl(path)) {
    auto id = require_field<std::string>(j, "id", "embedding record");
    auto vec = require_field<std::vector<double>>(j, "vector", "embedding '" + id + "'");
    store.add(id, std::move(vec));
  }
  return store;
}

struct SelectionRecord {
  std::string story_id;
  std::string strategy;
  std::optional<std::string> intent_id;
  std::vector<std::string> selected_kp_ids;
  std::optional<json> kernel;  // kernel config snapshot, absent for kernel-free strategies
  std::uint64_t seed = 0;
};

inline void store_selections(const std::filesystem::path& path,
                             const std::vector<SelectionRecord>& records) {
  std::vector<json> out;
  out.reserve(records.size());
  for (const auto& r : records) {
    json j = {{"story_id", r.story_id},
              {"strategy", r.strategy},
              {"selected_kp_ids", r.selected_kp_ids},
              {"seed", r.seed}};
    if (r.intent_id) j["intent_id"] = *r.intent_id;
    if (r.kernel) j["kernel"] = *r.kernel;
    out.push_back(std::move(j));
  }
  store_jsonl(path, out);
}

inline std::vector<SelectionRecord> load_selections(const std::filesystem::path& path) {
  std::vector<SelectionRecord> records;
  for (const auto& j : load_jsonl(path)) {
    SelectionRecord r;
    r.story_id = require_field<std::string>(j, "story_id", "selection record");
    const std::string ctx = "selection for story '" + r.story_id + "'";
    r.strategy = require_field<std::string>(j, "strategy", ctx);
    r.selected_kp_ids = require_field<std::vector<std::string>>(j, "selected_kp_ids", ctx);
    r.seed = require_field<std::uint64_t>(j, "seed", ctx);
    if (j.contains("intent_id")) r.intent_id = j.at("intent_id").get<std::string>();
    if (j.contains("kernel")) r.kernel = j.at("kernel");
    records.push_back(std::move(r));
  }
  return records;
}

struct SummaryRecord {
  std::string story_id;
  std::string strategy;
  std::optional<std::string> intent_id;
  std::string summary_text;
  std::string model;
};

inline void store_summaries(const std::filesystem::path& path,
                            const std::vector<SummaryRecord>& records) {
  std::vector<json> out;
  out.reserve(records.size());
  for (const auto& r : records) {
    json j = {{"story_id", r.story_id},
              {"strategy", r.strategy},
              {"summary_text", r.summary_text},
              {"model", r.model}};
    if (r.intent_id) j["intent_id"] = *r.intent_id;
    out.push_back(std::move(j));
  }
  store_jsonl(path, out);
}

inline std::vector<SummaryRecord> load_summaries(const std::filesystem::path& path) {
  std::vector<SummaryRecord> records;
  for (const auto& j : load_jsonl(path)) {
    SummaryRecord r;
    r.story_id = require_field<std::string>(j, "story_id", "summary record");
    const std::string ctx = "summary for story '" + r.story_id + "'";
    r.strategy = require_field<std::string>(j, "strategy", ctx);
    r.summary_text = require_field<std::string>(j, "summary_text", ctx);
    r.model = require_field<std::string>(j, "model", ctx);
    if (j.contains("intent_id")) r.intent_id = j.at("intent_id").get<std::string>();
    records.push_back(std::move(r));
  }
  return records;
}

// Persisted per-story pipeline outcome. Wall-clock timing is logged to stderr
// only; keeping it out of the record keeps warm-cache re-runs byte-identical.
struct RunRecord {
  std::string story_id;
  std::string strategy;
  std::optional<std::string> intent_id;
  std::string status;               // "ok", "failed", or "interrupted"
  std::string failed_stage;         // set when status == "failed"
  int extracted = 0;
  int selected = 0;
  std::string selection_ref;        // artifact file holding the matching selection
  std::string summary_ref;          // artifact file holding the matching summary
  std::vector<std::string> warnings;
};

inline void store_runrecords(const std::filesystem::path& path,
                             const std::vector<RunRecord>& records) {
  std::vector<json> out;
  out.reserve(records.size());
  for (const auto& r : records) {
    if (r.selected > r.extracted) {
      throw ValidationError("run record for story '" + r.story_id +
                            "': selected exceeds extracted");
    }
    json j = {{"story_id", r.story_id},
              {"strategy", r.strategy},
              {"status", r.status},
              {"extracted", r.extracted},
              {"selected", r.selected},
              {"selection_ref", r.selection_ref},
              {"summary_ref", r.summary_ref},
              {"warnings", r.warnings}};
    if (r.intent_id) j["intent_id"] = *r.intent_id;
    if (!r.failed_stage.empty()) j["failed_stage"] = r.failed_stage;
    out.push_back(std::move(j));
  }
  store_jsonl(path, out);
}

inline std::vector<RunRecord> load_runrecords(const std::filesystem::path& path) {
  std::vector<RunRecord> records;
  for (const auto& j : load_jsonl(path)) {
    RunRecord r;
    r.story_id = require_field<std::string>(j, "story_id", "run record");
    const std::string ctx = "run record for story '" + r.story_id + "'";
    r.strategy = require_field<std::string>(j, "strategy", ctx);
    r.status = require_field<std::string>(j, "status", ctx);
    r.extracted = require_field<int>(j, "extracted", ctx);
    r.selected = require_field<int>(j, "selected", ctx);
    r.selection_ref = require_field<std::string>(j, "selection_ref", ctx);
    r.summary_ref = require_field<std::string>(j, "summary_ref", ctx);
    r.warnings = require_field<std::vector<std::string>>(j, "warnings", ctx);
    if (j.contains("intent_id")) r.intent_id = j.at("intent_id").get<std::string>();
    if (j.contains("failed_stage")) r.failed_stage = j.at("failed_stage").get<std::string>();
    if (r.selected > r.extracted) throw ValidationError(ctx + ": selected exceeds extracted");
    records.push_back(std::move(r));
  }
  return records;
}

}  // namespace dppsumm
