#pragma once

#include <atomic>
#include <chrono>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <set>
#include <shared_mutex>
#include <string>
#include <string_view>
#include <thread>
#include <unordered_map>
#include <utility>
#include <vector>

#include "dppsumm/corpus.hpp"
#include "dppsumm/errors.hpp"
#include "dppsumm/jsonl.hpp"
#include "dppsumm/prompts.hpp"
#include "dppsumm/util.hpp"

namespace dppsumm {

struct ChatRequest {
  std::string model;
  std::string prompt;
  double temperature = 0.7;
  int max_tokens = 4096;
  std::string cache_key_extra;  // e.g. seed tag, to force fresh samples

  void validate() const {
    if (prompt.empty()) throw ValidationError("chat request with empty prompt");
    if (temperature < 0.0) throw ValidationError("chat request with negative temperature");
    if (max_tokens <= 0) throw ValidationError("chat request with non-positive max_tokens");
  }
};

struct ChatResponse {
  std::string text;
  bool truncated = false;  // provider stopped at the token limit
};

struct JudgeVerdict {
  bool answerable = false;
  int coverage = 0;  // 0 or 1
  std::string raw;
};

class ChatBackend {
 public:
  virtual ~ChatBackend() = default;
  virtual ChatResponse complete(const ChatRequest& request) = 0;
  virtual std::string name() const = 0;
};

class EmbeddingBackend {
 public:
  virtual ~EmbeddingBackend() = default;
  virtual std::vector<std::vector<double>> embed(const std::string& model,
                                                 const std::vector<std::string>& texts) = 0;
  virtual std::string name() const = 0;
};

// Key-value cache with an optional append-only JSONL journal. The first value
// stored under a key wins; later puts for the same key are ignored, so a
// sampled response is replayed as-is on every re-run.
class CacheStore {
 public:
  CacheStore() = default;

  explicit CacheStore(std::filesystem::path path) : path_(std::move(path)) {
    if (std::filesystem::exists(*path_)) {
      for (const auto& j : load_jsonl(*path_)) {
        map_.emplace(require_field<std::string>(j, "key", "cache record"),
                     require_field<json>(j, "value", "cache record"));
      }
    }
  }

  std::optional<json> get(const std::string& key) const {
    std::shared_lock lock(mu_);
    auto it = map_.find(key);
    if (it == map_.end()) return std::nullopt;
    return it->second;
  }

  void put(const std::string& key, json value) {
    std::unique_lock lock(mu_);
    auto [it, inserted] = map_.emplace(key, std::move(value));
    if (!inserted) return;
    if (path_) append_jsonl(*path_, json{{"key", key}, {"value", it->second}});
  }

  std::size_t size() const {
    std::shared_lock lock(mu_);
    return map_.size();
  }

 private:
  mutable std::shared_mutex mu_;
  std::unordered_map<std::string, json> map_;
  std::optional<std::filesystem::path> path_;
};

struct RetryPolicy {
  int max_attempts = 5;
  std::chrono::milliseconds base_delay{1000};
  double factor = 2.0;

  std::chrono::milliseconds delay_for_attempt(int attempt) const {
    double ms = static_cast<double>(base_delay.count());
    for (int i = 1; i < attempt; ++i) ms *= factor;
    return std::chrono::milliseconds(static_cast<std::int64_t>(ms));
  }
};

using SleepFn = std::function<void(std::chrono::milliseconds)>;

inline void default_sleep(std::chrono::milliseconds d) { std::this_thread::sleep_for(d); }

namespace detail {

template <typename Fn>
auto with_retries(const RetryPolicy& policy, const SleepFn& sleep_fn, std::string_view what,
                  Fn&& fn) {
  for (int attempt = 1;; ++attempt) {
    try {
      return fn();
    } catch (const TransientError& e) {
      if (attempt >= policy.max_attempts) {
        throw TransientError(std::string(what) + ": exhausted " +
                             std::to_string(policy.max_attempts) +
                             " attempts; last error: " + e.what());
      }
      log_event("retry", {{"op", std::string(what)},
                          {"attempt", std::to_string(attempt)},
                          {"error", std::string(e.what())}});
      sleep_fn(policy.delay_for_attempt(attempt));
    }
  }
}

}  // namespace detail

// Chat client: cache lookup first, then the backend with exponential backoff
// on transient failures. Permanent (4xx-style) errors propagate immediately.
class ChatClient {
 public:
  ChatClient(std::shared_ptr<ChatBackend> backend, std::shared_ptr<CacheStore> cache,
             RetryPolicy retry = {}, SleepFn sleep_fn = default_sleep)
      : backend_(std::move(backend)),
        cache_(std::move(cache)),
        retry_(retry),
        sleep_(std::move(sleep_fn)) {}

  static std::string cache_key(const ChatRequest& request) {
    json j = {{"kind", "chat"},
              {"model", request.model},
              {"prompt", request.prompt},
              {"temperature", request.temperature},
              {"cache_key_extra", request.cache_key_extra}};
    return git_blob_sha1(j.dump());
  }

  ChatResponse complete(const ChatRequest& request) {
    request.validate();
    const std::string key = cache_key(request);
    if (cache_) {
      if (auto hit = cache_->get(key)) {
        return ChatResponse{hit->at("text").get<std::string>(), hit->value("truncated", false)};
      }
    }
    ChatResponse response = detail::with_retries(retry_, sleep_, "chat.complete",
                                                 [&] { return backend_->complete(request); });
    if (response.truncated) {
      log_event("chat_truncated", {{"model", request.model}});
    }
    if (cache_) cache_->put(key, json{{"text", response.text}, {"truncated", response.truncated}});
    return response;
  }

 private:
  std::shared_ptr<ChatBackend> backend_;
  std::shared_ptr<CacheStore> cache_;
  RetryPolicy retry_;
  SleepFn sleep_;
};

// Embedding client: per-text cache, uncached texts batched per service call.
class EmbeddingClient {
 public:
  EmbeddingClient(std::shared_ptr<EmbeddingBackend> backend, std::shared_ptr<CacheStore> cache,
                  std::string model, int batch_size = 32, RetryPolicy retry = {},
                  SleepFn sleep_fn = default_sleep)
      : backend_(std::move(backend)),
        cache_(std::move(cache)),
        model_(std::move(model)),
        batch_size_(batch_size),
        retry_(retry),
        sleep_(std::move(sleep_fn)) {
    if (batch_size_ < 1) throw ValidationError("embedding batch size must be at least 1");
  }

  std::string cache_key(const std::string& text) const {
    json j = {{"kind", "embed"}, {"model", model_}, {"text", text}};
    return git_blob_sha1(j.dump());
  }

  std::vector<std::vector<double>> embed(const std::vector<std::string>& texts) {
    if (texts.empty()) throw ValidationError("embed: no texts given");
    std::unordered_map<std::string, std::vector<double>> resolved;
    std::vector<std::string> pending;  // unique texts not in cache, input order
    std::set<std::string> seen;
    for (const auto& t : texts) {
      if (!seen.insert(t).second) continue;
      if (cache_) {
        if (auto hit = cache_->get(cache_key(t))) {
          resolved[t] = hit->at("vector").get<std::vector<double>>();
          continue;
        }
      }
      pending.push_back(t);
    }

    for (std::size_t start = 0; start < pending.size(); start += batch_size_) {
      std::size_t end = std::min(pending.size(), start + batch_size_);
      std::vector<std::string> batch(pending.begin() + start, pending.begin() + end);
      auto vectors = detail::with_retries(retry_, sleep_, "embeddings.embed",
                                          [&] { return backend_->embed(model_, batch); });
      if (vectors.size() != batch.size()) {
        throw TransientError("embed: service returned " + std::to_string(vectors.size()) +
                             " vectors for " + std::to_string(batch.size()) + " inputs");
      }
      for (std::size_t i = 0; i < batch.size(); ++i) {
        if (cache_) cache_->put(cache_key(batch[i]), json{{"vector", vectors[i]}});
        resolved[batch[i]] = std::move(vectors[i]);
      }
    }

    std::vector<std::vector<double>> out;
    out.reserve(texts.size());
    std::size_t dim = 0;
    for (const auto& t : texts) {
      const auto& v = resolved.at(t);
      if (v.empty()) throw ValidationError("embed: backend returned an empty vector");
      if (dim == 0) dim = v.size();
      if (v.size() != dim) {
        throw ValidationError("embed: backend returned mixed dimensions " + std::to_string(dim) +
                              " and " + std::to_string(v.size()));
      }
      out.push_back(v);
    }
    return out;
  }

 private:
  std::shared_ptr<EmbeddingBackend> backend_;
  std::shared_ptr<CacheStore> cache_;
  std::string model_;
  std::size_t batch_size_;
  RetryPolicy retry_;
  SleepFn sleep_;
};

// ---------------------------------------------------------------------------
// Response parsing

// Pulls list items out of model output: lines opening with "-", "*", the
// UTF-8 bullet, or "N.". Markers and surrounding whitespace are stripped,
// empty items dropped, order kept.
inline std::vector<std::string> parse_keypoints(const std::string& llm_output) {
  std::vector<std::string> items;
  for (const auto& raw_line : split_lines(llm_output)) {
    std::string line = trim(raw_line);
    std::string item;
    if (line.rfind("- ", 0) == 0 || line.rfind("* ", 0) == 0) {
      item = line.substr(2);
    } else if (line == "-" || line == "*") {
      continue;
    } else if (line.rfind("\xe2\x80\xa2", 0) == 0) {
      item = line.substr(3);
    } else if (!line.empty() && std::isdigit(static_cast<unsigned char>(line[0]))) {
      std::size_t p = 0;
      while (p < line.size() && std::isdigit(static_cast<unsigned char>(line[p]))) ++p;
      if (p < line.size() && line[p] == '.') {
        item = line.substr(p + 1);
      } else {
        continue;
      }
    } else if (!line.empty() && line[0] == '-') {
      item = line.substr(1);
    } else if (!line.empty() && line[0] == '*') {
      item = line.substr(1);
    } else {
      continue;
    }
    item = trim(item);
    if (!item.empty()) items.push_back(item);
  }
  if (items.empty()) {
    throw ParseError("no list items found in model output: " + llm_output);
  }
  return items;
}

namespace detail {

// Scans for the first balanced {...} region that parses as a JSON object.
inline std::optional<json> first_json_object(const std::string& text) {
  for (std::size_t start = 0; start < text.size(); ++start) {
    if (text[start] != '{') continue;
    int depth = 0;
    bool in_string = false;
    for (std::size_t i = start; i < text.size(); ++i) {
      char c = text[i];
      if (in_string) {
        if (c == '\\') {
          ++i;
        } else if (c == '"') {
          in_string = false;
        }
        continue;
      }
      if (c == '"') {
        in_string = true;
      } else if (c == '{') {
        ++depth;
      } else if (c == '}') {
        if (--depth == 0) {
          json parsed = json::parse(text.substr(start, i - start + 1), nullptr, false);
          if (!parsed.is_discarded() && parsed.is_object()) return parsed;
          break;  // balanced but unparseable; try the next '{'
        }
      }
    }
  }
  return std::nullopt;
}

}  // namespace detail

// Reads the judge's JSON verdict: "answerable" as true/false (bare or quoted)
// and "coverage" as 0/1 (bare or quoted). Anything else is a parse failure;
// callers treat those questions as unjudged rather than uncovered.
inline JudgeVerdict parse_judge(const std::string& llm_output) {
  auto obj = detail::first_json_object(llm_output);
  if (!obj) throw ParseError("judge output has no JSON object: " + llm_output);

  JudgeVerdict verdict;
  verdict.raw = llm_output;

  auto ans = obj->find("answerable");
  if (ans == obj->end()) throw ParseError("judge JSON missing 'answerable': " + llm_output);
  if (ans->is_boolean()) {
    verdict.answerable = ans->get<bool>();
  } else if (ans->is_string() && (*ans == "true" || *ans == "false")) {
    verdict.answerable = (*ans == "true");
  } else {
    throw ParseError("judge 'answerable' is not a boolean: " + llm_output);
  }

  auto cov = obj->find("coverage");
  if (cov == obj->end()) throw ParseError("judge JSON missing 'coverage': " + llm_output);
  if (cov->is_number_integer() && (cov->get<int>() == 0 || cov->get<int>() == 1)) {
    verdict.coverage = cov->get<int>();
  } else if (cov->is_string() && (*cov == "0" || *cov == "1")) {
    verdict.coverage = (*cov == "1") ? 1 : 0;
  } else {
    throw ParseError("judge 'coverage' is not 0 or 1: " + llm_output);
  }
  return verdict;
}

struct SelectedKeypointsParse {
  std::vector<std::string> kp_ids;  // distinct, first-mention order
  int dropped = 0;                  // items below the overlap threshold
};

// Matches echoed key points back to candidates: exact after lower-casing and
// whitespace collapse, else the highest-token-overlap candidate at >= 0.8.
inline SelectedKeypointsParse parse_selected_keypoints(const std::string& llm_output,
                                                       const KeyPointSet& candidates) {
  if (candidates.empty()) throw ValidationError("parse_selected_keypoints: no candidates");
  std::unordered_map<std::string, std::size_t> by_normalized;
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    by_normalized.emplace(to_lower(normalize_ws(candidates[i].text)), i);
  }

  SelectedKeypointsParse result;
  std::set<std::string> emitted;
  auto emit = [&](std::size_t candidate_index) {
    const auto& id = candidates[candidate_index].kp_id;
    if (emitted.insert(id).second) result.kp_ids.push_back(id);
  };

  for (const auto& item : parse_keypoints(llm_output)) {
    std::string norm = to_lower(normalize_ws(item));
    auto it = by_normalized.find(norm);
    if (it != by_normalized.end()) {
      emit(it->second);
      continue;
    }
    double best = -1.0;
    std::size_t best_index = 0;
    for (std::size_t i = 0; i < candidates.size(); ++i) {
      double overlap = token_overlap(item, candidates[i].text);
      if (overlap > best) {
        best = overlap;
        best_index = i;
      }
    }
    if (best >= 0.8) {
      emit(best_index);
    } else {
      ++result.dropped;
      log_event("selected_kp_dropped", {{"item", item}});
    }
  }
  if (result.kp_ids.empty()) {
    throw ParseError("no selected key points matched any candidate: " + llm_output);
  }
  return result;
}

// ---------------------------------------------------------------------------
// Deterministic mock backends for offline runs and CI.

namespace mock_detail {

inline std::vector<std::string> naive_sentences(const std::string& text) {
  std::vector<std::string> out;
  std::string cur;
  for (std::size_t i = 0; i < text.size(); ++i) {
    cur.push_back(text[i]);
    char c = text[i];
    if ((c == '.' || c == '!' || c == '?') && i + 1 < text.size() &&
        std::isspace(static_cast<unsigned char>(text[i + 1]))) {
      std::string s = trim(cur);
      if (!s.empty()) out.push_back(s);
      cur.clear();
    }
  }
  std::string s = trim(cur);
  if (!s.empty()) out.push_back(s);
  return out;
}

// Substring between two markers; to the end when `end_marker` is absent.
inline std::string slice_between(const std::string& text, const std::string& begin_marker,
                                 const std::string& end_marker) {
  auto b = text.find(begin_marker);
  if (b == std::string::npos) return {};
  b += begin_marker.size();
  auto e = end_marker.empty() ? std::string::npos : text.find(end_marker, b);
  return e == std::string::npos ? text.substr(b) : text.substr(b, e - b);
}

inline const std::set<std::string>& stopwords() {
  static const std::set<std::string> words = {
      "the", "and", "for", "are", "was", "with", "that", "this", "from",
      "has", "had", "have", "its", "his", "her", "their", "they", "were",
      "been", "will", "would", "into", "about", "after", "over", "under"};
  return words;
}

inline std::vector<std::string> content_words(const std::string& text) {
  std::vector<std::string> out;
  for (const auto& tok : alnum_tokens(text)) {
    if (tok.size() >= 3 && !stopwords().count(tok)) out.push_back(tok);
  }
  return out;
}

}  // namespace mock_detail

// Pure function of the prompt; the template is recognized by its fixed
// opening words. Behaviors are intentionally simple:
//   extraction      -> one bullet per sentence of the article
//   rewriting       -> selected points joined into a Report scaffold
//   naive summary   -> only the first two sentences (a deliberately weak
//                      baseline so coverage comparisons have a signal)
//   selection       -> echo every second candidate key point
//   judge           -> covered iff every content word of the reference
//                      answer appears in the summary
//   questions       -> 10 numbered Q/A pairs built from article sentences
//   intents         -> 5 numbered intents built from article words
class MockChatBackend : public ChatBackend {
 public:
  std::string name() const override { return "mock-chat"; }
  int calls() const { return calls_.load(); }

  ChatResponse complete(const ChatRequest& request) override {
    calls_.fetch_add(1);
    const std::string& p = request.prompt;
    if (p.rfind("Summarize all the content in this article", 0) == 0) {
      return {extract(p), false};
    }
    if (p.rfind("Read the following set of key points", 0) == 0) {
      if (p.find("```Selected Key Points:") != std::string::npos) return {select(p), false};
      return {rewrite(p), false};
    }
    if (p.rfind("Read the following news articles", 0) == 0) {
      return {naive(p), false};
    }
    if (p.rfind("Please act as an impartial judge", 0) == 0) {
      return {judge(p), false};
    }
    if (p.rfind("Write down 10 factual questions", 0) == 0) {
      return {questions(p), false};
    }
    if (p.rfind("Read the following set of news articles", 0) == 0) {
      return {intents(p), false};
    }
    throw PermanentError("mock chat backend: unrecognized prompt shape");
  }

 private:
  static std::string extract(const std::string& prompt) {
    std::string article = mock_detail::slice_between(prompt, "Article:\n", "");
    std::string out;
    for (const auto& s : mock_detail::naive_sentences(trim(article))) {
      out += "- " + s + "\n";
    }
    return out;
  }

  static std::string rewrite(const std::string& prompt) {
    std::string block =
        mock_detail::slice_between(prompt, "SELECTED KEY POINTS\n--------\n", "");
    std::vector<std::string> points;
    for (const auto& line : split_lines(block)) {
      std::string t = trim(line);
      if (t.rfind("- ", 0) == 0) t = trim(t.substr(2));
      if (!t.empty()) points.push_back(t);
    }
    return "```Report: " + join(points, " ") + "```";
  }

  static std::string naive(const std::string& prompt) {
    std::string articles = mock_detail::slice_between(prompt, "ARTICLES\n", "\n---------");
    // Concatenation headers are line-shaped, so they are dropped before
    // sentence splitting (they carry no terminator and would glue onto the
    // first real sentence otherwise).
    std::string body;
    for (const auto& line : split_lines(articles)) {
      if (trim(line).rfind("ARTICLE ", 0) == 0) continue;
      body += line;
      body += '\n';
    }
    auto sentences = mock_detail::naive_sentences(trim(body));
    std::vector<std::string> lead;
    for (std::size_t i = 0; i < sentences.size() && lead.size() < 2; ++i) {
      lead.push_back(sentences[i]);
    }
    return "```Report: " + join(lead, " ") + "```";
  }

  static std::string select(const std::string& prompt) {
    std::string block = mock_detail::slice_between(prompt, "KEY POINTS\n", "\n---------");
    std::vector<std::string> points;
    for (const auto& line : split_lines(block)) {
      std::string t = trim(line);
      if (t.rfind("- ", 0) == 0) t = trim(t.substr(2));
      if (!t.empty()) points.push_back(t);
    }
    std::string out = "```Selected Key Points:\n";
    for (std::size_t i = 0; i < points.size(); i += 2) out += "- " + points[i] + "\n";
    out += "```";
    return out;
  }

  static std::string judge(const std::string& prompt) {
    std::string summary = mock_detail::slice_between(
        prompt, "Model Generated Response:\n", "\n--------\nQuestion:");
    std::string reference = mock_detail::slice_between(prompt, "Reference Answer:\n", "");
    std::set<std::string> have;
    for (const auto& w : alnum_tokens(summary)) have.insert(w);
    bool covered = true;
    for (const auto& w : mock_detail::content_words(reference)) {
      if (!have.count(w)) {
        covered = false;
        break;
      }
    }
    return covered ? R"({"answerable": true, "coverage": 1})"
                   : R"({"answerable": false, "coverage": 0})";
  }

  static std::string questions(const std::string& prompt) {
    std::string article = mock_detail::slice_between(prompt, "Article:\n", "");
    auto sentences = mock_detail::naive_sentences(trim(article));
    std::string out;
    for (int i = 0; i < 10; ++i) {
      const auto& fact = sentences.empty() ? std::string("Nothing happened.")
                                           : sentences[i % sentences.size()];
      out += std::to_string(i + 1) + ". What does statement " + std::to_string(i + 1) +
             " of the article report? Answer: " + fact + "\n";
    }
    return out;
  }

  static std::string intents(const std::string& prompt) {
    std::string articles = mock_detail::slice_between(prompt, "Articles:\n", "");
    auto words = mock_detail::content_words(articles);
    std::string out;
    for (int i = 0; i < 5; ++i) {
      const auto& topic =
          words.empty() ? std::string("events") : words[static_cast<std::size_t>(i) % words.size()];
      out += std::to_string(i + 1) + ". Focus on details about " + topic + ".\n";
    }
    return out;
  }

  std::atomic<int> calls_{0};
};

// Hashed character-bigram frequencies over the lowercased text, 128 wide,
// with a constant bias slot so no vector is ever zero; L2-normalized.
// Deterministic, so identical texts always embed identically.
class MockEmbeddingBackend : public EmbeddingBackend {
 public:
  std::string name() const override { return "mock-embed"; }
  int calls() const { return calls_.load(); }

  std::vector<std::vector<double>> embed(const std::string& /*model*/,
                                         const std::vector<std::string>& texts) override {
    calls_.fetch_add(1);
    std::vector<std::vector<double>> out;
    out.reserve(texts.size());
    for (const auto& t : texts) out.push_back(embed_one(t));
    return out;
  }

  static std::vector<double> embed_one(const std::string& text) {
    std::vector<double> v(128, 0.0);
    std::string lower = to_lower(text);
    for (std::size_t i = 0; i + 1 < lower.size(); ++i) {
      auto a = static_cast<unsigned char>(lower[i]);
      auto b = static_cast<unsigned char>(lower[i + 1]);
      v[(37u * a + b) % 127u] += 1.0;
    }
    v[127] = 0.5;
    double norm = 0.0;
    for (double x : v) norm += x * x;
    norm = std::sqrt(norm);
    for (double& x : v) x /= norm;
    return v;
  }

 private:
  std::atomic<int> calls_{0};
};

}  // namespace dppsumm
