#pragma once

// Coverage evaluation: judge each benchmark question against a summary with
// the judge prompt, aggregate per story / position / source, test strategy
// differences for significance, and emit report data files.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <limits>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "dppsumm/corpus.hpp"
#include "dppsumm/errors.hpp"
#include "dppsumm/gateway.hpp"
#include "dppsumm/prompts.hpp"
#include "dppsumm/util.hpp"

namespace dppsumm {

struct CoverageVerdictRecord {
  std::string story_id;
  std::string question_id;
  std::string strategy;
  std::optional<std::string> intent_id;
  bool answerable = false;
  bool correct = false;
  bool covered = false;  // answerable AND correct
  bool judged = false;   // false when the judge output could not be parsed

  void validate() const {
    if (covered != (answerable && correct)) {
      throw ValidationError("verdict " + question_id + ": covered must equal answerable AND correct");
    }
    if (covered && !answerable) {
      throw ValidationError("verdict " + question_id + ": covered implies answerable");
    }
  }
};

inline void store_verdicts(const std::filesystem::path& path,
                           const std::vector<CoverageVerdictRecord>& verdicts) {
  std::vector<json> records;
  records.reserve(verdicts.size());
  for (const auto& v : verdicts) {
    v.validate();
    json j = {{"story_id", v.story_id},   {"question_id", v.question_id},
              {"strategy", v.strategy},   {"answerable", v.answerable},
              {"correct", v.correct},     {"covered", v.covered},
              {"judged", v.judged}};
    if (v.intent_id) j["intent_id"] = *v.intent_id;
    records.push_back(std::move(j));
  }
  store_jsonl(path, records);
}

inline std::vector<CoverageVerdictRecord> load_verdicts(const std::filesystem::path& path) {
  std::vector<CoverageVerdictRecord> out;
  for (const auto& j : load_jsonl(path)) {
    CoverageVerdictRecord v;
    v.story_id = require_field<std::string>(j, "story_id", "verdict");
    v.question_id = require_field<std::string>(j, "question_id", "verdict");
    v.strategy = require_field<std::string>(j, "strategy", "verdict");
    if (j.contains("intent_id")) v.intent_id = j.at("intent_id").get<std::string>();
    v.answerable = require_field<bool>(j, "answerable", "verdict");
    v.correct = require_field<bool>(j, "correct", "verdict");
    v.covered = require_field<bool>(j, "covered", "verdict");
    v.judged = require_field<bool>(j, "judged", "verdict");
    v.validate();
    out.push_back(std::move(v));
  }
  return out;
}

// One judge model per report keeps cross-strategy comparisons internally
// consistent; the Judge object pins the model for everything it scores.
class Judge {
 public:
  Judge(std::shared_ptr<ChatClient> chat, std::string model, double temperature = 0.7,
        int max_tokens = 4096)
      : chat_(std::move(chat)),
        model_(std::move(model)),
        temperature_(temperature),
        max_tokens_(max_tokens) {
    if (!chat_) throw ValidationError("judge requires a chat client");
  }

  const std::string& model() const { return model_; }

  // An unparseable judge response yields judged=false: the question is
  // excluded from every denominator rather than counted as uncovered.
  CoverageVerdictRecord judge_question(const std::string& summary, const Question& question,
                                       const std::string& strategy,
                                       const std::optional<std::string>& intent_id) const {
    CoverageVerdictRecord rec;
    rec.story_id = question.story_id;
    rec.question_id = question.question_id;
    rec.strategy = strategy;
    rec.intent_id = intent_id;
    ChatRequest req;
    req.model = model_;
    req.prompt = render_prompt(PromptTemplateId::judge,
                               {{"SUMMARY", summary},
                                {"QUESTION", question.text},
                                {"REFERENCE ANSWER", question.reference_answer}});
    req.temperature = temperature_;
    req.max_tokens = max_tokens_;
    auto resp = chat_->complete(req);
    try {
      auto verdict = parse_judge(resp.text);
      rec.judged = true;
      rec.answerable = verdict.answerable;
      rec.correct = verdict.coverage == 1;
      rec.covered = rec.answerable && rec.correct;
    } catch (const ParseError&) {
      rec.judged = false;
      log_event("judge_unparseable", {{"question_id", question.question_id}});
    }
    rec.validate();
    return rec;
  }

 private:
  std::shared_ptr<ChatClient> chat_;
  std::string model_;
  double temperature_;
  int max_tokens_;
};

// Query-focused runs are scored only on the questions relevant to their
// intent; intentless runs are scored on every question.
inline std::vector<Question> questions_for_run(const StoryBundle& story,
                                               const std::optional<std::string>& intent_id) {
  if (!intent_id) return story.questions;
  auto it = std::find_if(story.intents.begin(), story.intents.end(),
                         [&](const UserIntent& i) { return i.intent_id == *intent_id; });
  if (it == story.intents.end()) {
    throw ValidationError("intent '" + *intent_id + "' not found in story " + story.story_id);
  }
  std::set<std::string> keep(it->relevant_question_ids.begin(), it->relevant_question_ids.end());
  std::vector<Question> out;
  for (const auto& q : story.questions) {
    if (keep.count(q.question_id)) out.push_back(q);
  }
  return out;
}

inline double story_coverage(const std::vector<CoverageVerdictRecord>& records) {
  int judged = 0, covered = 0;
  for (const auto& v : records) {
    v.validate();
    if (!v.judged) continue;
    ++judged;
    if (v.covered) ++covered;
  }
  if (judged == 0) throw ValidationError("story_coverage: no judged records");
  return static_cast<double>(covered) / static_cast<double>(judged);
}

struct PositionalCoverage {
  std::map<int, double> coverage;  // article index -> covered / judged
  std::map<int, int> judged;
  std::map<int, int> covered;
  int excluded_multi_provenance = 0;
};

// Pools judged verdicts by the index of the question's single source article.
// Questions with multi-article provenance cannot be placed and are excluded.
inline PositionalCoverage positional_coverage(const std::vector<CoverageVerdictRecord>& records,
                                              const std::vector<StoryBundle>& stories) {
  struct Slot {
    int index;
    bool singleton;
  };
  std::map<std::string, Slot> slots;  // question_id -> article index
  for (const auto& story : stories) {
    for (const auto& q : story.questions) {
      if (q.source_article_ids.size() != 1) {
        slots[q.question_id] = {0, false};
        continue;
      }
      const Article* a = story.find_article(q.source_article_ids[0]);
      if (!a) {
        throw ValidationError("question " + q.question_id + " references unknown article '" +
                              q.source_article_ids[0] + "'");
      }
      slots[q.question_id] = {a->index, true};
    }
  }

  PositionalCoverage out;
  for (const auto& v : records) {
    if (!v.judged) continue;
    auto it = slots.find(v.question_id);
    if (it == slots.end()) {
      throw ValidationError("verdict references unknown question '" + v.question_id + "'");
    }
    if (!it->second.singleton) {
      ++out.excluded_multi_provenance;
      continue;
    }
    ++out.judged[it->second.index];
    if (v.covered) ++out.covered[it->second.index];
  }
  for (const auto& [index, judged] : out.judged) {
    out.coverage[index] = static_cast<double>(out.covered[index]) / static_cast<double>(judged);
  }
  if (out.excluded_multi_provenance > 0) {
    log_event("positional_coverage_excluded",
              {{"multi_provenance", std::to_string(out.excluded_multi_provenance)}});
  }
  return out;
}

// Fraction of the story's articles contributing at least one selected unit.
inline double selection_source_coverage(const SelectionRecord& selection, const KeyPointSet& kps,
                                        const StoryBundle& story) {
  if (story.articles.empty()) throw ValidationError("selection_source_coverage: story has no articles");
  std::map<std::string, std::string> article_of;
  for (const auto& kp : kps) article_of[kp.kp_id] = kp.article_id;
  std::set<std::string> touched;
  for (const auto& id : selection.selected_kp_ids) {
    auto it = article_of.find(id);
    if (it == article_of.end()) {
      throw ValidationError("selection references unknown unit '" + id + "'");
    }
    touched.insert(it->second);
  }
  return static_cast<double>(touched.size()) / static_cast<double>(story.articles.size());
}

inline int summary_length_words(const std::string& summary) {
  std::istringstream in(summary);
  std::string word;
  int count = 0;
  while (in >> word) ++count;
  return count;
}

namespace ttest_detail {

inline double log_beta(double a, double b) {
  return std::lgamma(a) + std::lgamma(b) - std::lgamma(a + b);
}

// Continued fraction for the incomplete beta (Lentz's method).
inline double beta_cf(double a, double b, double x) {
  const double tiny = 1e-300;
  const double eps = 1e-15;
  double qab = a + b, qap = a + 1.0, qam = a - 1.0;
  double c = 1.0;
  double d = 1.0 - qab * x / qap;
  if (std::fabs(d) < tiny) d = tiny;
  d = 1.0 / d;
  double h = d;
  for (int m = 1; m <= 500; ++m) {
    int m2 = 2 * m;
    double aa = m * (b - m) * x / ((qam + m2) * (a + m2));
    d = 1.0 + aa * d;
    if (std::fabs(d) < tiny) d = tiny;
    c = 1.0 + aa / c;
    if (std::fabs(c) < tiny) c = tiny;
    d = 1.0 / d;
    h *= d * c;
    aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
    d = 1.0 + aa * d;
    if (std::fabs(d) < tiny) d = tiny;
    c = 1.0 + aa / c;
    if (std::fabs(c) < tiny) c = tiny;
    d = 1.0 / d;
    double del = d * c;
    h *= del;
    if (std::fabs(del - 1.0) < eps) return h;
  }
  throw NumericError("incomplete beta continued fraction did not converge");
}

inline double reg_incomplete_beta(double a, double b, double x) {
  if (x <= 0.0) return 0.0;
  if (x >= 1.0) return 1.0;
  double bt = std::exp(-log_beta(a, b) + a * std::log(x) + b * std::log1p(-x));
  if (x < (a + 1.0) / (a + b + 2.0)) return bt * beta_cf(a, b, x) / a;
  return 1.0 - bt * beta_cf(b, a, 1.0 - x) / b;
}

}  // namespace ttest_detail

struct TTestResult {
  double t = 0.0;
  double df = 0.0;
  double p = 1.0;
};

// Unequal-variance statistic with Welch-Satterthwaite degrees of freedom;
// the two-tailed p-value comes from the Student-t CDF expressed through the
// regularized incomplete beta.
inline TTestResult welch_ttest(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.size() < 2 || b.size() < 2) {
    throw ValidationError("welch_ttest: each sample needs at least 2 values");
  }
  auto stats = [](const std::vector<double>& xs) {
    double mean = 0.0;
    for (double x : xs) mean += x;
    mean /= static_cast<double>(xs.size());
    double var = 0.0;
    for (double x : xs) var += (x - mean) * (x - mean);
    var /= static_cast<double>(xs.size() - 1);
    return std::pair<double, double>(mean, var);
  };
  auto [ma, va] = stats(a);
  auto [mb, vb] = stats(b);
  double na = static_cast<double>(a.size());
  double nb = static_cast<double>(b.size());
  double sea = va / na, seb = vb / nb;
  double se = sea + seb;
  if (se <= 0.0) throw NumericError("welch_ttest: degenerate (zero) variance in both samples");

  TTestResult r;
  r.t = (ma - mb) / std::sqrt(se);
  r.df = se * se / (sea * sea / (na - 1.0) + seb * seb / (nb - 1.0));
  double x = r.df / (r.df + r.t * r.t);
  r.p = std::clamp(ttest_detail::reg_incomplete_beta(r.df / 2.0, 0.5, x), 0.0, 1.0);
  return r;
}

struct StrategyCoverage {
  std::string strategy;
  int stories = 0;
  int judged = 0;
  int covered = 0;
  double story_mean = 0.0;  // primary: mean of per-story coverages
  double pooled = 0.0;      // secondary: covered / judged over all questions
  std::vector<double> story_values;
};

// Story-level mean is the primary aggregate; the pooled question-level rate
// is emitted alongside it for transparency. Verdicts for several intents of
// one story pool into that story's rate.
inline std::vector<StrategyCoverage> coverage_by_strategy(
    const std::vector<CoverageVerdictRecord>& verdicts) {
  std::map<std::string, std::map<std::string, std::pair<int, int>>> per;  // strategy -> story -> (judged, covered)
  for (const auto& v : verdicts) {
    v.validate();
    if (!v.judged) continue;
    auto& cell = per[v.strategy][v.story_id];
    ++cell.first;
    if (v.covered) ++cell.second;
  }
  std::vector<StrategyCoverage> out;
  for (const auto& [strategy, stories] : per) {
    StrategyCoverage row;
    row.strategy = strategy;
    for (const auto& [story_id, cell] : stories) {
      row.stories += 1;
      row.judged += cell.first;
      row.covered += cell.second;
      row.story_values.push_back(static_cast<double>(cell.second) /
                                 static_cast<double>(cell.first));
    }
    double sum = 0.0;
    for (double v : row.story_values) sum += v;
    row.story_mean = sum / static_cast<double>(row.story_values.size());
    row.pooled = static_cast<double>(row.covered) / static_cast<double>(row.judged);
    out.push_back(std::move(row));
  }
  return out;
}

struct EmbeddingExportRow {
  std::string id;
  std::vector<double> vector;
  bool selected = false;
  std::optional<double> relevance;
  std::string story_id;
  std::string strategy;
  std::optional<std::string> intent_id;
};

struct ReportInputs {
  std::vector<CoverageVerdictRecord> verdicts;
  std::vector<StoryBundle> stories;
  std::vector<SelectionRecord> selections;
  KeyPointSet keypoints;
  std::vector<SummaryRecord> summaries;
  std::vector<EmbeddingExportRow> embedding_rows;
};

namespace csv_detail {

inline std::string field(const std::string& value) {
  if (value.find_first_of(",\"\n") == std::string::npos) return value;
  std::string quoted = "\"";
  for (char c : value) {
    if (c == '"') quoted += '"';
    quoted += c;
  }
  quoted += '"';
  return quoted;
}

}  // namespace csv_detail

// Writes the five CSV report files plus the embedding export. All rates use
// 6 significant digits with "." as the decimal separator.
inline void emit_report(const ReportInputs& in, const std::filesystem::path& out_dir) {
  std::filesystem::create_directories(out_dir);

  auto rows = coverage_by_strategy(in.verdicts);
  std::map<std::string, std::pair<long long, int>> words_per_strategy;  // total words, count
  for (const auto& s : in.summaries) {
    auto& cell = words_per_strategy[s.strategy];
    cell.first += summary_length_words(s.summary_text);
    cell.second += 1;
  }
  {
    std::string csv = "strategy,stories,judged,covered,story_mean_coverage,pooled_coverage,mean_summary_words\n";
    for (const auto& row : rows) {
      auto words = words_per_strategy.find(row.strategy);
      double mean_words = words == words_per_strategy.end()
                              ? std::numeric_limits<double>::quiet_NaN()
                              : static_cast<double>(words->second.first) /
                                    static_cast<double>(words->second.second);
      csv += csv_detail::field(row.strategy) + "," + std::to_string(row.stories) + "," +
             std::to_string(row.judged) + "," + std::to_string(row.covered) + "," +
             format_sig6(row.story_mean) + "," + format_sig6(row.pooled) + "," +
             format_sig6(mean_words) + "\n";
    }
    write_file(out_dir / "coverage_by_strategy.csv", csv);
  }

  {
    std::string csv = "strategy,article_index,judged,covered,coverage\n";
    std::set<std::string> strategies;
    for (const auto& v : in.verdicts) strategies.insert(v.strategy);
    for (const auto& strategy : strategies) {
      std::vector<CoverageVerdictRecord> subset;
      for (const auto& v : in.verdicts) {
        if (v.strategy == strategy) subset.push_back(v);
      }
      auto pos = positional_coverage(subset, in.stories);
      for (const auto& [index, rate] : pos.coverage) {
        csv += csv_detail::field(strategy) + "," + std::to_string(index) + "," +
               std::to_string(pos.judged[index]) + "," + std::to_string(pos.covered[index]) +
               "," + format_sig6(rate) + "\n";
      }
    }
    write_file(out_dir / "coverage_by_position.csv", csv);
  }

  {
    std::map<std::string, const StoryBundle*> story_by_id;
    for (const auto& s : in.stories) story_by_id[s.story_id] = &s;
    std::string csv = "strategy,story_id,intent_id,source_coverage\n";
    for (const auto& sel : in.selections) {
      auto it = story_by_id.find(sel.story_id);
      if (it == story_by_id.end()) {
        throw ValidationError("selection references unknown story '" + sel.story_id + "'");
      }
      double rate = selection_source_coverage(sel, in.keypoints, *it->second);
      csv += csv_detail::field(sel.strategy) + "," + csv_detail::field(sel.story_id) + "," +
             csv_detail::field(sel.intent_id.value_or("")) + "," + format_sig6(rate) + "\n";
    }
    write_file(out_dir / "selection_source_coverage.csv", csv);
  }

  {
    std::string csv = "strategy,story_id,intent_id,words\n";
    for (const auto& s : in.summaries) {
      csv += csv_detail::field(s.strategy) + "," + csv_detail::field(s.story_id) + "," +
             csv_detail::field(s.intent_id.value_or("")) + "," +
             std::to_string(summary_length_words(s.summary_text)) + "\n";
    }
    write_file(out_dir / "lengths.csv", csv);
  }

  {
    std::string csv = "strategy_a,strategy_b,t,df,p\n";
    for (std::size_t i = 0; i < rows.size(); ++i) {
      for (std::size_t j = i + 1; j < rows.size(); ++j) {
        std::string t = "nan", df = "nan", p = "nan";
        try {
          auto r = welch_ttest(rows[i].story_values, rows[j].story_values);
          t = format_sig6(r.t);
          df = format_sig6(r.df);
          p = format_sig6(r.p);
        } catch (const std::exception&) {
          // degenerate pair (too few stories or zero variance): nan row
        }
        csv += csv_detail::field(rows[i].strategy) + "," + csv_detail::field(rows[j].strategy) +
               "," + t + "," + df + "," + p + "\n";
      }
    }
    write_file(out_dir / "significance.csv", csv);
  }

  {
    std::vector<json> records;
    records.reserve(in.embedding_rows.size());
    for (const auto& row : in.embedding_rows) {
      json j = {{"id", row.id},
                {"vector", row.vector},
                {"selected", row.selected},
                {"story_id", row.story_id},
                {"strategy", row.strategy}};
      if (row.relevance) j["relevance"] = *row.relevance;
      if (row.intent_id) j["intent_id"] = *row.intent_id;
      records.push_back(std::move(j));
    }
    store_jsonl(out_dir / "embeddings_export.jsonl", records);
  }
}

}  // namespace dppsumm
