#pragma once

// Run configuration: one human-editable key/value document, merged with
// command-line overrides by the CLI. Secrets stay out of the file twice over:
// values may interpolate ${ENV_VAR}, and credential keys name the variable to
// read rather than holding the credential. Neither path ever logs a value.

#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <map>
#include <optional>
#include <string>

#include "dppsumm/errors.hpp"
#include "dppsumm/kernel.hpp"
#include "dppsumm/pipeline.hpp"
#include "dppsumm/util.hpp"

namespace dppsumm {

// Replaces each ${NAME} in `value` with the environment variable's content.
// An unset variable is an error that names the variable and the config key,
// never any value.
inline std::string interpolate_env(const std::string& value, const std::string& key) {
  std::string out;
  std::size_t pos = 0;
  while (pos < value.size()) {
    auto open = value.find("${", pos);
    if (open == std::string::npos) {
      out.append(value, pos, std::string::npos);
      break;
    }
    out.append(value, pos, open - pos);
    auto close = value.find('}', open + 2);
    if (close == std::string::npos) {
      throw ValidationError("config key '" + key + "': unterminated ${ in value");
    }
    std::string name = value.substr(open + 2, close - open - 2);
    if (name.empty()) {
      throw ValidationError("config key '" + key + "': empty environment variable reference");
    }
    const char* v = std::getenv(name.c_str());
    if (!v) {
      throw ValidationError("config key '" + key + "': environment variable '" + name +
                            "' is not set");
    }
    out += v;
    pos = close + 1;
  }
  return out;
}

struct RunConfig {
  // corpus and artifacts
  std::string stories;
  std::string out = "out";
  std::string cache;  // response cache journal; empty keeps the cache in memory

  // backends: "mock" (offline, deterministic) or "live" (HTTP endpoints)
  std::string backend = "mock";
  std::string chat_model = "mock-chat";
  std::string chat_endpoint;
  std::string chat_api_key_env;  // NAME of the env var holding the key
  std::string embed_model = "mock-embed";
  std::string embed_endpoint;
  std::string embed_api_key_env;
  std::string judge_model;  // empty falls back to chat_model

  // strategy and sampling
  std::string strategy = "dpp";
  std::string kernel = "gaussian";
  double sigma = 1.0;
  double psd_epsilon = 0.0;
  std::optional<int> k;
  std::uint64_t seed = 0;
  std::optional<std::string> intent_id;
  std::string intent_mode = "none";  // "none" or "per-intent"

  // execution
  int max_in_flight = 4;
  double temperature = 0.7;
  int max_tokens = 4096;
  std::size_t max_prompt_chars = 250000;
  int embed_batch_size = 32;

  void validate() const {
    if (backend != "mock" && backend != "live") {
      throw ValidationError("config: backend must be 'mock' or 'live', got '" + backend + "'");
    }
    if (intent_mode != "none" && intent_mode != "per-intent") {
      throw ValidationError("config: intent_mode must be 'none' or 'per-intent', got '" +
                            intent_mode + "'");
    }
    strategy_from_name(strategy);
    kernel_family_from_name(kernel);
    if (!(sigma > 0.0)) throw ValidationError("config: sigma must be positive");
    if (psd_epsilon < 0.0) throw ValidationError("config: psd_epsilon must be non-negative");
    if (max_in_flight < 1) throw ValidationError("config: max_in_flight must be at least 1");
    if (max_tokens < 1) throw ValidationError("config: max_tokens must be at least 1");
    if (embed_batch_size < 1) throw ValidationError("config: embed_batch_size must be at least 1");
    if (!stories.empty() && !std::filesystem::exists(stories)) {
      throw ValidationError("config: stories file does not exist: " + stories);
    }
  }

  StrategyConfig strategy_config() const {
    StrategyConfig cfg;
    cfg.strategy = strategy_from_name(strategy);
    cfg.kernel.family = kernel_family_from_name(kernel);
    cfg.kernel.sigma = sigma;
    cfg.kernel.psd_epsilon = psd_epsilon;
    cfg.k = k;
    cfg.seed = seed;
    cfg.intent_id = intent_id;
    return cfg;
  }

  PipelineOptions pipeline_options() const {
    PipelineOptions opts;
    opts.chat_model = chat_model;
    opts.temperature = temperature;
    opts.max_tokens = max_tokens;
    opts.max_prompt_chars = max_prompt_chars;
    return opts;
  }
};

namespace config_detail {

inline int to_int(const std::string& value, const std::string& key) {
  try {
    std::size_t pos = 0;
    int v = std::stoi(value, &pos);
    if (pos != value.size()) throw std::invalid_argument("trailing characters");
    return v;
  } catch (const std::exception&) {
    throw ValidationError("config key '" + key + "': not an integer: '" + value + "'");
  }
}

inline double to_double(const std::string& value, const std::string& key) {
  try {
    std::size_t pos = 0;
    double v = std::stod(value, &pos);
    if (pos != value.size()) throw std::invalid_argument("trailing characters");
    return v;
  } catch (const std::exception&) {
    throw ValidationError("config key '" + key + "': not a number: '" + value + "'");
  }
}

inline std::uint64_t to_uint64(const std::string& value, const std::string& key) {
  try {
    std::size_t pos = 0;
    unsigned long long v = std::stoull(value, &pos);
    if (pos != value.size()) throw std::invalid_argument("trailing characters");
    return static_cast<std::uint64_t>(v);
  } catch (const std::exception&) {
    throw ValidationError("config key '" + key + "': not an unsigned integer: '" + value + "'");
  }
}

}  // namespace config_detail

inline void apply_config_entry(RunConfig& cfg, const std::string& key, const std::string& value) {
  using config_detail::to_double;
  using config_detail::to_int;
  using config_detail::to_uint64;
  if (key == "stories") cfg.stories = value;
  else if (key == "out") cfg.out = value;
  else if (key == "cache") cfg.cache = value;
  else if (key == "backend") cfg.backend = value;
  else if (key == "chat_model") cfg.chat_model = value;
  else if (key == "chat_endpoint") cfg.chat_endpoint = value;
  else if (key == "chat_api_key_env") cfg.chat_api_key_env = value;
  else if (key == "embed_model") cfg.embed_model = value;
  else if (key == "embed_endpoint") cfg.embed_endpoint = value;
  else if (key == "embed_api_key_env") cfg.embed_api_key_env = value;
  else if (key == "judge_model") cfg.judge_model = value;
  else if (key == "strategy") cfg.strategy = value;
  else if (key == "kernel") cfg.kernel = value;
  else if (key == "sigma") cfg.sigma = to_double(value, key);
  else if (key == "psd_epsilon") cfg.psd_epsilon = to_double(value, key);
  else if (key == "k") cfg.k = to_int(value, key);
  else if (key == "seed") cfg.seed = to_uint64(value, key);
  else if (key == "intent_id") cfg.intent_id = value;
  else if (key == "intent_mode") cfg.intent_mode = value;
  else if (key == "max_in_flight") cfg.max_in_flight = to_int(value, key);
  else if (key == "temperature") cfg.temperature = to_double(value, key);
  else if (key == "max_tokens") cfg.max_tokens = to_int(value, key);
  else if (key == "max_prompt_chars") cfg.max_prompt_chars = static_cast<std::size_t>(to_uint64(value, key));
  else if (key == "embed_batch_size") cfg.embed_batch_size = to_int(value, key);
  else throw ValidationError("config: unknown key '" + key + "'");
}

// "key = value" lines; '#' starts a comment line; blank lines are skipped.
// Later duplicates of a key are an error rather than a silent override.
inline RunConfig parse_run_config(const std::string& text) {
  RunConfig cfg;
  std::map<std::string, bool> seen;
  std::size_t lineno = 0;
  for (const auto& raw : split_lines(text)) {
    ++lineno;
    std::string line = trim(raw);
    if (line.empty() || line[0] == '#') continue;
    auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ValidationError("config line " + std::to_string(lineno) + ": expected 'key = value'");
    }
    std::string key = trim(line.substr(0, eq));
    std::string value = trim(line.substr(eq + 1));
    if (key.empty()) {
      throw ValidationError("config line " + std::to_string(lineno) + ": empty key");
    }
    if (seen[key]) {
      throw ValidationError("config line " + std::to_string(lineno) + ": duplicate key '" + key +
                            "'");
    }
    seen[key] = true;
    apply_config_entry(cfg, key, interpolate_env(value, key));
  }
  return cfg;
}

inline RunConfig load_run_config(const std::filesystem::path& path) {
  return parse_run_config(read_file(path));
}

}  // namespace dppsumm
