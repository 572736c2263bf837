#pragma once

#include <algorithm>
#include <cstdint>
#include <fstream>
#include <string>
#include <unordered_set>
#include <vector>

#include "mpgvae/errors.hpp"
#include "mpgvae/train.hpp"

namespace mpgvae {

namespace detail {

inline std::size_t levenshtein(const std::string& a, const std::string& b) {
  std::vector<std::size_t> row(b.size() + 1);
  for (std::size_t j = 0; j <= b.size(); ++j) row[j] = j;
  for (std::size_t i = 1; i <= a.size(); ++i) {
    std::size_t diag = row[0];
    row[0] = i;
    for (std::size_t j = 1; j <= b.size(); ++j) {
      const std::size_t up = row[j];
      row[j] = std::min({row[j] + 1, row[j - 1] + 1,
                         diag + (a[i - 1] == b[j - 1] ? 0 : 1)});
      diag = up;
    }
  }
  return row[b.size()];
}

inline std::string trim(const std::string& s) {
  const std::size_t a = s.find_first_not_of(" \t\r");
  if (a == std::string::npos) return "";
  const std::size_t b = s.find_last_not_of(" \t\r");
  return s.substr(a, b - a + 1);
}

inline const std::vector<std::string>& config_keys() {
  static const std::vector<std::string> keys = {
      "enc_embed", "enc_widths", "dec_read_in", "dec_widths", "graph_vec",
      "latent",    "s2s_steps",  "batch_size",  "learning_rate",
      "beta1",     "beta2",      "adam_eps",    "epochs",     "kl_warmup",
      "seed",      "conditional"};
  return keys;
}

inline std::size_t longest_common_substring(const std::string& a, const std::string& b) {
  std::vector<std::size_t> row(b.size() + 1, 0);
  std::size_t best = 0;
  for (std::size_t i = 1; i <= a.size(); ++i) {
    std::size_t diag = 0;
    for (std::size_t j = 1; j <= b.size(); ++j) {
      const std::size_t up = row[j];
      row[j] = a[i - 1] == b[j - 1] ? diag + 1 : 0;
      best = std::max(best, row[j]);
      diag = up;
    }
  }
  return best;
}

// Edit distance alone favors short keys; crediting the longest shared run
// makes 'lr_rate' suggest 'learning_rate' rather than 'latent'.
inline std::string nearest_key(const std::string& key) {
  std::string best;
  long best_score = 0;
  bool first = true;
  for (const std::string& k : config_keys()) {
    const long score = static_cast<long>(levenshtein(key, k)) -
                       static_cast<long>(longest_common_substring(key, k));
    if (first || score < best_score) {
      first = false;
      best_score = score;
      best = k;
    }
  }
  return best;
}

inline int config_int(const std::string& key, const std::string& value) {
  std::size_t used = 0;
  int v = 0;
  try {
    v = std::stoi(value, &used);
  } catch (const std::exception&) {
    throw ConfigError("config key '" + key + "': not an integer: '" + value + "'");
  }
  if (used != value.size())
    throw ConfigError("config key '" + key + "': not an integer: '" + value + "'");
  return v;
}

inline double config_double(const std::string& key, const std::string& value) {
  std::size_t used = 0;
  double v = 0;
  try {
    v = std::stod(value, &used);
  } catch (const std::exception&) {
    throw ConfigError("config key '" + key + "': not a number: '" + value + "'");
  }
  if (used != value.size())
    throw ConfigError("config key '" + key + "': not a number: '" + value + "'");
  return v;
}

inline std::uint64_t config_u64(const std::string& key, const std::string& value) {
  std::size_t used = 0;
  std::uint64_t v = 0;
  try {
    v = std::stoull(value, &used);
  } catch (const std::exception&) {
    throw ConfigError("config key '" + key + "': not a non-negative integer: '" + value + "'");
  }
  if (used != value.size() || value.find('-') != std::string::npos)
    throw ConfigError("config key '" + key + "': not a non-negative integer: '" + value + "'");
  return v;
}

inline std::vector<int> config_int_list(const std::string& key, const std::string& value) {
  std::vector<int> out;
  std::size_t at = 0;
  while (at <= value.size()) {
    const std::size_t comma = value.find(',', at);
    const std::string part = trim(value.substr(at, comma == std::string::npos
                                                       ? std::string::npos
                                                       : comma - at));
    out.push_back(config_int(key, part));
    if (comma == std::string::npos) break;
    at = comma + 1;
  }
  return out;
}

inline bool config_bool(const std::string& key, const std::string& value) {
  if (value == "1" || value == "true") return true;
  if (value == "0" || value == "false") return false;
  throw ConfigError("config key '" + key + "': expected 0/1/true/false, got '" + value + "'");
}

}  // namespace detail

// Flat key=value text; '#' starts a comment, blank lines are ignored.
// Unknown keys are rejected with a nearest-key suggestion, duplicates are
// rejected outright. Omitted keys keep their defaults, so a config file and
// a checkpoint trailer parse identically. The result is validated.
inline TrainConfig parse_train_config(const std::string& text) {
  TrainConfig cfg;
  std::unordered_set<std::string> seen;
  std::size_t line_no = 0;
  std::size_t at = 0;
  while (at <= text.size()) {
    const std::size_t nl = text.find('\n', at);
    std::string line = text.substr(at, nl == std::string::npos ? std::string::npos : nl - at);
    at = nl == std::string::npos ? text.size() + 1 : nl + 1;
    ++line_no;
    const std::size_t hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    line = detail::trim(line);
    if (line.empty()) continue;
    const std::size_t eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError("config line " + std::to_string(line_no) + ": expected key=value, got '" +
                        line + "'");
    const std::string key = detail::trim(line.substr(0, eq));
    const std::string value = detail::trim(line.substr(eq + 1));
    const auto& keys = detail::config_keys();
    if (std::find(keys.begin(), keys.end(), key) == keys.end())
      throw ConfigError("unknown config key '" + key + "'; did you mean '" +
                        detail::nearest_key(key) + "'?");
    if (!seen.insert(key).second)
      throw ConfigError("duplicate config key '" + key + "'");

    if (key == "enc_embed") cfg.enc_embed = detail::config_int(key, value);
    else if (key == "enc_widths") cfg.enc_widths = detail::config_int_list(key, value);
    else if (key == "dec_read_in") cfg.dec_read_in = detail::config_int(key, value);
    else if (key == "dec_widths") cfg.dec_widths = detail::config_int_list(key, value);
    else if (key == "graph_vec") cfg.graph_vec = detail::config_int(key, value);
    else if (key == "latent") cfg.latent = detail::config_int(key, value);
    else if (key == "s2s_steps") cfg.s2s_steps = detail::config_int(key, value);
    else if (key == "batch_size") cfg.batch_size = detail::config_int(key, value);
    else if (key == "learning_rate") cfg.lr = detail::config_double(key, value);
    else if (key == "beta1") cfg.beta1 = detail::config_double(key, value);
    else if (key == "beta2") cfg.beta2 = detail::config_double(key, value);
    else if (key == "adam_eps") cfg.adam_eps = detail::config_double(key, value);
    else if (key == "epochs") cfg.epochs = detail::config_int(key, value);
    else if (key == "kl_warmup") cfg.kl_warmup = detail::config_int(key, value);
    else if (key == "seed") cfg.seed = detail::config_u64(key, value);
    else if (key == "conditional") cfg.conditional = detail::config_bool(key, value);
  }
  cfg.validate();
  return cfg;
}

inline std::string read_text_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open file: " + path);
  return std::string((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
}

inline TrainConfig load_train_config(const std::string& path) {
  std::string text;
  try {
    text = read_text_file(path);
  } catch (const IoError& e) {
    throw ConfigError(e.what());
  }
  return parse_train_config(text);
}

}  // namespace mpgvae
