#include "iterlstm/runconfig.hpp"

#include <charconv>
#include <fstream>
#include <set>
#include <sstream>

namespace iterlstm {

namespace {

std::string trim(const std::string& s) {
  const auto first = s.find_first_not_of(" \t");
  if (first == std::string::npos) return "";
  const auto last = s.find_last_not_of(" \t");
  return s.substr(first, last - first + 1);
}

std::uint64_t parse_u64(const std::string& key, const std::string& value) {
  std::uint64_t out = 0;
  const char* begin = value.data();
  const char* end = begin + value.size();
  auto [ptr, ec] = std::from_chars(begin, end, out);
  if (ec != std::errc() || ptr != end)
    throw ConfigError("config key '" + key + "': not a nonnegative integer: " +
                      value);
  return out;
}

double parse_double(const std::string& key, const std::string& value) {
  try {
    std::size_t idx = 0;
    const double out = std::stod(value, &idx);
    if (idx != value.size()) throw std::invalid_argument(value);
    return out;
  } catch (const std::exception&) {
    throw ConfigError("config key '" + key + "': not a number: " + value);
  }
}

bool parse_bool(const std::string& key, const std::string& value) {
  if (value == "true" || value == "on" || value == "1") return true;
  if (value == "false" || value == "off" || value == "0") return false;
  throw ConfigError("config key '" + key + "': not a boolean: " + value);
}

}  // namespace

TrainConfig parse_run_config_text(const std::string& text) {
  TrainConfig cfg;
  std::set<std::string> seen;
  std::istringstream lines(text);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(lines, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;

    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError("config line " + std::to_string(lineno) +
                        ": expected key = value");
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (key.empty() || value.empty())
      throw ConfigError("config line " + std::to_string(lineno) +
                        ": empty key or value");
    if (!seen.insert(key).second)
      throw ConfigError("duplicate config key: " + key);

    if (key == "layers") {
      cfg.layers = parse_u64(key, value);
    } else if (key == "units") {
      cfg.units = parse_u64(key, value);
    } else if (key == "batch_size") {
      cfg.batch_size = parse_u64(key, value);
    } else if (key == "unroll_length") {
      cfg.unroll_length = parse_u64(key, value);
    } else if (key == "epochs") {
      cfg.epochs = parse_u64(key, value);
    } else if (key == "lr_base") {
      cfg.lr_base = parse_double(key, value);
    } else if (key == "lr_constant_epochs") {
      cfg.lr_constant_epochs = parse_u64(key, value);
    } else if (key == "lr_decay") {
      cfg.lr_decay = parse_double(key, value);
    } else if (key == "keep_prob") {
      cfg.keep_prob = parse_double(key, value);
    } else if (key == "init_range") {
      cfg.init_range = parse_double(key, value);
    } else if (key == "clip_norm") {
      cfg.clip_norm = parse_double(key, value);
    } else if (key == "l2_recurrent") {
      cfg.l2_recurrent = parse_double(key, value);
    } else if (key == "seed") {
      cfg.seed = parse_u64(key, value);
    } else if (key == "token_mode") {
      if (value == "word")
        cfg.token_mode = TokenMode::kWord;
      else if (value == "char")
        cfg.token_mode = TokenMode::kChar;
      else
        throw ConfigError("config key 'token_mode': expected word or char");
    } else if (key == "iteration_mode") {
      if (value == "fixed")
        cfg.iteration.mode = IterationMode::kFixed;
      else if (value == "adaptive")
        cfg.iteration.mode = IterationMode::kAdaptive;
      else
        throw ConfigError(
            "config key 'iteration_mode': expected fixed or adaptive");
    } else if (key == "fixed_iterations") {
      cfg.iteration.fixed_iterations = parse_u64(key, value);
    } else if (key == "max_iterations") {
      cfg.iteration.max_iterations = parse_u64(key, value);
    } else if (key == "threshold_base") {
      cfg.iteration.threshold_base = parse_double(key, value);
    } else if (key == "threshold_step") {
      cfg.iteration.threshold_step = parse_double(key, value);
    } else if (key == "threshold_cap") {
      cfg.iteration.threshold_cap = parse_double(key, value);
    } else if (key == "residual") {
      cfg.iteration.residual = parse_bool(key, value);
    } else {
      throw ConfigError("unknown config key: " + key);
    }
  }
  cfg.validate();
  return cfg;
}

TrainConfig parse_run_config(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot read config file: " + path);
  std::ostringstream text;
  text << in.rdbuf();
  return parse_run_config_text(text.str());
}

}  // namespace iterlstm
