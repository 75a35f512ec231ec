#include "esci/config.h"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>

#include <fmt/format.h>

#include "esci/error.h"
#include "esci/io.h"

namespace esci {
namespace {

std::string_view trim(std::string_view s) {
  const auto is_space = [](char c) { return c == ' ' || c == '\t' || c == '\r'; };
  while (!s.empty() && is_space(s.front())) s.remove_prefix(1);
  while (!s.empty() && is_space(s.back())) s.remove_suffix(1);
  return s;
}

std::uint64_t to_count(std::string_view s, std::string_view key) {
  s = trim(s);
  std::uint64_t v = 0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (s.empty() || ec != std::errc() || ptr != s.data() + s.size()) {
    throw ConfigError(fmt::format("{}: '{}' is not a non-negative integer", key, s));
  }
  return v;
}

double to_real(std::string_view s, std::string_view key) {
  try {
    return parse_double(trim(s), key);
  } catch (const ParseError&) {
    throw ConfigError(fmt::format("{}: '{}' is not a number", key, s));
  }
}

std::vector<std::size_t> to_counts(std::string_view s, std::string_view key) {
  std::vector<std::size_t> out;
  if (trim(s).empty()) return out;
  for (auto part : split(s, ',')) out.push_back(to_count(part, key));
  return out;
}

std::vector<double> to_reals(std::string_view s, std::string_view key) {
  std::vector<double> out;
  if (trim(s).empty()) return out;
  for (auto part : split(s, ',')) out.push_back(to_real(part, key));
  return out;
}

template <typename T>
std::string join(const std::vector<T>& values) {
  std::string out;
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (i > 0) out += ',';
    if constexpr (std::is_floating_point_v<T>) {
      out += format_double(values[i]);
    } else {
      out += fmt::format("{}", values[i]);
    }
  }
  return out;
}

ConfigKey count_key(std::string name, KeyGroup group, std::string help,
                    std::size_t TrainConfig::*inner) {
  return {name, group, std::move(help),
          [inner, name](RunConfig& c, std::string_view v) { c.train.*inner = to_count(v, name); },
          [inner](const RunConfig& c) { return fmt::format("{}", c.train.*inner); }};
}

ConfigKey real_key(std::string name, KeyGroup group, std::string help,
                   double TrainConfig::*field) {
  return {name, group, std::move(help),
          [field, name](RunConfig& c, std::string_view v) { c.train.*field = to_real(v, name); },
          [field](const RunConfig& c) { return format_double(c.train.*field); }};
}

std::vector<ConfigKey> build_keys() {
  std::vector<ConfigKey> keys;
  keys.push_back({"vocab_size", KeyGroup::kModel, "hashed vocabulary size (tokenizer and model)",
                  [](RunConfig& c, std::string_view v) {
                    c.tokenizer.vocab_size = to_count(v, "vocab_size");
                    c.model.vocab_size = c.tokenizer.vocab_size;
                  },
                  [](const RunConfig& c) { return fmt::format("{}", c.tokenizer.vocab_size); }});
  keys.push_back({"ngram_orders", KeyGroup::kModel, "character n-gram orders, comma separated",
                  [](RunConfig& c, std::string_view v) {
                    c.tokenizer.ngram_orders = to_counts(v, "ngram_orders");
                  },
                  [](const RunConfig& c) { return join(c.tokenizer.ngram_orders); }});
  keys.push_back({"max_len", KeyGroup::kModel, "tokens per input",
                  [](RunConfig& c, std::string_view v) {
                    c.tokenizer.max_len = to_count(v, "max_len");
                  },
                  [](const RunConfig& c) { return fmt::format("{}", c.tokenizer.max_len); }});
  keys.push_back({"embed_dim", KeyGroup::kModel, "embedding width",
                  [](RunConfig& c, std::string_view v) {
                    c.model.embed_dim = to_count(v, "embed_dim");
                  },
                  [](const RunConfig& c) { return fmt::format("{}", c.model.embed_dim); }});
  keys.push_back({"hidden_dims", KeyGroup::kModel, "hidden layer widths, comma separated",
                  [](RunConfig& c, std::string_view v) {
                    c.model.hidden_dims = to_counts(v, "hidden_dims");
                  },
                  [](const RunConfig& c) { return join(c.model.hidden_dims); }});
  keys.push_back({"dropout_ratios", KeyGroup::kModel, "multi-sample dropout ratios",
                  [](RunConfig& c, std::string_view v) {
                    c.model.dropout_ratios = to_reals(v, "dropout_ratios");
                  },
                  [](const RunConfig& c) { return join(c.model.dropout_ratios); }});

  keys.push_back(count_key("epochs", KeyGroup::kTrain, "training epochs", &TrainConfig::epochs));
  keys.push_back(count_key("batch_size", KeyGroup::kTrain, "examples per micro-batch", &TrainConfig::batch_size));
  keys.push_back(real_key("learning_rate", KeyGroup::kTrain, "Adam step size",
                          &TrainConfig::learning_rate));
  keys.push_back(count_key("grad_accum_steps", KeyGroup::kTrain,
                           "micro-batches per parameter update", &TrainConfig::grad_accum_steps));
  keys.push_back(real_key("label_smoothing", KeyGroup::kTrain, "label smoothing epsilon",
                          &TrainConfig::label_smoothing));
  keys.push_back(real_key("fgm_epsilon", KeyGroup::kTrain, "FGM perturbation norm",
                          &TrainConfig::fgm_epsilon));
  keys.push_back(real_key("awp_gamma", KeyGroup::kTrain, "AWP relative perturbation size",
                          &TrainConfig::awp_gamma));
  keys.push_back(real_key("awp_loss_gate", KeyGroup::kTrain,
                          "AWP runs only while the running loss is below this",
                          &TrainConfig::awp_loss_gate));
  keys.push_back({"adversary", KeyGroup::kTrain, "none, fgm or awp",
                  [](RunConfig& c, std::string_view v) {
                    const auto a = parse_adversary(trim(v));
                    if (!a) throw ConfigError(fmt::format("adversary: unknown value '{}'", v));
                    c.train.adversary = *a;
                  },
                  [](const RunConfig& c) { return std::string(adversary_name(c.train.adversary)); }});
  keys.push_back(real_key("distill_hard_weight", KeyGroup::kTrain,
                          "weight of the hard label in self-distillation",
                          &TrainConfig::distill_hard_weight));
  keys.push_back(real_key("pseudo_threshold", KeyGroup::kTrain,
                          "minimum top probability for a pseudo label",
                          &TrainConfig::pseudo_threshold));
  keys.push_back(count_key("folds", KeyGroup::kTrain, "folds for bagging and distillation", &TrainConfig::folds));
  keys.push_back(count_key("folds_trained", KeyGroup::kTrain, "folds trained when bagging", &TrainConfig::folds_trained));

  keys.push_back({"seed", KeyGroup::kSeed, "random seed (required)",
                  [](RunConfig& c, std::string_view v) { c.seed = to_count(v, "seed"); },
                  [](const RunConfig& c) {
                    return c.seed ? fmt::format("{}", *c.seed) : std::string();
                  }});
  keys.push_back({"gains", KeyGroup::kScoring, "E,S,C,I gains for scoring and NDCG",
                  [](RunConfig& c, std::string_view v) {
                    const auto values = to_reals(v, "gains");
                    if (values.size() != kNumClasses) {
                      throw ConfigError(
                          fmt::format("gains: expected 4 values, got {}", values.size()));
                    }
                    std::copy(values.begin(), values.end(), c.gains.gains.begin());
                  },
                  [](const RunConfig& c) {
                    return join(std::vector<double>(c.gains.gains.begin(), c.gains.gains.end()));
                  }});
  keys.push_back({"corr_penalty", KeyGroup::kEnsemble,
                  "correlation penalty for the initial ensemble weights",
                  [](RunConfig& c, std::string_view v) {
                    c.corr_penalty = to_real(v, "corr_penalty");
                  },
                  [](const RunConfig& c) { return format_double(c.corr_penalty); }});
  keys.push_back({"holdout_fraction", KeyGroup::kData,
                  "share of queries held out for validation when val_data is empty",
                  [](RunConfig& c, std::string_view v) {
                    c.holdout_fraction = to_real(v, "holdout_fraction");
                  },
                  [](const RunConfig& c) { return format_double(c.holdout_fraction); }});
  keys.push_back({"train_data", KeyGroup::kData, "training dataset",
                  [](RunConfig& c, std::string_view v) { c.train_data = trim(v); },
                  [](const RunConfig& c) { return c.train_data; }});
  keys.push_back({"val_data", KeyGroup::kData, "validation dataset",
                  [](RunConfig& c, std::string_view v) { c.val_data = trim(v); },
                  [](const RunConfig& c) { return c.val_data; }});
  keys.push_back({"output_dir", KeyGroup::kData, "directory for checkpoints and metrics",
                  [](RunConfig& c, std::string_view v) { c.output_dir = trim(v); },
                  [](const RunConfig& c) { return c.output_dir; }});
  return keys;
}

}  // namespace

void RunConfig::apply_seed() {
  if (!seed) throw ConfigError("seed: an explicit seed is required");
  model.seed = *seed;
  train.seed = *seed;
}

void RunConfig::validate() const {
  tokenizer.validate();
  model.validate();
  train.validate();
  gains.validate();
  if (tokenizer.vocab_size != model.vocab_size) {
    throw ConfigError("vocab_size: tokenizer and model disagree");
  }
  if (!(holdout_fraction > 0.0 && holdout_fraction < 1.0)) {
    throw ConfigError(fmt::format("holdout_fraction: {} outside (0, 1)", holdout_fraction));
  }
  if (!(corr_penalty >= 0.0) || !std::isfinite(corr_penalty)) {
    throw ConfigError("corr_penalty: must be non-negative");
  }
}

const std::vector<ConfigKey>& config_keys() {
  static const std::vector<ConfigKey> keys = build_keys();
  return keys;
}

const ConfigKey* find_config_key(std::string_view name) {
  for (const auto& k : config_keys()) {
    if (k.name == name) return &k;
  }
  return nullptr;
}

void set_config_value(RunConfig& cfg, std::string_view key, std::string_view value) {
  const ConfigKey* k = find_config_key(key);
  if (!k) throw ConfigError(fmt::format("unknown configuration key '{}'", key));
  k->set(cfg, value);
}

std::map<std::string, std::string> parse_config_text(std::string_view text,
                                                     std::string_view source_name) {
  std::map<std::string, std::string> out;
  const auto lines = split_lines(text);
  for (std::size_t ln = 0; ln < lines.size(); ++ln) {
    std::string_view line = lines[ln];
    if (const auto hash = line.find('#'); hash != std::string_view::npos) {
      line = line.substr(0, hash);
    }
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) {
      throw ConfigError(fmt::format("{}:{}: expected 'key = value'", source_name, ln + 1));
    }
    const std::string key(trim(line.substr(0, eq)));
    const std::string value(trim(line.substr(eq + 1)));
    if (!find_config_key(key)) {
      throw ConfigError(
          fmt::format("{}:{}: unknown configuration key '{}'", source_name, ln + 1, key));
    }
    if (!out.emplace(key, value).second) {
      throw ConfigError(fmt::format("{}:{}: key '{}' set twice", source_name, ln + 1, key));
    }
  }
  return out;
}

std::map<std::string, std::string> config_from_env(
    const std::function<const char*(const char*)>& getenv_fn) {
  std::map<std::string, std::string> out;
  for (const auto& k : config_keys()) {
    std::string name(kEnvPrefix);
    for (char c : k.name) {
      name.push_back(static_cast<char>(std::toupper(static_cast<unsigned char>(c))));
    }
    if (const char* v = getenv_fn(name.c_str())) out.emplace(k.name, v);
  }
  return out;
}

RunConfig resolve_config(const std::optional<std::filesystem::path>& file,
                         const std::map<std::string, std::string>& env,
                         const std::map<std::string, std::string>& flags) {
  RunConfig cfg;
  const auto apply = [&cfg](const std::map<std::string, std::string>& values,
                            std::string_view origin) {
    for (const auto& [key, value] : values) {
      try {
        set_config_value(cfg, key, value);
      } catch (const ConfigError& e) {
        throw ConfigError(fmt::format("{}: {}", origin, e.what()));
      }
    }
  };
  if (file) {
    const std::string name = file->string();
    apply(parse_config_text(read_file(*file), name), name);
  }
  apply(env, "environment");
  apply(flags, "flags");
  return cfg;
}

std::string format_config(const RunConfig& cfg) {
  std::string out;
  for (const auto& k : config_keys()) out += fmt::format("{} = {}\n", k.name, k.get(cfg));
  return out;
}

}  // namespace esci
