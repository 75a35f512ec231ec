#ifndef ESCI_CONFIG_H_
#define ESCI_CONFIG_H_

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "esci/model.h"
#include "esci/ranking.h"
#include "esci/tokenizer.h"
#include "esci/trainer.h"

namespace esci {

// Everything a pipeline run can be configured with. `seed` has no default;
// commands that draw random numbers refuse to run without one.
struct RunConfig {
  TokenizerConfig tokenizer;
  ModelConfig model;
  TrainConfig train;
  GainVector gains;
  std::optional<std::uint64_t> seed;
  double holdout_fraction = 0.2;
  double corr_penalty = 1.0;
  std::string train_data;
  std::string val_data;
  std::string output_dir = ".";

  // Copies `seed` into the model and trainer. Throws ConfigError when it
  // is missing.
  void apply_seed();
  // Throws ConfigError.
  void validate() const;
};

enum class KeyGroup { kModel, kTrain, kData, kScoring, kEnsemble, kSeed };

struct ConfigKey {
  std::string name;
  KeyGroup group;
  std::string help;
  std::function<void(RunConfig&, std::string_view)> set;
  std::function<std::string(const RunConfig&)> get;
};

const std::vector<ConfigKey>& config_keys();
const ConfigKey* find_config_key(std::string_view name);

// Sets one key from its text form. Throws ConfigError naming the key.
void set_config_value(RunConfig& cfg, std::string_view key, std::string_view value);

// "key = value" lines; '#' starts a comment. Unknown and repeated keys are
// errors.
std::map<std::string, std::string> parse_config_text(std::string_view text,
                                                     std::string_view source_name);

inline constexpr std::string_view kEnvPrefix = "ESCI_";

// ESCI_<KEY in upper case> for every known key that is set.
std::map<std::string, std::string> config_from_env(
    const std::function<const char*(const char*)>& getenv_fn);

// defaults < file < environment < flags.
RunConfig resolve_config(const std::optional<std::filesystem::path>& file,
                         const std::map<std::string, std::string>& env,
                         const std::map<std::string, std::string>& flags);

// One "key = value" line per key, in registry order.
std::string format_config(const RunConfig& cfg);

}  // namespace esci

#endif  // ESCI_CONFIG_H_
