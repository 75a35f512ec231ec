// Copyright 2026 The ESCI Rank Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// Command-line driver for the ESCI ranking pipeline.
//
//   esci synth --n 1000 --seed 7 --out data.tsv
//   esci train --train_data data.tsv --seed 7 --output_dir run
//   esci predict --model run/model.ckpt --data val.tsv --out preds.tsv
//   esci evaluate --predictions preds.tsv --truth val.tsv

#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <fmt/format.h>

#include "CLI11.hpp"
#include "esci/config.h"
#include "esci/dataset.h"
#include "esci/ensemble.h"
#include "esci/error.h"
#include "esci/io.h"
#include "esci/model.h"
#include "esci/ranking.h"
#include "esci/text.h"
#include "esci/trainer.h"

namespace esci {
namespace {

namespace fs = std::filesystem;

const std::vector<std::string> kModelKeys = {"vocab_size", "ngram_orders", "max_len",
                                             "embed_dim",  "hidden_dims",  "dropout_ratios"};
const std::vector<std::string> kTrainKeys = {
    "epochs",        "batch_size",  "learning_rate", "grad_accum_steps",
    "label_smoothing", "fgm_epsilon", "awp_gamma",   "awp_loss_gate",
    "adversary",     "distill_hard_weight", "folds", "folds_trained"};
const std::vector<std::string> kDataKeys = {"train_data", "val_data", "holdout_fraction",
                                            "output_dir"};

std::vector<std::string> concat(std::initializer_list<std::vector<std::string>> parts) {
  std::vector<std::string> out;
  for (const auto& p : parts) out.insert(out.end(), p.begin(), p.end());
  return out;
}

// Config-backed flags of one subcommand plus its --config file.
class ConfigFlags {
 public:
  ConfigFlags(CLI::App* app, const std::vector<std::string>& keys) {
    app->add_option("--config", file_, "run configuration file (key = value lines)")
        ->check(CLI::ExistingFile);
    const RunConfig defaults;
    for (const auto& name : keys) {
      const ConfigKey* key = find_config_key(name);
      if (!key) throw ConfigError(fmt::format("no configuration key '{}'", name));
      std::string shown = key->get(defaults);
      if (name == "seed") shown = "required";
      if (shown.empty()) shown = "\"\"";
      options_[name] = app->add_option("--" + name, values_[name], key->help)
                           ->default_str(shown)
                           ->type_name(name == "seed" ? "UINT" : "VALUE");
    }
  }

  RunConfig resolve() const {
    std::map<std::string, std::string> flags;
    for (const auto& [name, opt] : options_) {
      if (opt->count() > 0) flags.emplace(name, values_.at(name));
    }
    std::optional<fs::path> file;
    if (!file_.empty()) file = file_;
    RunConfig cfg = resolve_config(file, config_from_env(std::getenv), flags);
    if (cfg.seed) cfg.apply_seed();
    cfg.validate();
    return cfg;
  }

 private:
  std::string file_;
  std::map<std::string, std::string> values_;
  std::map<std::string, CLI::Option*> options_;
};

Checkpoint load_model(const std::string& path) { return load_checkpoint(path); }

PredictionSet predict_with(const Checkpoint& ckpt, const Dataset& data, const GainVector& g) {
  const auto probs = predict_proba(ckpt.params, encode_inputs(data, ckpt.tokenizer));
  return make_predictions(data, probs, g);
}

void write_output(const std::string& path, std::string_view contents) {
  if (path != "-") {
    const fs::path p(path);
    if (p.has_parent_path()) fs::create_directories(p.parent_path());
  }
  write_file(path, contents);
}

std::vector<std::string> split_list(std::string_view s) {
  std::vector<std::string> out;
  for (auto part : split(s, ',')) {
    if (!part.empty()) out.emplace_back(part);
  }
  return out;
}

// Holds the option storage of every subcommand until the parse finishes.
struct Commands {
  std::vector<std::unique_ptr<ConfigFlags>> flags;
  std::function<int()> run;
};

ConfigFlags& add_flags(Commands& cmds, CLI::App* app, const std::vector<std::string>& keys) {
  cmds.flags.push_back(std::make_unique<ConfigFlags>(app, keys));
  return *cmds.flags.back();
}

void add_synth(CLI::App& root, Commands& cmds) {
  auto* app = root.add_subcommand("synth", "generate a synthetic labeled dataset");
  auto& flags = add_flags(cmds, app, {"seed"});
  auto n = std::make_shared<std::size_t>(1000);
  auto out = std::make_shared<std::string>("-");
  app->add_option("--n", *n, "number of query-product pairs")->capture_default_str();
  app->add_option("--out", *out, "output dataset, '-' for stdout")->capture_default_str();
  app->callback([&cmds, &flags, n, out] {
    cmds.run = [&flags, n, out] {
      RunConfig cfg = flags.resolve();
      cfg.apply_seed();
      write_output(*out, format_dataset(generate_synthetic(*n, *cfg.seed)));
      return 0;
    };
  });
}

void add_ingest(CLI::App& root, Commands& cmds) {
  auto* app = root.add_subcommand(
      "ingest", "clean text, mark brand and color mentions, optionally add translations");
  auto input = std::make_shared<std::string>();
  auto out = std::make_shared<std::string>("-");
  auto dictionary = std::make_shared<std::string>();
  auto locales = std::make_shared<std::string>();
  app->add_option("--input", *input, "raw dataset")->required()->check(CLI::ExistingFile);
  app->add_option("--out", *out, "output dataset, '-' for stdout")->capture_default_str();
  app->add_option("--dictionary", *dictionary,
                  "translation dictionary (source, target, word, translation)")
      ->check(CLI::ExistingFile);
  app->add_option("--locales", *locales, "target locales for translated copies, e.g. es,jp")
      ->capture_default_str();
  app->callback([&cmds, input, out, dictionary, locales] {
    cmds.run = [input, out, dictionary, locales] {
      Dataset data = load_dataset(*input);
      for (auto& r : data) r = clean_record(std::move(r));
      data = mark_query_entities(std::move(data));
      const auto targets = split_list(*locales);
      if (!targets.empty()) {
        std::set<Locale> wanted;
        for (const auto& t : targets) {
          const auto l = parse_locale(t);
          if (!l) throw ArgumentError(fmt::format("--locales: unknown locale '{}'", t));
          wanted.insert(*l);
        }
        if (dictionary->empty()) {
          throw ArgumentError("--locales needs --dictionary");
        }
        const auto translator = DictionaryTranslator::load(*dictionary);
        auto augmented = augment_translate(data, translator, wanted);
        for (const auto& s : augmented.skipped) {
          std::cerr << fmt::format("skipped translation of ({}, {}) to {}\n", s.query_id,
                                   s.product_id, locale_code(s.target));
        }
        data = std::move(augmented.records);
      }
      validate_dataset(data);
      write_output(*out, format_dataset(data));
      return 0;
    };
  });
}

std::pair<Dataset, Dataset> train_val(const RunConfig& cfg) {
  if (cfg.train_data.empty()) throw ConfigError("train_data: no training dataset given");
  Dataset data = load_dataset(cfg.train_data);
  if (!cfg.val_data.empty()) return {std::move(data), load_dataset(cfg.val_data)};
  return split_by_query(data, cfg.holdout_fraction, *cfg.seed);
}

void add_train(CLI::App& root, Commands& cmds) {
  auto* app = root.add_subcommand("train", "train a model, or a k-fold bag with --bag");
  auto& flags = add_flags(cmds, app, concat({kModelKeys, kTrainKeys, kDataKeys, {"gains", "seed"}}));
  auto bag = std::make_shared<bool>(false);
  app->add_flag("--bag", *bag, "train folds_trained fold models on train_data");
  app->callback([&cmds, &flags, bag] {
    cmds.run = [&flags, bag] {
      RunConfig cfg = flags.resolve();
      cfg.apply_seed();
      const fs::path dir(cfg.output_dir);
      fs::create_directories(dir);
      if (*bag) {
        if (cfg.train_data.empty()) throw ConfigError("train_data: no training dataset given");
        const Dataset data = load_dataset(cfg.train_data);
        const auto result = kfold_bag(data, cfg.train, cfg.model, cfg.tokenizer, cfg.gains);
        for (std::size_t i = 0; i < result.models.size(); ++i) {
          save_checkpoint({result.models[i], cfg.tokenizer}, dir / fmt::format("fold_{}.ckpt", i));
          write_file(dir / fmt::format("metrics_fold_{}.tsv", i), format_metrics(result.reports[i]));
          std::cerr << fmt::format("fold {}: val_ndcg {}\n", i,
                                   format_double(result.reports[i].epochs.back().val_ndcg));
        }
        return 0;
      }
      const auto [train_data, val_data] = train_val(cfg);
      const auto result =
          train(train_data, val_data, cfg.train, cfg.model, cfg.tokenizer, cfg.gains);
      save_checkpoint({result.params, cfg.tokenizer}, dir / "model.ckpt");
      write_file(dir / "metrics.tsv", format_metrics(result.report));
      std::cerr << fmt::format("val_ndcg {} after {} epochs ({:.1f}s)\n",
                               format_double(result.report.epochs.back().val_ndcg),
                               result.report.epochs.size(), result.report.wall_seconds);
      return 0;
    };
  });
}

void add_distill(CLI::App& root, Commands& cmds) {
  auto* app = root.add_subcommand(
      "distill", "fill soft labels of train_data from out-of-fold predictions");
  auto& flags = add_flags(cmds, app, concat({kModelKeys, kTrainKeys, {"train_data", "gains", "seed"}}));
  auto out = std::make_shared<std::string>("-");
  app->add_option("--out", *out, "output dataset, '-' for stdout")->capture_default_str();
  app->callback([&cmds, &flags, out] {
    cmds.run = [&flags, out] {
      RunConfig cfg = flags.resolve();
      cfg.apply_seed();
      if (cfg.train_data.empty()) throw ConfigError("train_data: no training dataset given");
      const Dataset data = load_dataset(cfg.train_data);
      write_output(*out,
                   format_dataset(self_distill(data, cfg.train, cfg.model, cfg.tokenizer, cfg.gains)));
      return 0;
    };
  });
}

void add_pseudo_label(CLI::App& root, Commands& cmds) {
  auto* app = root.add_subcommand(
      "pseudo-label", "keep confidently predicted unlabeled records with soft labels");
  auto& flags = add_flags(cmds, app, {"pseudo_threshold"});
  auto models = std::make_shared<std::vector<std::string>>();
  auto data = std::make_shared<std::string>();
  auto out = std::make_shared<std::string>("-");
  app->add_option("--model", *models, "checkpoint (repeatable)")->required()->check(CLI::ExistingFile);
  app->add_option("--data", *data, "unlabeled dataset")->required()->check(CLI::ExistingFile);
  app->add_option("--out", *out, "output dataset, '-' for stdout")->capture_default_str();
  app->callback([&cmds, &flags, models, data, out] {
    cmds.run = [&flags, models, data, out] {
      const RunConfig cfg = flags.resolve();
      std::vector<ModelParams> params;
      std::optional<TokenizerConfig> tok;
      for (const auto& path : *models) {
        Checkpoint c = load_model(path);
        if (tok && !(*tok == c.tokenizer)) {
          throw ArgumentError(fmt::format("{}: tokenizer differs from the first model", path));
        }
        tok = c.tokenizer;
        params.push_back(std::move(c.params));
      }
      const Dataset unlabeled = load_dataset(*data);
      write_output(*out, format_dataset(pseudo_label(params, unlabeled, cfg.train.pseudo_threshold, *tok)));
      return 0;
    };
  });
}

void add_predict(CLI::App& root, Commands& cmds) {
  auto* app = root.add_subcommand("predict", "write class probabilities and scores");
  auto& flags = add_flags(cmds, app, {"gains"});
  auto model = std::make_shared<std::string>();
  auto data = std::make_shared<std::string>();
  auto out = std::make_shared<std::string>("-");
  app->add_option("--model", *model, "checkpoint")->required()->check(CLI::ExistingFile);
  app->add_option("--data", *data, "dataset to score")->required()->check(CLI::ExistingFile);
  app->add_option("--out", *out, "predictions file, '-' for stdout")->capture_default_str();
  app->callback([&cmds, &flags, model, data, out] {
    cmds.run = [&flags, model, data, out] {
      const RunConfig cfg = flags.resolve();
      const auto preds = predict_with(load_model(*model), load_dataset(*data), cfg.gains);
      write_output(*out, format_predictions(preds));
      return 0;
    };
  });
}

void add_evaluate(CLI::App& root, Commands& cmds) {
  auto* app = root.add_subcommand("evaluate", "per-query NDCG of a predictions file");
  auto& flags = add_flags(cmds, app, {"gains"});
  auto predictions = std::make_shared<std::string>();
  auto truth = std::make_shared<std::string>();
  auto out = std::make_shared<std::string>("-");
  app->add_option("--predictions", *predictions, "predictions file")
      ->required()
      ->check(CLI::ExistingFile);
  app->add_option("--truth", *truth, "labeled dataset")->required()->check(CLI::ExistingFile);
  app->add_option("--out", *out, "evaluation report, '-' for stdout")->capture_default_str();
  app->callback([&cmds, &flags, predictions, truth, out] {
    cmds.run = [&flags, predictions, truth, out] {
      const RunConfig cfg = flags.resolve();
      const auto report = evaluate(load_predictions(*predictions), load_dataset(*truth), cfg.gains);
      write_output(*out, format_evaluation(report));
      return 0;
    };
  });
}

void add_ensemble(CLI::App& root, Commands& cmds) {
  auto* app = root.add_subcommand(
      "ensemble", "fit blend weights on validation predictions, or apply given weights");
  auto& flags = add_flags(cmds, app, {"gains", "corr_penalty"});
  auto predictions = std::make_shared<std::vector<std::string>>();
  auto truth = std::make_shared<std::string>();
  auto weights_in = std::make_shared<std::string>();
  auto weights_out = std::make_shared<std::string>();
  auto out = std::make_shared<std::string>("-");
  app->add_option("--predictions", *predictions, "predictions file (repeatable)")
      ->required()
      ->check(CLI::ExistingFile);
  auto* truth_opt = app->add_option("--truth", *truth, "labeled dataset to fit weights on")
                        ->check(CLI::ExistingFile);
  app->add_option("--weights", *weights_in, "weights file to apply instead of fitting")
      ->check(CLI::ExistingFile)
      ->excludes(truth_opt);
  app->add_option("--save-weights", *weights_out, "where to write fitted weights");
  app->add_option("--out", *out, "blended predictions, '-' for stdout")->capture_default_str();
  app->callback([&cmds, &flags, predictions, truth, weights_in, weights_out, out] {
    cmds.run = [&flags, predictions, truth, weights_in, weights_out, out] {
      const RunConfig cfg = flags.resolve();
      std::vector<PredictionSet> sets;
      for (const auto& p : *predictions) sets.push_back(load_predictions(p));
      EnsembleWeights weights;
      if (!weights_in->empty()) {
        auto [names, w] = parse_weights(read_file(*weights_in), *weights_in);
        if (names != *predictions) {
          throw ArgumentError("--weights: model names must match --predictions in order");
        }
        weights = std::move(w);
      } else {
        if (truth->empty()) throw ArgumentError("ensemble needs --truth or --weights");
        const auto result = optimize_weights(sets, load_dataset(*truth), cfg.gains, cfg.corr_penalty);
        weights = result.weights;
        std::cerr << fmt::format("blended ndcg {}; best single {}\n", format_double(result.ndcg),
                                 format_double(*std::max_element(result.solo_ndcg.begin(),
                                                                 result.solo_ndcg.end())));
        if (!weights_out->empty()) write_output(*weights_out, format_weights(*predictions, weights));
      }
      write_output(*out, format_predictions(blend(sets, weights, cfg.gains)));
      return 0;
    };
  });
}

void add_rank(CLI::App& root, Commands& cmds) {
  auto* app = root.add_subcommand("rank", "predict, blend and write the ranked submission");
  auto& flags = add_flags(cmds, app, {"gains"});
  auto models = std::make_shared<std::vector<std::string>>();
  auto weights_in = std::make_shared<std::string>();
  auto data = std::make_shared<std::string>();
  auto out = std::make_shared<std::string>("-");
  app->add_option("--model", *models, "checkpoint (repeatable)")->required()->check(CLI::ExistingFile);
  app->add_option("--weights", *weights_in, "blend weights; uniform when omitted")
      ->check(CLI::ExistingFile);
  app->add_option("--data", *data, "dataset to rank")->required()->check(CLI::ExistingFile);
  app->add_option("--out", *out, "submission file, '-' for stdout")->capture_default_str();
  app->callback([&cmds, &flags, models, weights_in, data, out] {
    cmds.run = [&flags, models, weights_in, data, out] {
      const RunConfig cfg = flags.resolve();
      const Dataset records = load_dataset(*data);
      std::vector<PredictionSet> sets;
      for (const auto& m : *models) sets.push_back(predict_with(load_model(m), records, cfg.gains));
      EnsembleWeights weights(sets.size(), 1.0 / static_cast<double>(sets.size()));
      if (!weights_in->empty()) {
        auto [names, w] = parse_weights(read_file(*weights_in), *weights_in);
        if (names != *models) {
          throw ArgumentError("--weights: model names must match --model in order");
        }
        weights = std::move(w);
      }
      write_output(*out, format_submission(blend(sets, weights, cfg.gains)));
      return 0;
    };
  });
}

std::string one_line(std::string s) {
  for (char& c : s) {
    if (c == '\n' || c == '\r') c = ' ';
  }
  return s;
}

int run(int argc, char** argv) {
  CLI::App app{"ESCI product search ranking pipeline", "esci"};
  app.require_subcommand(1);
  app.set_help_all_flag("--help-all", "help for every subcommand");
  Commands cmds;
  add_ingest(app, cmds);
  add_synth(app, cmds);
  add_train(app, cmds);
  add_distill(app, cmds);
  add_pseudo_label(app, cmds);
  add_predict(app, cmds);
  add_evaluate(app, cmds);
  add_ensemble(app, cmds);
  add_rank(app, cmds);
  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "error: usage: " << one_line(e.what()) << "\n";
    return 2;
  }
  try {
    return cmds.run();
  } catch (const Error& e) {
    std::cerr << "error: " << e.kind() << ": " << one_line(e.what()) << "\n";
  } catch (const fs::filesystem_error& e) {
    std::cerr << "error: io: " << one_line(e.what()) << "\n";
  } catch (const std::exception& e) {
    std::cerr << "error: internal: " << one_line(e.what()) << "\n";
  }
  return 1;
}

}  // namespace
}  // namespace esci

int main(int argc, char** argv) { return esci::run(argc, argv); }
