/* Copyright 2026 The TCC Segmentation Authors. All Rights Reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/
#include "tcc/config.hpp"

#include <fstream>
#include <functional>
#include <sstream>

#include "tcc/common.hpp"

namespace tcc {
namespace {

struct Field {
  const char* section;
  const char* key;
  std::function<void(TrainConfig&, const std::string&)> set;
  std::function<std::string(const TrainConfig&)> get;
};

std::string Trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::int64_t ToInt(const std::string& v, const std::string& key) {
  try {
    std::size_t used = 0;
    const auto n = std::stoll(v, &used);
    if (used == v.size()) return n;
  } catch (const std::logic_error&) {
  }
  throw ConfigError("key '" + key + "': expected an integer, got '" + v + "'");
}

double ToDouble(const std::string& v, const std::string& key) {
  try {
    std::size_t used = 0;
    const auto d = std::stod(v, &used);
    if (used == v.size()) return d;
  } catch (const std::logic_error&) {
  }
  throw ConfigError("key '" + key + "': expected a number, got '" + v + "'");
}

bool ToBool(const std::string& v, const std::string& key) {
  if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
  if (v == "false" || v == "0" || v == "no" || v == "off") return false;
  throw ConfigError("key '" + key + "': expected true/false, got '" + v + "'");
}

std::vector<std::int64_t> ToIntList(const std::string& v, const std::string& key) {
  std::vector<std::int64_t> out;
  std::stringstream ss(v);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(ToInt(Trim(item), key));
  if (out.empty()) throw ConfigError("key '" + key + "': empty list");
  return out;
}

std::string FromIntList(const std::vector<std::int64_t>& v) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) s += ",";
    s += std::to_string(v[i]);
  }
  return s;
}

#define TCC_INT_FIELD(sec, name, member)                                     \
  Field {                                                                    \
    sec, name,                                                               \
        [](TrainConfig& c, const std::string& v) {                           \
          c.member = ToInt(v, std::string(sec) + "." + name);                \
        },                                                                   \
        [](const TrainConfig& c) { return std::to_string(c.member); }        \
  }
#define TCC_DOUBLE_FIELD(sec, name, member)                                  \
  Field {                                                                    \
    sec, name,                                                               \
        [](TrainConfig& c, const std::string& v) {                           \
          c.member = ToDouble(v, std::string(sec) + "." + name);             \
        },                                                                   \
        [](const TrainConfig& c) { return FormatDouble(c.member); }            \
  }
#define TCC_LIST_FIELD(sec, name, member)                                    \
  Field {                                                                    \
    sec, name,                                                               \
        [](TrainConfig& c, const std::string& v) {                           \
          c.member = ToIntList(v, std::string(sec) + "." + name);            \
        },                                                                   \
        [](const TrainConfig& c) { return FromIntList(c.member); }           \
  }

const std::vector<Field>& Fields() {
  static const std::vector<Field> fields = {
      TCC_LIST_FIELD("students", "conv_widths", students.conv.widths),
      TCC_LIST_FIELD("students", "conv_strides", students.conv.strides),
      TCC_LIST_FIELD("students", "conv_dilations", students.conv.dilations),
      TCC_INT_FIELD("students", "conv_norm_groups", students.conv.norm_groups),
      TCC_INT_FIELD("students", "vit_patch_size", students.attention.patch_size),
      TCC_INT_FIELD("students", "vit_embed_dim", students.attention.embed_dim),
      TCC_INT_FIELD("students", "vit_num_heads", students.attention.num_heads),
      TCC_INT_FIELD("students", "vit_num_blocks", students.attention.num_blocks),
      TCC_INT_FIELD("students", "vit_mlp_ratio", students.attention.mlp_ratio),
      Field{"students", "vit_positional",
            [](TrainConfig& c, const std::string& v) {
              if (v == "learned") {
                c.students.attention.positional = PositionalEmbedding::kLearned;
              } else if (v == "none") {
                c.students.attention.positional = PositionalEmbedding::kNone;
              } else {
                throw ConfigError("students.vit_positional: expected learned|none");
              }
            },
            [](const TrainConfig& c) {
              return ToString(c.students.attention.positional);
            }},
      TCC_DOUBLE_FIELD("losses", "lambda", losses.lambda),
      Field{"losses", "ramp_iterations",
            [](TrainConfig& c, const std::string& v) {
              c.losses.ramp_iterations =
                  v == "auto" ? -1 : ToInt(v, "losses.ramp_iterations");
            },
            [](const TrainConfig& c) {
              return c.losses.ramp_iterations < 0
                         ? std::string("auto")
                         : std::to_string(c.losses.ramp_iterations);
            }},
      Field{"losses", "prototype_scope",
            [](TrainConfig& c, const std::string& v) {
              if (v == "image") {
                c.losses.prototype_scope = PrototypeScope::kImage;
              } else if (v == "batch") {
                c.losses.prototype_scope = PrototypeScope::kBatch;
              } else {
                throw ConfigError("losses.prototype_scope: expected image|batch");
              }
            },
            [](const TrainConfig& c) {
              return std::string(c.losses.prototype_scope == PrototypeScope::kImage
                                     ? "image"
                                     : "batch");
            }},
      Field{"losses", "unlabeled_normalizer",
            [](TrainConfig& c, const std::string& v) {
              if (v == "own") {
                c.losses.unlabeled_normalizer = UnlabeledNormalizer::kOwnBatch;
              } else if (v == "labeled") {
                c.losses.unlabeled_normalizer = UnlabeledNormalizer::kLabeledBatch;
              } else {
                throw ConfigError("losses.unlabeled_normalizer: expected own|labeled");
              }
            },
            [](const TrainConfig& c) {
              return std::string(c.losses.unlabeled_normalizer ==
                                         UnlabeledNormalizer::kOwnBatch
                                     ? "own"
                                     : "labeled");
            }},
      Field{"data", "dataset",
            [](TrainConfig& c, const std::string& v) { c.data.dataset = v; },
            [](const TrainConfig& c) { return c.data.dataset; }},
      Field{"data", "ratio",
            [](TrainConfig& c, const std::string& v) {
              c.data.ratio = Ratio::Parse(v);
            },
            [](const TrainConfig& c) { return c.data.ratio.ToString(); }},
      Field{"data", "partition",
            [](TrainConfig& c, const std::string& v) { c.data.partition = v; },
            [](const TrainConfig& c) { return c.data.partition; }},
      TCC_INT_FIELD("data", "batch_size", data.batch_size),
      TCC_INT_FIELD("data", "unlabeled_batch_size", data.unlabeled_batch_size),
      Field{"data", "cutmix",
            [](TrainConfig& c, const std::string& v) {
              c.data.cutmix = ToBool(v, "data.cutmix");
            },
            [](const TrainConfig& c) {
              return std::string(c.data.cutmix ? "true" : "false");
            }},
      Field{"training", "mode",
            [](TrainConfig& c, const std::string& v) {
              c.training.mode = ParseTrainMode(v);
            },
            [](const TrainConfig& c) { return ToString(c.training.mode); }},
      TCC_INT_FIELD("training", "max_iterations", training.max_iterations),
      TCC_DOUBLE_FIELD("training", "base_lr", training.base_lr),
      TCC_DOUBLE_FIELD("training", "weight_decay", training.weight_decay),
      TCC_DOUBLE_FIELD("training", "adam_beta1", training.adam_beta1),
      TCC_DOUBLE_FIELD("training", "adam_beta2", training.adam_beta2),
      TCC_DOUBLE_FIELD("training", "adam_eps", training.adam_eps),
      TCC_INT_FIELD("training", "eval_interval", training.eval_interval),
      TCC_INT_FIELD("training", "checkpoint_interval",
                    training.checkpoint_interval),
      Field{"training", "seed",
            [](TrainConfig& c, const std::string& v) {
              const auto n = ToInt(v, "training.seed");
              if (n < 0) throw ConfigError("training.seed must be >= 0");
              c.training.seed = static_cast<std::uint64_t>(n);
            },
            [](const TrainConfig& c) { return std::to_string(c.training.seed); }},
      Field{"training", "threads",
            [](TrainConfig& c, const std::string& v) {
              c.training.threads = static_cast<int>(ToInt(v, "training.threads"));
            },
            [](const TrainConfig& c) { return std::to_string(c.training.threads); }},
  };
  return fields;
}

#undef TCC_INT_FIELD
#undef TCC_DOUBLE_FIELD
#undef TCC_LIST_FIELD

}  // namespace

void SetConfigValue(TrainConfig& config, const std::string& section,
                    const std::string& key, const std::string& value) {
  bool section_known = false;
  for (const auto& f : Fields()) {
    if (section != f.section) continue;
    section_known = true;
    if (key == f.key) {
      f.set(config, value);
      return;
    }
  }
  if (!section_known) throw ConfigError("unknown config section '" + section + "'");
  throw ConfigError("unknown config key '" + section + "." + key + "'");
}

TrainConfig ParseConfig(const std::string& text) {
  TrainConfig config;
  std::istringstream in(text);
  std::string line, section;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = Trim(line);
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']') {
        throw ConfigError("line " + std::to_string(line_no) + ": bad section header");
      }
      section = Trim(line.substr(1, line.size() - 2));
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError("line " + std::to_string(line_no) + ": expected key = value");
    }
    if (section.empty()) {
      throw ConfigError("line " + std::to_string(line_no) +
                        ": key outside of a [section]");
    }
    SetConfigValue(config, section, Trim(line.substr(0, eq)),
                   Trim(line.substr(eq + 1)));
  }
  return config;
}

TrainConfig LoadConfig(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return ParseConfig(ss.str());
}

std::string ResolvedConfigText(const TrainConfig& config) {
  std::ostringstream os;
  std::string section;
  for (const auto& f : Fields()) {
    if (section != f.section) {
      if (!section.empty()) os << "\n";
      section = f.section;
      os << "[" << section << "]\n";
    }
    os << f.key << " = " << f.get(config) << "\n";
  }
  return os.str();
}

void ApplyOverride(TrainConfig& config, const std::string& assignment) {
  const auto eq = assignment.find('=');
  const auto dot = assignment.find('.');
  if (eq == std::string::npos || dot == std::string::npos || dot > eq) {
    throw ConfigError("override '" + assignment + "' is not section.key=value");
  }
  SetConfigValue(config, Trim(assignment.substr(0, dot)),
                 Trim(assignment.substr(dot + 1, eq - dot - 1)),
                 Trim(assignment.substr(eq + 1)));
}

std::vector<std::string> ConfigKeys() {
  std::vector<std::string> keys;
  for (const auto& f : Fields()) {
    keys.push_back(std::string(f.section) + "." + f.key);
  }
  return keys;
}

}  // namespace tcc
