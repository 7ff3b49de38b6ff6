#pragma once

#include <optional>
#include <string>

#include "crt/design_model.hpp"
#include "crt/randomization.hpp"
#include "crt/statistics.hpp"

namespace crt {

// Everything a TOML config may declare. Factor order follows declaration
// order in the file.
struct StudyConfig {
  Schema schema;
  RandomizationScheme scheme;
  std::optional<StatisticSpec> statistic;
  std::optional<CoarseningSpec> coarsening;
  ResamplePlan plan;
  bool has_seed = false;
};

StudyConfig parse_config(const std::string& toml_text, const std::string& source = "config");
StudyConfig load_config(const std::string& path);

// A file holding only a [coarsen] table, checked against the schema.
CoarseningSpec load_coarsening(const std::string& path, const Schema& schema);
CoarseningSpec parse_coarsening(const std::string& toml_text, const Schema& schema,
                                const std::string& source = "coarsen");

std::string to_toml(const StudyConfig& cfg);

bool same_config(const StudyConfig& a, const StudyConfig& b);

}  // namespace crt
