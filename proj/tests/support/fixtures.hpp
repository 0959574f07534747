#pragma once

#include <vector>

#include "mtal/data.hpp"
#include "mtal/trainer.hpp"

namespace mtal::testing {

inline SyntheticTask synthetic_task(InputDims dims, std::size_t classes, std::size_t examples) {
  SyntheticTask t;
  t.dims = dims;
  t.classes = classes;
  t.examples = examples;
  return t;
}

// Two small synthetic tasks, split and normalized.
inline std::vector<TaskData> tiny_tasks(InputDims a = {1, 8, 8}, InputDims b = {1, 12, 12},
                                        double relatedness = 0.9, std::uint64_t seed = 0) {
  SyntheticTaskFamily family;
  family.seed = 11;
  family.relatedness = relatedness;
  family.tasks = {synthetic_task(a, 3, 40), synthetic_task(b, 2, 30)};
  std::vector<TaskData> out;
  for (const auto& g : generate_tasks(family)) {
    out.push_back(prepare_task(g.spec, g.data, seed, SplitMode::Stratified));
  }
  return out;
}

inline MtalConfig tiny_config() {
  MtalConfig cfg;
  cfg.arch.conv_layers = 2;
  cfg.arch.kernels = 3;
  cfg.arch.pool_after = {2};
  cfg.batch_size = 8;
  cfg.epochs = 2;
  cfg.learning_rate = 0.05;
  cfg.lambda = 0.01;
  return cfg;
}

}  // namespace mtal::testing
