#pragma once

#include <cstddef>
#include <vector>

#include "afa/tensor.hpp"

namespace afa {

/// Synchronized frames and action vectors. frames[t] is C x H x W.
struct Sequence {
  std::vector<Tensor> frames;
  std::vector<std::vector<float>> actions;

  std::size_t length() const { return frames.size(); }
};

struct Dataset {
  std::size_t height = 0;
  std::size_t width = 0;
  std::size_t channels = 0;
  std::size_t action_dim = 0;
  std::vector<Sequence> sequences;

  /// Throws std::invalid_argument when any sequence disagrees with the global dims.
  void validate() const;
};

}  // namespace afa
