#pragma once

// Per-channel standardization statistics shared by datasets and checkpoints.

#include <vector>

#include "sok/tensor.hpp"

namespace sok {

struct ChannelStats {
  std::vector<double> mean;
  std::vector<double> std;

  bool empty() const noexcept { return mean.empty(); }
  friend bool operator==(const ChannelStats&, const ChannelStats&) = default;
};

/// Mean and population std per channel of fields shaped [S, C, spatial...].
ChannelStats compute_channel_stats(const RealTensor& fields);
RealTensor normalize(const RealTensor& fields, const ChannelStats& stats);
RealTensor denormalize(const RealTensor& fields, const ChannelStats& stats);

}  // namespace sok
