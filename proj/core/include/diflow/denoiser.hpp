#pragma once

#include <functional>

#include "diflow/sequence.hpp"
#include "diflow/tensor.hpp"

namespace diflow {

// p_{1|t}: maps a masked state to per-token categorical distributions over
// the clean vocabulary, returned as a streams x length x vocab tensor.
using Denoiser = std::function<nn::Tensor(const MaskedSequence&)>;

}  // namespace diflow
