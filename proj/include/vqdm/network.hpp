#pragma once

#include <optional>
#include <vector>

#include "vqdm/bundle.hpp"
#include "vqdm/tensor.hpp"

namespace vqdm {

// Runs every non-head layer of `chain` on a [C,H,W] input. Heads are left to
// the caller, which owns their interpretation (leaf parameters or prior
// distribution). class_embedding layers need `class_id`.
Tensor run_chain(const std::vector<LayerSpec>& chain, const ModelBundle& bundle, Tensor x,
                 std::optional<std::size_t> class_id = std::nullopt);

// Single layer, exposed for composition tests.
Tensor apply_layer(const LayerSpec& layer, const ModelBundle& bundle, const Tensor& x,
                   std::optional<std::size_t> class_id);

}  // namespace vqdm
