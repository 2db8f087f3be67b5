#include "sdmcl/params.hpp"

namespace sdmcl {

void optimizer_step_blocks(const OptimizerConfig& cfg, BlockOptimizerState& st,
                           ParamView& params, const GradBlocks& grads) {
    if (params.blocks.size() != grads.blocks.size()) {
        throw ShapeMismatch("optimizer_step_blocks: block count mismatch");
    }
    if (st.states.size() < params.blocks.size()) {
        st.states.resize(params.blocks.size());
    }
    for (std::size_t b = 0; b < params.blocks.size(); ++b) {
        optimizer_step(cfg, st.states[b], params.blocks[b],
                       std::span<const Real>(grads.blocks[b]));
    }
}

}  // namespace sdmcl
