#pragma once

#include <functional>
#include <span>
#include <vector>

#include "sdmcl/numerics.hpp"
#include "sdmcl/optimizers.hpp"

namespace sdmcl {

/// Non-owning view over a model's parameter blocks in a fixed canonical
/// order. Regularizers and optimizers address parameters through this view
/// so they stay model-agnostic.
struct ParamView {
    std::vector<std::span<Real>> blocks;

    std::size_t total() const {
        std::size_t n = 0;
        for (const auto& b : blocks) n += b.size();
        return n;
    }
    std::vector<Real> gather() const {
        std::vector<Real> out;
        out.reserve(total());
        for (const auto& b : blocks) out.insert(out.end(), b.begin(), b.end());
        return out;
    }
    void scatter(std::span<const Real> flat) {
        std::size_t off = 0;
        for (auto& b : blocks) {
            for (Real& x : b) x = flat[off++];
        }
    }
};

/// Gradient storage matching a ParamView block for block.
struct GradBlocks {
    std::vector<std::vector<Real>> blocks;

    static GradBlocks like(const ParamView& view) {
        GradBlocks g;
        g.blocks.reserve(view.blocks.size());
        for (const auto& b : view.blocks) g.blocks.emplace_back(b.size(), Real(0));
        return g;
    }
    void zero() {
        for (auto& b : blocks)
            for (Real& x : b) x = 0;
    }
    void add_scaled(const GradBlocks& other, Real scale) {
        for (std::size_t i = 0; i < blocks.size(); ++i)
            for (std::size_t j = 0; j < blocks[i].size(); ++j)
                blocks[i][j] += scale * other.blocks[i][j];
    }
    void scale(Real s) {
        for (auto& b : blocks)
            for (Real& x : b) x *= s;
    }
};

/// Per-block optimizer state bundle.
struct BlockOptimizerState {
    std::vector<OptimizerState> states;
};

/// Applies one optimizer step per block.
void optimizer_step_blocks(const OptimizerConfig& cfg, BlockOptimizerState& st,
                           ParamView& params, const GradBlocks& grads);

/// Hooks a training loop offers to regularizers: adjust the averaged batch
/// gradient before the step, observe the parameters after it.
struct TrainHooks {
    std::function<void(const ParamView&, GradBlocks&)> modify_grads;
    std::function<void(std::span<const Real> before, const ParamView& after,
                       const GradBlocks& grads)>
        after_step;
};

}  // namespace sdmcl
