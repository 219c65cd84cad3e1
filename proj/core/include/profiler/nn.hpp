#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "profiler/rng.hpp"
#include "profiler/tape.hpp"

namespace profiler::nn {

using ad::Parameter;
using ad::Tape;

/// (parameter, staged leaf id) pairs in staging order; the hook for gradient
/// harvesting after backward().
using StageSlots = std::vector<std::pair<const Parameter*, Tape::Id>>;

/// Glorot-uniform init: U(-a, a) with a = sqrt(6 / (fan_in + fan_out)),
/// drawn row-major from the given generator. Biases start at zero.
Tensor glorot_uniform(std::vector<std::size_t> shape, std::size_t fan_in, std::size_t fan_out,
                      SplitMix64& rng);

/// Stages one parameter, recording a slot when a recorder is given.
Tape::Id stage_param(Tape& tape, const Parameter& p, StageSlots* slots);

// ---- GRU --------------------------------------------------------------------

/// z = sig(Wz x + Uz h + bz); r = sig(Wr x + Ur h + br);
/// hc = tanh(Wh x + Uh (r.h) + bh); h' = (1-z).h + z.hc
struct GruParams {
    Parameter w_z, u_z, b_z;
    Parameter w_r, u_r, b_r;
    Parameter w_h, u_h, b_h;

    GruParams() = default;
    GruParams(const std::string& prefix, std::size_t d_in, std::size_t d_h, SplitMix64& rng);

    std::size_t d_in() const { return w_z.value.dim(0); }
    std::size_t d_h() const { return w_z.value.dim(1); }
    void collect(std::vector<Parameter*>& out);
};

struct StagedGru {
    Tape::Id w_z, u_z, b_z, w_r, u_r, b_r, w_h, u_h, b_h;
};
StagedGru stage(Tape& tape, const GruParams& p, StageSlots* slots = nullptr);

Tape::Id gru_step(Tape& tape, const StagedGru& p, Tape::Id x, Tape::Id h_prev);

/// Forward pass left-to-right, backward pass right-to-left; masked steps carry
/// the state through unchanged. Returns the (T, 2*d_h) matrix of per-step
/// [h_fwd; h_bwd] states. Throws on an all-masked sequence.
Tape::Id bigru_encode(Tape& tape, const StagedGru& fwd, const StagedGru& bwd, Tape::Id xs,
                      const std::vector<std::uint8_t>& mask);

// ---- attention --------------------------------------------------------------

/// Bahdanau-style pooling: scores = tanh(items W + b) . context, weights =
/// masked softmax of scores, output = weighted sum of items.
struct AttentionParams {
    Parameter proj;       // (d, d_a), checkpoint name "<prefix>.W_alpha"
    Parameter proj_bias;  // (d_a,), "<prefix>.b"
    Parameter context;    // (d_a,), "<prefix>.w"

    AttentionParams() = default;
    AttentionParams(const std::string& prefix, std::size_t d, std::size_t d_attn, SplitMix64& rng);

    void collect(std::vector<Parameter*>& out);
};

struct StagedAttention {
    Tape::Id proj, proj_bias, context;
};
StagedAttention stage(Tape& tape, const AttentionParams& p, StageSlots* slots = nullptr);

struct AttentionOut {
    Tape::Id pooled;   // (d,)
    Tape::Id weights;  // (n,), sums to 1, exact zeros at masked slots
};
AttentionOut attention_pool(Tape& tape, const StagedAttention& p, Tape::Id items,
                            const std::vector<std::uint8_t>& mask);

// ---- character convolutions ---------------------------------------------------

/// Temporal convolutions of widths 3/6/9 over the char-embedding sequence,
/// each followed by ReLU and a global max-pool, outputs concatenated.
struct ConvBank {
    static constexpr std::array<std::size_t, 3> widths{3, 6, 9};
    std::array<Parameter, 3> kernels;  // (width, d_char, n_filters)
    std::array<Parameter, 3> biases;   // (n_filters,)

    ConvBank() = default;
    ConvBank(const std::string& prefix, std::size_t d_char, std::size_t n_filters, SplitMix64& rng);

    std::size_t n_filters() const { return biases[0].value.dim(0); }
    void collect(std::vector<Parameter*>& out);
};

struct StagedConv {
    std::array<Tape::Id, 3> kernels;
    std::array<Tape::Id, 3> biases;
};
StagedConv stage(Tape& tape, const ConvBank& p, StageSlots* slots = nullptr);

/// chars is the (L, d_char) embedding matrix of the real (unmasked) prefix.
/// Widths longer than L contribute zeros; L below the smallest width is an
/// error (no valid window anywhere).
Tape::Id conv_encode(Tape& tape, const StagedConv& p, Tape::Id chars, std::size_t n_filters);

// ---- dense --------------------------------------------------------------------

struct DenseParams {
    Parameter weight;  // (d_in, d_out)
    Parameter bias;    // (d_out,)

    DenseParams() = default;
    DenseParams(const std::string& prefix, std::size_t d_in, std::size_t d_out, SplitMix64& rng);

    void collect(std::vector<Parameter*>& out);
};

struct StagedDense {
    Tape::Id weight, bias;
};
StagedDense stage(Tape& tape, const DenseParams& p, StageSlots* slots = nullptr);

/// y = W^T x + b for a vector x; rows independently for a matrix.
Tape::Id dense(Tape& tape, const StagedDense& p, Tape::Id x);

}  // namespace profiler::nn
