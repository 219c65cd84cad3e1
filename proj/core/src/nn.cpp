#include "profiler/nn.hpp"

#include <cmath>
#include <stdexcept>

#include "profiler/errors.hpp"

namespace profiler::nn {

Tensor glorot_uniform(std::vector<std::size_t> shape, std::size_t fan_in, std::size_t fan_out,
                      SplitMix64& rng) {
    const double a = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
    Tensor t(std::move(shape));
    for (std::size_t i = 0; i < t.numel(); ++i) t[i] = rng.next_uniform(-a, a);
    return t;
}

// ---- GRU --------------------------------------------------------------------

GruParams::GruParams(const std::string& prefix, std::size_t d_in, std::size_t d_h,
                     SplitMix64& rng) {
    auto weight = [&](const char* name, std::size_t rows) {
        return Parameter(prefix + "." + name, glorot_uniform({rows, d_h}, rows, d_h, rng), true);
    };
    auto bias = [&](const char* name) {
        return Parameter(prefix + "." + name, Tensor({d_h}), false);
    };
    w_z = weight("w_z", d_in); u_z = weight("u_z", d_h); b_z = bias("b_z");
    w_r = weight("w_r", d_in); u_r = weight("u_r", d_h); b_r = bias("b_r");
    w_h = weight("w_h", d_in); u_h = weight("u_h", d_h); b_h = bias("b_h");
}

void GruParams::collect(std::vector<Parameter*>& out) {
    for (Parameter* p : {&w_z, &u_z, &b_z, &w_r, &u_r, &b_r, &w_h, &u_h, &b_h}) out.push_back(p);
}

Tape::Id stage_param(Tape& tape, const Parameter& p, StageSlots* slots) {
    const auto id = tape.leaf_of(p);
    if (slots) slots->emplace_back(&p, id);
    return id;
}

StagedGru stage(Tape& tape, const GruParams& p, StageSlots* slots) {
    return StagedGru{stage_param(tape, p.w_z, slots), stage_param(tape, p.u_z, slots),
                     stage_param(tape, p.b_z, slots), stage_param(tape, p.w_r, slots),
                     stage_param(tape, p.u_r, slots), stage_param(tape, p.b_r, slots),
                     stage_param(tape, p.w_h, slots), stage_param(tape, p.u_h, slots),
                     stage_param(tape, p.b_h, slots)};
}

Tape::Id gru_step(Tape& tape, const StagedGru& p, Tape::Id x, Tape::Id h_prev) {
    const auto z = tape.sigmoid(
        tape.add(tape.add(tape.vecmat(x, p.w_z), tape.vecmat(h_prev, p.u_z)), p.b_z));
    const auto r = tape.sigmoid(
        tape.add(tape.add(tape.vecmat(x, p.w_r), tape.vecmat(h_prev, p.u_r)), p.b_r));
    const auto rh = tape.mul(r, h_prev);
    const auto candidate = tape.tanh(
        tape.add(tape.add(tape.vecmat(x, p.w_h), tape.vecmat(rh, p.u_h)), p.b_h));
    // h' = (1 - z) . h + z . candidate
    return tape.add(tape.sub(h_prev, tape.mul(z, h_prev)), tape.mul(z, candidate));
}

Tape::Id bigru_encode(Tape& tape, const StagedGru& fwd, const StagedGru& bwd, Tape::Id xs,
                      const std::vector<std::uint8_t>& mask) {
    const Tensor& x = tape.value(xs);
    if (x.rank() != 2 || x.dim(0) == 0) throw std::invalid_argument("bigru_encode: bad input");
    const std::size_t steps = x.dim(0);
    if (mask.size() != steps) throw std::invalid_argument("bigru_encode: mask length mismatch");
    bool any = false;
    for (auto m : mask) any = any || m != 0;
    if (!any) throw InputError("bigru_encode: all-masked sequence");

    const std::size_t d_h = tape.value(fwd.b_z).dim(0);
    std::vector<Tape::Id> h_fwd(steps), h_bwd(steps);

    Tape::Id h = tape.constant(Tensor({d_h}));
    for (std::size_t t = 0; t < steps; ++t) {
        if (mask[t]) h = gru_step(tape, fwd, tape.row(xs, t), h);
        h_fwd[t] = h;  // masked step: state carried through unchanged
    }
    h = tape.constant(Tensor({d_h}));
    for (std::size_t t = steps; t-- > 0;) {
        if (mask[t]) h = gru_step(tape, bwd, tape.row(xs, t), h);
        h_bwd[t] = h;
    }

    std::vector<Tape::Id> rows(steps);
    for (std::size_t t = 0; t < steps; ++t) rows[t] = tape.concat({h_fwd[t], h_bwd[t]}, 0);
    return tape.stack_rows(rows);
}

// ---- attention --------------------------------------------------------------

AttentionParams::AttentionParams(const std::string& prefix, std::size_t d, std::size_t d_attn,
                                 SplitMix64& rng) {
    proj = Parameter(prefix + ".W_alpha", glorot_uniform({d, d_attn}, d, d_attn, rng), true);
    proj_bias = Parameter(prefix + ".b", Tensor({d_attn}), false);
    context = Parameter(prefix + ".w", glorot_uniform({d_attn}, d_attn, 1, rng), true);
}

void AttentionParams::collect(std::vector<Parameter*>& out) {
    out.push_back(&proj);
    out.push_back(&proj_bias);
    out.push_back(&context);
}

StagedAttention stage(Tape& tape, const AttentionParams& p, StageSlots* slots) {
    return StagedAttention{stage_param(tape, p.proj, slots),
                           stage_param(tape, p.proj_bias, slots),
                           stage_param(tape, p.context, slots)};
}

AttentionOut attention_pool(Tape& tape, const StagedAttention& p, Tape::Id items,
                            const std::vector<std::uint8_t>& mask) {
    const Tensor& x = tape.value(items);
    if (x.rank() != 2) throw std::invalid_argument("attention_pool: rank-2 items required");
    if (mask.size() != x.dim(0)) throw std::invalid_argument("attention_pool: mask length mismatch");

    Tensor mask_t({mask.size()});
    bool any = false;
    for (std::size_t i = 0; i < mask.size(); ++i) {
        mask_t[i] = mask[i] ? 1.0 : 0.0;
        any = any || mask[i] != 0;
    }
    if (!any) throw InputError("attention_pool: all-masked input");

    const auto contexts = tape.tanh(tape.add(tape.matmul(items, p.proj), p.proj_bias));
    const auto scores = tape.matvec(contexts, p.context);
    const auto weights = tape.masked_softmax(scores, mask_t);
    const auto pooled = tape.weighted_sum(items, weights);
    return AttentionOut{pooled, weights};
}

// ---- character convolutions ---------------------------------------------------

ConvBank::ConvBank(const std::string& prefix, std::size_t d_char, std::size_t n_filters,
                   SplitMix64& rng) {
    for (std::size_t i = 0; i < widths.size(); ++i) {
        const std::size_t w = widths[i];
        kernels[i] = Parameter(prefix + ".kernel" + std::to_string(w),
                               glorot_uniform({w, d_char, n_filters}, w * d_char, n_filters, rng),
                               true);
        biases[i] = Parameter(prefix + ".bias" + std::to_string(w), Tensor({n_filters}), false);
    }
}

void ConvBank::collect(std::vector<Parameter*>& out) {
    for (std::size_t i = 0; i < widths.size(); ++i) {
        out.push_back(&kernels[i]);
        out.push_back(&biases[i]);
    }
}

StagedConv stage(Tape& tape, const ConvBank& p, StageSlots* slots) {
    StagedConv s;
    for (std::size_t i = 0; i < ConvBank::widths.size(); ++i) {
        s.kernels[i] = stage_param(tape, p.kernels[i], slots);
        s.biases[i] = stage_param(tape, p.biases[i], slots);
    }
    return s;
}

Tape::Id conv_encode(Tape& tape, const StagedConv& p, Tape::Id chars, std::size_t n_filters) {
    const Tensor& x = tape.value(chars);
    if (x.rank() != 2) throw std::invalid_argument("conv_encode: rank-2 input required");
    const std::size_t len = x.dim(0);
    if (len < ConvBank::widths.front())
        throw InputError("conv_encode: no valid window (sequence shorter than smallest filter)");

    std::vector<Tape::Id> pooled;
    for (std::size_t i = 0; i < ConvBank::widths.size(); ++i) {
        if (len < ConvBank::widths[i]) {
            // No window of this width fits; this block contributes zeros
            // (the max of an empty ReLU set).
            pooled.push_back(tape.constant(Tensor({n_filters})));
            continue;
        }
        const auto conv = tape.conv1d_valid(chars, p.kernels[i], p.biases[i]);
        pooled.push_back(tape.reduce_max_axis0(tape.relu(conv)));
    }
    return tape.concat(pooled, 0);
}

// ---- dense --------------------------------------------------------------------

DenseParams::DenseParams(const std::string& prefix, std::size_t d_in, std::size_t d_out,
                         SplitMix64& rng) {
    weight = Parameter(prefix + ".weight", glorot_uniform({d_in, d_out}, d_in, d_out, rng), true);
    bias = Parameter(prefix + ".bias", Tensor({d_out}), false);
}

void DenseParams::collect(std::vector<Parameter*>& out) {
    out.push_back(&weight);
    out.push_back(&bias);
}

StagedDense stage(Tape& tape, const DenseParams& p, StageSlots* slots) {
    return StagedDense{stage_param(tape, p.weight, slots), stage_param(tape, p.bias, slots)};
}

Tape::Id dense(Tape& tape, const StagedDense& p, Tape::Id x) {
    const Tensor& xv = tape.value(x);
    if (xv.rank() == 1) return tape.add(tape.vecmat(x, p.weight), p.bias);
    if (xv.rank() == 2) return tape.add(tape.matmul(x, p.weight), p.bias);
    throw std::invalid_argument("dense: rank-1 or rank-2 input required");
}

}  // namespace profiler::nn
