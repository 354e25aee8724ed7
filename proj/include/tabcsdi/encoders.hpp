#pragma once

#include <string>
#include <vector>

#include "tabcsdi/optim.hpp"
#include "tabcsdi/table.hpp"
#include "tabcsdi/tape.hpp"
#include "tabcsdi/tensor.hpp"

namespace tabcsdi {

enum class Scheme { onehot, analog_bits, ft };

Scheme scheme_from_string(const std::string& s);
std::string scheme_to_string(Scheme s);

// Width of a categorical column in encoded space. Binary columns use a single
// +-1 column under both one-hot and analog bits, which makes the two schemes
// coincide on binary-only data.
int onehot_width(int cardinality);
int analog_bits_width(int cardinality);

// +-1 codes. encode_* writes `width` values into out.
void encode_onehot(int index, int cardinality, real_t* out);
int decode_onehot(const real_t* v, int cardinality);
void encode_analog_bits(int index, int cardinality, real_t* out);
int decode_analog_bits(const real_t* v, int cardinality);

// Mapping from original columns to disjoint spans in encoded space.
struct ColumnSpan {
    int start = 0;
    int width = 0;
};

struct EncodingSpec {
    Scheme scheme = Scheme::onehot;
    int embed_dim = 0; // ft only
    std::vector<ColumnSpan> spans;
    int encoded_width = 0;

    static EncodingSpec make(const TableSchema& schema, Scheme scheme, int embed_dim = 0);
};

// Feature-tokenizer parameters: a scale vector per numerical column and an
// embedding table per categorical column, both trained jointly with the
// denoiser. Numerical scale entries are kept away from zero so element-wise
// division recovery stays defined.
struct TokenizerParams {
    static constexpr double kNumericBound = 0.05;

    int embed_dim = 0;
    std::vector<Parameter> columns; // [e] for numerical, [K, e] for categorical

    static TokenizerParams init(const TableSchema& schema, int embed_dim, Rng& rng);

    // Re-applies the |w| >= bound constraint after an optimizer step.
    void clamp_numeric(const TableSchema& schema);

    std::vector<Parameter*> parameters();
};

real_t ft_decode_numeric(const real_t* token, const real_t* weights, int embed_dim);
int ft_decode_categorical(const real_t* token, const Tensor& embeddings);

// Encoded view of a MaskedTable: the model input matrix plus masks broadcast
// over each column's span.
struct EncodedTable {
    Tensor x;        // [rows, encoded_width]
    Tensor observed; // same shape, 0/1
    Tensor target;   // same shape, 0/1
};

EncodedTable encode_table(const MaskedTable& table, const TableSchema& schema, const EncodingSpec& spec,
                          const TokenizerParams* params = nullptr);

// Broadcasts a rows x cols cell mask over the encoded spans.
Tensor broadcast_mask(const std::vector<uint8_t>& mask, int rows, int cols, const EncodingSpec& spec);

// Tape-side encoding for joint tokenizer training: returns the node id of the
// encoded [rows, width] matrix. `bound` maps each tokenizer Parameter to its
// leaf id on this tape.
int encode_table_on_tape(Tape& tape, const MaskedTable& table, const TableSchema& schema, const EncodingSpec& spec,
                         const TokenizerParams& params, const std::vector<int>& param_leaf_ids);

// Per-cell decode of generated encoded rows back to table values (numerical
// values stay in normalized space; categoricals come back as indices).
std::vector<double> decode_table(const Tensor& encoded, const TableSchema& schema, const EncodingSpec& spec,
                                 const TokenizerParams* params = nullptr);

} // namespace tabcsdi
