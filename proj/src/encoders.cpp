#include "tabcsdi/encoders.hpp"

#include <algorithm>
#include <cmath>

namespace tabcsdi {

Scheme scheme_from_string(const std::string& s) {
    if (s == "onehot") return Scheme::onehot;
    if (s == "analog_bits") return Scheme::analog_bits;
    if (s == "ft") return Scheme::ft;
    fail("encoding scheme must be onehot | analog_bits | ft, got '", s, "'");
}

std::string scheme_to_string(Scheme s) {
    switch (s) {
    case Scheme::onehot: return "onehot";
    case Scheme::analog_bits: return "analog_bits";
    case Scheme::ft: return "ft";
    }
    return "?";
}

int onehot_width(int cardinality) {
    if (cardinality < 2) fail("onehot: cardinality ", cardinality, " < 2");
    return cardinality == 2 ? 1 : cardinality;
}

int analog_bits_width(int cardinality) {
    if (cardinality < 2) fail("analog_bits: cardinality ", cardinality, " < 2");
    int w = 0;
    while ((1 << w) < cardinality) ++w;
    return w;
}

void encode_onehot(int index, int cardinality, real_t* out) {
    if (index < 0 || index >= cardinality)
        fail("encode_onehot: index ", index, " out of range [0,", cardinality, ")");
    if (cardinality == 2) {
        out[0] = index == 1 ? real_t(1) : real_t(-1);
        return;
    }
    for (int i = 0; i < cardinality; ++i) out[i] = real_t(-1);
    out[index] = real_t(1);
}

int decode_onehot(const real_t* v, int cardinality) {
    if (cardinality == 2) return v[0] > real_t(0) ? 1 : 0;
    int best = 0;
    for (int i = 1; i < cardinality; ++i)
        if (v[i] > v[best]) best = i; // ties keep the lowest index
    return best;
}

void encode_analog_bits(int index, int cardinality, real_t* out) {
    if (index < 0 || index >= cardinality)
        fail("encode_analog_bits: index ", index, " out of range [0,", cardinality, ")");
    int w = analog_bits_width(cardinality);
    for (int b = 0; b < w; ++b) {
        int bit = (index >> (w - 1 - b)) & 1; // MSB first
        out[b] = bit ? real_t(1) : real_t(-1);
    }
}

int decode_analog_bits(const real_t* v, int cardinality) {
    int w = analog_bits_width(cardinality);
    int code = 0;
    for (int b = 0; b < w; ++b) {
        code <<= 1;
        if (v[b] > real_t(0)) code |= 1;
    }
    if (code < cardinality) return code;
    // invalid code: snap to the valid code at minimum Hamming distance,
    // ties toward the lowest index
    int best = 0, best_dist = w + 1;
    for (int cand = 0; cand < cardinality; ++cand) {
        int dist = __builtin_popcount(static_cast<unsigned>(cand ^ code));
        if (dist < best_dist) {
            best = cand;
            best_dist = dist;
        }
    }
    return best;
}

EncodingSpec EncodingSpec::make(const TableSchema& schema, Scheme scheme, int embed_dim) {
    EncodingSpec spec;
    spec.scheme = scheme;
    if (scheme == Scheme::ft) {
        if (embed_dim < 1) fail("encoding spec: ft requires embed_dim >= 1, got ", embed_dim);
        spec.embed_dim = embed_dim;
    }
    int start = 0;
    for (const auto& col : schema.columns) {
        int w = 1;
        if (scheme == Scheme::ft) {
            w = spec.embed_dim;
        } else if (col.is_categorical()) {
            w = scheme == Scheme::onehot ? onehot_width(col.cardinality()) : analog_bits_width(col.cardinality());
        }
        spec.spans.push_back({start, w});
        start += w;
    }
    spec.encoded_width = start;
    return spec;
}

TokenizerParams TokenizerParams::init(const TableSchema& schema, int embed_dim, Rng& rng) {
    TokenizerParams p;
    p.embed_dim = embed_dim;
    for (const auto& col : schema.columns) {
        if (col.is_categorical()) {
            Tensor emb = Tensor::randn({col.cardinality(), embed_dim}, rng);
            p.columns.emplace_back("tok." + col.name, std::move(emb));
        } else {
            // uniform magnitude in [bound, 1], random sign
            Tensor w({embed_dim});
            for (int i = 0; i < embed_dim; ++i) {
                double mag = kNumericBound + (1.0 - kNumericBound) * rng.uniform();
                w[i] = static_cast<real_t>(rng.uniform() < 0.5 ? -mag : mag);
            }
            p.columns.emplace_back("tok." + col.name, std::move(w));
        }
    }
    return p;
}

void TokenizerParams::clamp_numeric(const TableSchema& schema) {
    for (size_t c = 0; c < columns.size(); ++c) {
        if (schema.columns[c].is_categorical()) continue;
        Tensor& w = columns[c].value;
        for (int64_t i = 0; i < w.numel(); ++i) {
            double v = static_cast<double>(w[i]);
            if (std::abs(v) < kNumericBound) w[i] = static_cast<real_t>(v < 0 ? -kNumericBound : kNumericBound);
        }
    }
}

std::vector<Parameter*> TokenizerParams::parameters() {
    std::vector<Parameter*> out;
    for (auto& p : columns) out.push_back(&p);
    return out;
}

real_t ft_decode_numeric(const real_t* token, const real_t* weights, int embed_dim) {
    double acc = 0;
    for (int i = 0; i < embed_dim; ++i) acc += static_cast<double>(token[i]) / static_cast<double>(weights[i]);
    return static_cast<real_t>(acc / embed_dim);
}

int ft_decode_categorical(const real_t* token, const Tensor& embeddings) {
    int k = embeddings.dim(0);
    int e = embeddings.dim(1);
    int best = 0;
    double best_d2 = 0;
    for (int c = 0; c < k; ++c) {
        double d2 = 0;
        for (int i = 0; i < e; ++i) {
            double d = static_cast<double>(token[i]) - static_cast<double>(embeddings.at(c, i));
            d2 += d * d;
        }
        if (c == 0 || d2 < best_d2) { // strict < keeps the lowest index on ties
            best = c;
            best_d2 = d2;
        }
    }
    return best;
}

namespace {

void check_spec(const TableSchema& schema, const EncodingSpec& spec, const TokenizerParams* params) {
    if (spec.spans.size() != static_cast<size_t>(schema.ncols()))
        fail("encode: spec covers ", spec.spans.size(), " columns, schema has ", schema.ncols());
    if (spec.scheme == Scheme::ft) {
        if (!params) fail("encode: ft scheme requires tokenizer params");
        if (params->embed_dim != spec.embed_dim)
            fail("encode: tokenizer embed_dim ", params->embed_dim, " vs spec ", spec.embed_dim);
        if (params->columns.size() != static_cast<size_t>(schema.ncols()))
            fail("encode: tokenizer params cover ", params->columns.size(), " columns, schema has ", schema.ncols());
    }
}

} // namespace

Tensor broadcast_mask(const std::vector<uint8_t>& mask, int rows, int cols, const EncodingSpec& spec) {
    Tensor out({rows, spec.encoded_width});
    for (int r = 0; r < rows; ++r) {
        for (int c = 0; c < cols; ++c) {
            if (!mask[static_cast<size_t>(r) * cols + c]) continue;
            const ColumnSpan& span = spec.spans[static_cast<size_t>(c)];
            for (int j = 0; j < span.width; ++j) out.at(r, span.start + j) = real_t(1);
        }
    }
    return out;
}

EncodedTable encode_table(const MaskedTable& table, const TableSchema& schema, const EncodingSpec& spec,
                          const TokenizerParams* params) {
    check_spec(schema, spec, params);
    EncodedTable enc;
    enc.x = Tensor({table.rows, spec.encoded_width});
    enc.observed = broadcast_mask(table.observed, table.rows, table.cols, spec);
    enc.target = broadcast_mask(table.target, table.rows, table.cols, spec);
    for (int r = 0; r < table.rows; ++r) {
        for (int c = 0; c < table.cols; ++c) {
            if (!table.is_observed(r, c)) continue; // unobserved cells stay zero
            const ColumnSpan& span = spec.spans[static_cast<size_t>(c)];
            real_t* out = &enc.x.at(r, span.start);
            const auto& col = schema.columns[static_cast<size_t>(c)];
            double v = table.value(r, c);
            switch (spec.scheme) {
            case Scheme::onehot:
                if (col.is_categorical())
                    encode_onehot(static_cast<int>(v), col.cardinality(), out);
                else
                    out[0] = static_cast<real_t>(v);
                break;
            case Scheme::analog_bits:
                if (col.is_categorical())
                    encode_analog_bits(static_cast<int>(v), col.cardinality(), out);
                else
                    out[0] = static_cast<real_t>(v);
                break;
            case Scheme::ft: {
                const Tensor& pw = params->columns[static_cast<size_t>(c)].value;
                if (col.is_categorical()) {
                    int idx = static_cast<int>(v);
                    if (idx < 0 || idx >= col.cardinality())
                        fail("encode: column '", col.name, "' index ", idx, " out of range");
                    for (int j = 0; j < spec.embed_dim; ++j) out[j] = pw.at(idx, j);
                } else {
                    for (int j = 0; j < spec.embed_dim; ++j) out[j] = static_cast<real_t>(v) * pw[j];
                }
                break;
            }
            }
        }
    }
    return enc;
}

int encode_table_on_tape(Tape& tape, const MaskedTable& table, const TableSchema& schema, const EncodingSpec& spec,
                         const TokenizerParams& params, const std::vector<int>& param_leaf_ids) {
    check_spec(schema, spec, &params);
    if (spec.scheme != Scheme::ft)
        fail("encode_table_on_tape: only the ft scheme has trainable encoder parameters");
    if (param_leaf_ids.size() != params.columns.size())
        fail("encode_table_on_tape: ", param_leaf_ids.size(), " leaf ids for ", params.columns.size(), " columns");
    std::vector<int> tokens;
    for (int c = 0; c < table.cols; ++c) {
        const auto& col = schema.columns[static_cast<size_t>(c)];
        int leaf = param_leaf_ids[static_cast<size_t>(c)];
        if (col.is_categorical()) {
            std::vector<int> indices(static_cast<size_t>(table.rows), 0);
            Tensor obs({table.rows, 1});
            for (int r = 0; r < table.rows; ++r) {
                if (table.is_observed(r, c)) {
                    indices[static_cast<size_t>(r)] = static_cast<int>(table.value(r, c));
                    obs.at(r, 0) = real_t(1);
                }
            }
            int tok = tape.embedding_lookup(leaf, std::move(indices));
            // zero out unobserved rows so missing cells never leak an embedding
            tokens.push_back(tape.mul(tok, tape.leaf(std::move(obs))));
        } else {
            Tensor vals({table.rows, 1});
            for (int r = 0; r < table.rows; ++r)
                if (table.is_observed(r, c)) vals.at(r, 0) = static_cast<real_t>(table.value(r, c));
            int w2d = tape.reshape(leaf, {1, spec.embed_dim});
            tokens.push_back(tape.mul(tape.leaf(std::move(vals)), w2d));
        }
    }
    return tape.concat_lastdim(tokens);
}

std::vector<double> decode_table(const Tensor& encoded, const TableSchema& schema, const EncodingSpec& spec,
                                 const TokenizerParams* params) {
    check_spec(schema, spec, params);
    if (encoded.ndim() != 2 || encoded.dim(1) != spec.encoded_width)
        fail("decode: matrix ", shape_str(encoded.shape()), " vs encoded width ", spec.encoded_width);
    int rows = encoded.dim(0);
    int cols = static_cast<int>(spec.spans.size());
    std::vector<double> out(static_cast<size_t>(rows) * cols, 0.0);
    for (int r = 0; r < rows; ++r) {
        for (int c = 0; c < cols; ++c) {
            const ColumnSpan& span = spec.spans[static_cast<size_t>(c)];
            const real_t* v = &encoded.at(r, span.start);
            const auto& col = schema.columns[static_cast<size_t>(c)];
            double decoded = 0;
            switch (spec.scheme) {
            case Scheme::onehot:
                decoded = col.is_categorical() ? decode_onehot(v, col.cardinality()) : static_cast<double>(v[0]);
                break;
            case Scheme::analog_bits:
                decoded = col.is_categorical() ? decode_analog_bits(v, col.cardinality()) : static_cast<double>(v[0]);
                break;
            case Scheme::ft: {
                const Tensor& pw = params->columns[static_cast<size_t>(c)].value;
                decoded = col.is_categorical() ? ft_decode_categorical(v, pw)
                                               : static_cast<double>(ft_decode_numeric(v, pw.data(), spec.embed_dim));
                break;
            }
            }
            out[static_cast<size_t>(r) * cols + c] = decoded;
        }
    }
    return out;
}

} // namespace tabcsdi
