#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/QR>

#include "advprompt/common.hpp"
#include "advprompt/errors.hpp"
#include "advprompt/lexicon.hpp"
#include "advprompt/rng.hpp"

namespace advprompt {

struct EncoderConfig {
    int dim = 32;         // token embedding width d
    int feature_dim = 32; // output feature width
    int max_len = 16;     // longest token sequence accepted
    int heads = 2;
    std::uint64_t seed = 1;

    // Init gains, calibrated so pooled features keep the word-level cosine
    // structure of the input (mild positional/attention mixing, a gentle
    // feed-forward residual).  The output gain sets the feature norm; it is
    // deliberately large so that squared-error terms on raw features carry
    // weight comparable to cosine terms, as they do against a real embedding
    // stack whose features are far from unit norm.
    double pos_scale = 0.05;
    double attn_gain = 0.3;
    double value_gain = 0.3;
    double ff_gain = 0.3;
    double out_gain = 40.0;

    int ff_dim() const { return 2 * dim; }
    int head_dim() const { return dim / heads; }

    void validate() const {
        if (dim < 1 || feature_dim < 1 || max_len < 1 || heads < 1)
            throw ConfigError("encoder dimensions must be positive");
        if (dim % heads != 0)
            throw ConfigError("embedding width must divide evenly across heads");
    }
};

namespace detail {

// Orthonormal-column random matrix scaled by gain; QR of a seeded Gaussian.
inline Mat orthogonal_init(int rows, int cols, double gain, std::uint64_t seed) {
    const bool tall = rows >= cols;
    const int r = tall ? rows : cols;
    const int c = tall ? cols : rows;
    Mat g = gaussian_matrix(r, c, seed);
    Mat q = Eigen::HouseholderQR<Mat>(g).householderQ() * Mat::Identity(r, c);
    if (!tall) q.transposeInPlace();
    return gain * q;
}

} // namespace detail

// One-block transformer: position encodings, multi-head self-attention with a
// residual, tanh feed-forward with a residual, mean pool, linear head.
struct TextEncoder {
    EncoderConfig cfg;
    Mat pos; // max_len x d
    Mat wq, wk, wv, wo; // d x d
    Mat w1;  // d x ff
    Vec b1;  // ff
    Mat w2;  // ff x d
    Vec b2;  // d
    Mat wf;  // d x feature_dim
    Vec bf;  // feature_dim

    TextEncoder() = default;

    explicit TextEncoder(const EncoderConfig& c) : cfg(c) {
        cfg.validate();
        const int d = cfg.dim;
        pos = cfg.pos_scale * gaussian_matrix(cfg.max_len, d, mix_seed(cfg.seed, 1));
        wq = detail::orthogonal_init(d, d, cfg.attn_gain, mix_seed(cfg.seed, 2));
        wk = detail::orthogonal_init(d, d, cfg.attn_gain, mix_seed(cfg.seed, 3));
        wv = detail::orthogonal_init(d, d, cfg.value_gain, mix_seed(cfg.seed, 4));
        wo = detail::orthogonal_init(d, d, cfg.value_gain, mix_seed(cfg.seed, 5));
        w1 = detail::orthogonal_init(d, cfg.ff_dim(), cfg.ff_gain, mix_seed(cfg.seed, 6));
        b1 = Vec::Zero(cfg.ff_dim());
        w2 = detail::orthogonal_init(cfg.ff_dim(), d, cfg.ff_gain, mix_seed(cfg.seed, 7));
        b2 = Vec::Zero(d);
        wf = detail::orthogonal_init(d, cfg.feature_dim, cfg.out_gain, mix_seed(cfg.seed, 8));
        bf = Vec::Zero(cfg.feature_dim);
    }
};

// Forward-pass intermediates needed to backpropagate to the inputs.
struct EncodeTrace {
    Mat x0;                 // K x d, embeddings plus positions
    std::vector<Mat> attn;  // per head, K x K softmax weights
    Mat x1;                 // K x d, after attention residual
    Mat z;                  // K x ff, tanh activations
    Mat x2;                 // K x d, after feed-forward residual
    Vec feature;
};

inline EncodeTrace encode_with_trace(const TextEncoder& enc, const Mat& embeddings) {
    const Eigen::Index k = embeddings.rows();
    if (k == 0) throw EmptyPromptError("cannot encode an empty sequence");
    if (embeddings.cols() != enc.cfg.dim)
        throw ConfigError("embedding width " + std::to_string(embeddings.cols()) +
                          " does not match encoder width " + std::to_string(enc.cfg.dim));
    if (k > enc.cfg.max_len)
        throw SequenceLengthError("sequence length " + std::to_string(k) +
                                  " exceeds encoder limit " + std::to_string(enc.cfg.max_len));

    EncodeTrace t;
    t.x0 = embeddings + enc.pos.topRows(k);

    const int dh = enc.cfg.head_dim();
    const double scale = 1.0 / std::sqrt(static_cast<double>(dh));
    Mat concat(k, enc.cfg.dim);
    t.attn.reserve(static_cast<std::size_t>(enc.cfg.heads));
    for (int h = 0; h < enc.cfg.heads; ++h) {
        const Mat q = t.x0 * enc.wq.middleCols(h * dh, dh);
        const Mat key = t.x0 * enc.wk.middleCols(h * dh, dh);
        const Mat v = t.x0 * enc.wv.middleCols(h * dh, dh);
        Mat s = scale * (q * key.transpose());
        for (Eigen::Index i = 0; i < k; ++i) {
            Eigen::RowVectorXd row = s.row(i);
            row.array() -= row.maxCoeff();
            Eigen::RowVectorXd e = row.array().exp();
            s.row(i) = e / e.sum();
        }
        t.attn.push_back(s);
        concat.middleCols(h * dh, dh) = s * v;
    }
    t.x1 = t.x0 + concat * enc.wo;

    t.z = ((t.x1 * enc.w1).rowwise() + enc.b1.transpose()).array().tanh();
    t.x2 = t.x1 + ((t.z * enc.w2).rowwise() + enc.b2.transpose());

    const Vec pooled = t.x2.colwise().mean().transpose();
    t.feature = enc.wf.transpose() * pooled + enc.bf;
    if (!t.feature.allFinite()) throw NumericalError("encoder produced a non-finite feature");
    return t;
}

inline Vec encode_embeddings(const TextEncoder& enc, const Mat& embeddings) {
    return encode_with_trace(enc, embeddings).feature;
}

inline Vec encode_ids(const TextEncoder& enc, const Vocabulary& vocab,
                      std::span<const TokenId> ids) {
    return encode_embeddings(enc, embed(vocab, ids));
}

inline Vec encode_text(const TextEncoder& enc, const Vocabulary& vocab, std::string_view text) {
    return encode_ids(enc, vocab, tokenize(vocab, text));
}

// Gradient of a scalar objective on the feature, taken with respect to the
// input embedding rows. Every step of the forward pass is differentiated by
// hand; the finite-difference suite holds this to the forward code.
inline Mat backprop_to_inputs(const TextEncoder& enc, const EncodeTrace& t, const Vec& grad_f) {
    const Eigen::Index k = t.x0.rows();
    const int dh = enc.cfg.head_dim();
    const double scale = 1.0 / std::sqrt(static_cast<double>(dh));

    const Vec dpool = enc.wf * grad_f;
    Mat dx2 = Mat::Ones(k, 1) * (dpool.transpose() / static_cast<double>(k));

    // feed-forward block
    const Mat dz = (dx2 * enc.w2.transpose()).cwiseProduct(
        (1.0 - t.z.array().square()).matrix());
    Mat dx1 = dx2 + dz * enc.w1.transpose();

    // attention block
    const Mat dconcat = dx1 * enc.wo.transpose();
    Mat dx0 = dx1;
    for (int h = 0; h < enc.cfg.heads; ++h) {
        const Mat q = t.x0 * enc.wq.middleCols(h * dh, dh);
        const Mat key = t.x0 * enc.wk.middleCols(h * dh, dh);
        const Mat v = t.x0 * enc.wv.middleCols(h * dh, dh);
        const Mat& a = t.attn[static_cast<std::size_t>(h)];
        const Mat doh = dconcat.middleCols(h * dh, dh);

        const Mat da = doh * v.transpose();
        const Mat dv = a.transpose() * doh;
        Mat ds(k, k);
        for (Eigen::Index i = 0; i < k; ++i) {
            const double dot = da.row(i).dot(a.row(i));
            ds.row(i) = a.row(i).cwiseProduct((da.row(i).array() - dot).matrix());
        }
        const Mat dq = scale * (ds * key);
        const Mat dkey = scale * (ds.transpose() * q);

        dx0 += dq * enc.wq.middleCols(h * dh, dh).transpose();
        dx0 += dkey * enc.wk.middleCols(h * dh, dh).transpose();
        dx0 += dv * enc.wv.middleCols(h * dh, dh).transpose();
    }
    return dx0;
}

// Scalar objective over encoder features, differentiable w.r.t. the feature.
struct FeatureObjective {
    virtual ~FeatureObjective() = default;
    virtual double value(const Vec& feature) const = 0;
    virtual Vec gradient(const Vec& feature) const = 0;
};

struct InputGradient {
    double loss = 0.0;
    Vec feature;
    Mat grad; // K x d, same shape as the input embeddings
};

inline InputGradient grad_wrt_inputs(const TextEncoder& enc, const Mat& embeddings,
                                     const FeatureObjective& objective) {
    EncodeTrace t = encode_with_trace(enc, embeddings);
    InputGradient out;
    out.loss = objective.value(t.feature);
    out.grad = backprop_to_inputs(enc, t, objective.gradient(t.feature));
    out.feature = std::move(t.feature);
    if (!std::isfinite(out.loss) || !out.grad.allFinite())
        throw NumericalError("non-finite loss or gradient");
    return out;
}

// ---------------------------------------------------------------------------
// Reference sets and category prototypes
// ---------------------------------------------------------------------------

enum class TargetKind { Object, Style };

inline const std::array<std::string, 10>& style_reference_contents() {
    static const std::array<std::string, 10> contents = {
        "a house near a river",   "a bowl of fruit on a table", "a ship on the sea",
        "a tree on a hill",       "a bridge over a stream",     "a field of flowers",
        "a bird on a branch",     "a mountain under clouds",    "a lighthouse on the coast",
        "a garden with a bench",
    };
    return contents;
}

struct ReferenceSet {
    Mat rows; // U x feature_dim, each row unit norm
    int count() const { return static_cast<int>(rows.rows()); }
};

namespace detail {

inline void require_known_category(const Vocabulary& vocab, const std::string& category) {
    bool any_known = false;
    for (const std::string& w : normalize_words(category)) {
        if (vocab.id_of(w) != Vocabulary::unk) any_known = true;
    }
    if (!any_known)
        throw UnknownWordError("category has no in-vocabulary word: " + category);
}

inline Vec unit_or_throw(Vec v) {
    const double n = v.norm();
    if (n == 0.0 || !v.allFinite()) throw NumericalError("cannot normalize a degenerate vector");
    return v / n;
}

} // namespace detail

// U jittered unit-norm feature rows describing what generated images of the
// target should look like. Object targets perturb one canonical caption;
// style targets cycle through varied scene contents rendered in the style.
inline ReferenceSet make_reference_set(const TextEncoder& enc, const Vocabulary& vocab,
                                       const std::string& category, TargetKind kind, int count,
                                       double sigma, std::uint64_t seed) {
    if (count < 1) throw ConfigError("reference count must be at least 1");
    if (sigma < 0.0) throw ConfigError("reference jitter must be non-negative");
    detail::require_known_category(vocab, category);

    ReferenceSet refs;
    refs.rows.resize(count, enc.cfg.feature_dim);
    Vec object_base;
    if (kind == TargetKind::Object)
        object_base = encode_text(enc, vocab, "a photo of " + category);
    const auto& contents = style_reference_contents();
    for (int u = 0; u < count; ++u) {
        Vec f;
        if (kind == TargetKind::Object) {
            f = object_base;
        } else {
            const std::string& content = contents[static_cast<std::size_t>(u) % contents.size()];
            f = encode_text(enc, vocab, content + " with the " + category + " style");
        }
        f += sigma * gaussian_vector(enc.cfg.feature_dim,
                                     mix_seed(seed, static_cast<std::uint64_t>(u)));
        refs.rows.row(u) = detail::unit_or_throw(std::move(f)).transpose();
    }
    return refs;
}

struct Prototype {
    std::string category;
    Vec feature; // unit norm
};

inline Prototype make_prototype(const TextEncoder& enc, const Vocabulary& vocab,
                                const std::string& category) {
    detail::require_known_category(vocab, category);
    Prototype p;
    p.category = category;
    p.feature = detail::unit_or_throw(encode_text(enc, vocab, "a photo of " + category));
    return p;
}

inline Prototype make_style_prototype(const TextEncoder& enc, const Vocabulary& vocab,
                                      const std::string& category) {
    detail::require_known_category(vocab, category);
    Prototype p;
    p.category = category;
    p.feature = detail::unit_or_throw(
        encode_text(enc, vocab, "a picture with the " + category + " style"));
    return p;
}

// ---------------------------------------------------------------------------
// Binary serialization
//   magic "APTE", then u32 version, d, feature_dim, max_len, heads,
//   then float64 row-major: pos, wq, wk, wv, wo, w1, b1, w2, b2, wf, bf.
//   The feed-forward width is always 2*d and is not stored.
// ---------------------------------------------------------------------------

namespace detail {

inline void write_u32(std::ostream& out, std::uint32_t v) {
    out.write(reinterpret_cast<const char*>(&v), sizeof(v));
}

inline std::uint32_t read_u32(std::istream& in, const std::string& path) {
    std::uint32_t v = 0;
    in.read(reinterpret_cast<char*>(&v), sizeof(v));
    if (!in) throw IoError("truncated encoder file: " + path);
    return v;
}

inline void write_matrix(std::ostream& out, const Mat& m) {
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
        for (Eigen::Index j = 0; j < m.cols(); ++j) {
            const double v = m(i, j);
            out.write(reinterpret_cast<const char*>(&v), sizeof(v));
        }
    }
}

inline Mat read_matrix(std::istream& in, Eigen::Index rows, Eigen::Index cols,
                       const std::string& path) {
    Mat m(rows, cols);
    for (Eigen::Index i = 0; i < rows; ++i) {
        for (Eigen::Index j = 0; j < cols; ++j) {
            double v = 0.0;
            in.read(reinterpret_cast<char*>(&v), sizeof(v));
            if (!in) throw IoError("truncated encoder file: " + path);
            m(i, j) = v;
        }
    }
    return m;
}

inline void write_vector(std::ostream& out, const Vec& v) {
    for (Eigen::Index i = 0; i < v.size(); ++i) {
        const double x = v(i);
        out.write(reinterpret_cast<const char*>(&x), sizeof(x));
    }
}

inline Vec read_vector(std::istream& in, Eigen::Index n, const std::string& path) {
    return read_matrix(in, n, 1, path).col(0);
}

} // namespace detail

inline constexpr std::uint32_t kEncoderFormatVersion = 1;

inline void save_encoder(const TextEncoder& enc, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write encoder file: " + path);
    out.write("APTE", 4);
    detail::write_u32(out, kEncoderFormatVersion);
    detail::write_u32(out, static_cast<std::uint32_t>(enc.cfg.dim));
    detail::write_u32(out, static_cast<std::uint32_t>(enc.cfg.feature_dim));
    detail::write_u32(out, static_cast<std::uint32_t>(enc.cfg.max_len));
    detail::write_u32(out, static_cast<std::uint32_t>(enc.cfg.heads));
    detail::write_matrix(out, enc.pos);
    detail::write_matrix(out, enc.wq);
    detail::write_matrix(out, enc.wk);
    detail::write_matrix(out, enc.wv);
    detail::write_matrix(out, enc.wo);
    detail::write_matrix(out, enc.w1);
    detail::write_vector(out, enc.b1);
    detail::write_matrix(out, enc.w2);
    detail::write_vector(out, enc.b2);
    detail::write_matrix(out, enc.wf);
    detail::write_vector(out, enc.bf);
    if (!out) throw IoError("failed writing encoder file: " + path);
}

inline TextEncoder load_encoder(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open encoder file: " + path);
    char magic[4] = {};
    in.read(magic, 4);
    if (!in || std::memcmp(magic, "APTE", 4) != 0)
        throw IoError("not an encoder file: " + path);
    const std::uint32_t version = detail::read_u32(in, path);
    if (version != kEncoderFormatVersion)
        throw IoError("unsupported encoder file version " + std::to_string(version) + ": " + path);

    TextEncoder enc;
    enc.cfg.dim = static_cast<int>(detail::read_u32(in, path));
    enc.cfg.feature_dim = static_cast<int>(detail::read_u32(in, path));
    enc.cfg.max_len = static_cast<int>(detail::read_u32(in, path));
    enc.cfg.heads = static_cast<int>(detail::read_u32(in, path));
    enc.cfg.seed = 0; // weights come from the file, not from re-initialization
    enc.cfg.validate();

    const int d = enc.cfg.dim;
    enc.pos = detail::read_matrix(in, enc.cfg.max_len, d, path);
    enc.wq = detail::read_matrix(in, d, d, path);
    enc.wk = detail::read_matrix(in, d, d, path);
    enc.wv = detail::read_matrix(in, d, d, path);
    enc.wo = detail::read_matrix(in, d, d, path);
    enc.w1 = detail::read_matrix(in, d, enc.cfg.ff_dim(), path);
    enc.b1 = detail::read_vector(in, enc.cfg.ff_dim(), path);
    enc.w2 = detail::read_matrix(in, enc.cfg.ff_dim(), d, path);
    enc.b2 = detail::read_vector(in, d, path);
    enc.wf = detail::read_matrix(in, d, enc.cfg.feature_dim, path);
    enc.bf = detail::read_vector(in, enc.cfg.feature_dim, path);
    char extra = 0;
    if (in.read(&extra, 1)) throw IoError("trailing bytes in encoder file: " + path);
    return enc;
}

} // namespace advprompt
