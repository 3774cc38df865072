#include "gnf/model.hpp"

#include <cmath>
#include <cstring>

namespace gnf {

using nn::Tensor;
using nn::Tape;

void ModelConfig::validate() const {
    if (alphabet != 4 && alphabet != 5) throw Error("alphabet must be 4 or 5");
    if (ngram == 0 || context_len % ngram != 0) throw Error("context_len must be a multiple of ngram");
    if (n_tokens() % byte_group != 0) throw Error("token count must be a multiple of byte_group");
    if (n_heads == 0 || d_m % n_heads != 0) throw Error("d_m must be a multiple of n_heads");
    if (embed_mode == EmbedMode::Learned && d_m % byte_group != 0)
        throw Error("d_m must be a multiple of byte_group");
    if (enc_len() < conv_k) throw Error("encoder input shorter than conv kernel");
    if (conv_out_len() < pool_k) throw Error("conv output shorter than pool window");
    if (vocab() > 65536) throw Error("vocab too large for 16-bit tokens");
}

void ModelConfig::fit_conv(ModelConfig& cfg) {
    uint32_t len = cfg.enc_len();
    cfg.conv_k = std::max<uint32_t>(1, (len * 24 + 32) / 64);
    cfg.conv_stride = 1;
    uint32_t out = cfg.conv_out_len();
    cfg.pool_k = std::min<uint32_t>(3, out);
    cfg.pool_stride = cfg.pool_k;
}

ModelConfig ModelConfig::toy(uint32_t ngram, uint32_t byte_group, uint32_t alphabet) {
    ModelConfig cfg;
    cfg.alphabet = alphabet;
    cfg.ngram = ngram;
    cfg.byte_group = byte_group;
    cfg.d_m = 64;
    cfg.d_ff = 256;
    cfg.n_heads = 2;
    fit_conv(cfg);
    cfg.validate();
    return cfg;
}

std::vector<double> sinusoidal_pe(long long i, uint32_t d_m, double base) {
    std::vector<double> g(d_m);
    for (uint32_t j = 0; 2 * j < d_m; ++j) {
        double denom = std::pow(base, (2.0 * j) / d_m);
        g[2 * j] = std::sin(i / denom);
        if (2 * j + 1 < d_m) g[2 * j + 1] = std::cos(i / denom);
    }
    return g;
}

namespace {

inline uint64_t splitmix64(uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

// Deterministic truncated normal (resample beyond 2 sigma).
Tensor trunc_normal(nn::Shape shape, double sigma, uint64_t& ctr, uint64_t seed) {
    std::vector<double> data(nn::numel(shape));
    for (double& x : data) {
        double z;
        do {
            double u1 = ((splitmix64(seed + ctr++) >> 11) + 0.5) * (1.0 / 9007199254740992.0);
            double u2 = ((splitmix64(seed + ctr++) >> 11) + 0.5) * (1.0 / 9007199254740992.0);
            z = std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
        } while (std::fabs(z) > 2.0);
        x = z * sigma;
    }
    return Tensor::from(std::move(shape), std::move(data), true);
}

}  // namespace

Model::Model(const ModelConfig& cfg, uint64_t init_seed) : bn(cfg.d_m), cfg_(cfg) {
    cfg_.validate();
    uint64_t ctr = 0;
    const uint64_t seed = splitmix64(init_seed);
    const double sigma = 0.02;
    if (cfg_.embed_mode == EmbedMode::OneHot) {
        std::vector<double> eye(size_t(cfg_.vocab()) * cfg_.vocab(), 0.0);
        for (uint32_t t = 0; t < cfg_.vocab(); ++t) eye[size_t(t) * cfg_.vocab() + t] = 1.0;
        embed_table = Tensor::from({cfg_.vocab(), cfg_.vocab()}, std::move(eye), false);
    } else {
        embed_table = trunc_normal({cfg_.vocab(), cfg_.embed_dim()}, sigma, ctr, seed);
    }
    uint32_t cin = cfg_.embed_dim() * cfg_.byte_group;
    conv_w = trunc_normal({cfg_.d_m, cin, cfg_.conv_k}, sigma, ctr, seed);
    conv_b = Tensor::zeros({cfg_.d_m}, true);
    uint32_t hk = cfg_.n_heads * cfg_.head_dim();
    wq = trunc_normal({cfg_.d_m, hk}, sigma, ctr, seed);
    wk = trunc_normal({cfg_.d_m, hk}, sigma, ctr, seed);
    wv = trunc_normal({cfg_.d_m, cfg_.d_m}, sigma, ctr, seed);
    wo = trunc_normal({cfg_.d_m, cfg_.d_m}, sigma, ctr, seed);
    u = Tensor::zeros({hk}, true);
    v = Tensor::zeros({hk}, true);
    ln1_g = Tensor::from({cfg_.d_m}, std::vector<double>(cfg_.d_m, 1.0), true);
    ln1_b = Tensor::zeros({cfg_.d_m}, true);
    ln2_g = Tensor::from({cfg_.d_m}, std::vector<double>(cfg_.d_m, 1.0), true);
    ln2_b = Tensor::zeros({cfg_.d_m}, true);
    ff_w1 = trunc_normal({cfg_.d_m, cfg_.d_ff}, sigma, ctr, seed);
    ff_b1 = Tensor::zeros({cfg_.d_ff}, true);
    ff_w2 = trunc_normal({cfg_.d_ff, cfg_.d_m}, sigma, ctr, seed);
    ff_b2 = Tensor::zeros({cfg_.d_m}, true);
    // zero head: the untrained model predicts the exact uniform distribution
    head_w = Tensor::zeros({size_t(cfg_.n_pos()) * cfg_.d_m, cfg_.vocab()}, true);
    head_b = Tensor::zeros({cfg_.vocab()}, true);
    collect_params();
}

void Model::collect_params() {
    params_.clear();
    if (cfg_.embed_mode == EmbedMode::Learned) params_.push_back(embed_table);
    for (Tensor* t : {&conv_w, &conv_b, &bn.gamma, &bn.beta, &wq, &wk, &wv, &wo, &u, &v,
                      &ln1_g, &ln1_b, &ln2_g, &ln2_b, &ff_w1, &ff_b1, &ff_w2, &ff_b2,
                      &head_w, &head_b})
        params_.push_back(*t);
}

void Model::zero_grad() {
    for (auto& p : params_) p.zero_grad();
}

uint64_t Model::count_params() const {
    uint64_t n = 0;
    for (const auto& p : params_) n += p.size();
    return n;
}

std::vector<Tensor> Model::attention_scores(Tape* tape, const Tensor& x, const Tensor& memory,
                                            bool masked) {
    size_t B = x.dim(0), N = x.dim(1);
    size_t M = (memory.defined() && cfg_.use_latent) ? memory.dim(1) : 0;
    size_t dk = cfg_.head_dim();
    size_t H = cfg_.n_heads;

    Tensor xhat = (M > 0) ? nn::concat_mid(tape, memory, x) : x;
    size_t keys = M + N;

    auto proj = [&](const Tensor& in, const Tensor& w) {
        Tensor flat = nn::reshape(tape, in, {in.dim(0) * in.dim(1), in.dim(2)});
        Tensor y = nn::matmul(tape, flat, w);
        return nn::reshape(tape, y, {in.dim(0), in.dim(1), w.dim(1)});
    };
    Tensor q = proj(x, wq);        // [B,N,H*dk]
    Tensor k = proj(xhat, wk);     // [B,keys,H*dk]

    // relative encodings for every offset i - j_abs, j_abs in [-M, N)
    size_t n_off = M + 2 * N - 1;
    std::vector<double> rel(n_off * cfg_.d_m);
    for (size_t t = 0; t < n_off; ++t) {
        long long off = static_cast<long long>(t) - static_cast<long long>(N - 1);
        auto pe = sinusoidal_pe(off, cfg_.d_m, cfg_.sinusoid_base);
        std::copy(pe.begin(), pe.end(), rel.begin() + t * cfg_.d_m);
    }
    Tensor rel_t = Tensor::from({n_off, cfg_.d_m}, std::move(rel));
    Tensor r = nn::matmul(tape, rel_t, wk);  // [n_off, H*dk]

    // gather table: idx[i][j] maps key j to the offset row for i - j_abs
    std::vector<size_t> idx(N * keys);
    for (size_t i = 0; i < N; ++i)
        for (size_t j = 0; j < keys; ++j) {
            long long j_abs = static_cast<long long>(j) - static_cast<long long>(M);
            idx[i * keys + j] = static_cast<size_t>(static_cast<long long>(i) - j_abs + N - 1);
        }

    Tensor mask_t;
    if (masked) {
        std::vector<double> mask(B * N * keys, 0.0);
        for (size_t b = 0; b < B; ++b)
            for (size_t i = 0; i < N; ++i)
                for (size_t j = 0; j < keys; ++j) {
                    long long j_abs = static_cast<long long>(j) - static_cast<long long>(M);
                    if (j_abs > static_cast<long long>(i)) mask[(b * N + i) * keys + j] = -1e30;
                }
        mask_t = Tensor::from({B, N, keys}, std::move(mask));
    }

    std::vector<Tensor> scores;
    for (size_t h = 0; h < H; ++h) {
        Tensor qh = nn::slice_last(tape, q, h * dk, dk);
        Tensor kh = nn::slice_last(tape, k, h * dk, dk);
        Tensor uh = nn::slice_last(tape, u, h * dk, dk);
        Tensor vh = nn::slice_last(tape, v, h * dk, dk);
        Tensor rh = nn::slice_last(tape, r, h * dk, dk);

        Tensor content = nn::bmm(tape, nn::add_bias(tape, qh, uh), nn::transpose_last2(tape, kh));
        Tensor qv = nn::add_bias(tape, qh, vh);
        Tensor qv_flat = nn::reshape(tape, qv, {B * N, dk});
        Tensor pos_all = nn::matmul(tape, qv_flat, nn::transpose_last2(tape, rh));
        pos_all = nn::reshape(tape, pos_all, {B, N, n_off});
        Tensor pos = nn::gather_last(tape, pos_all, idx, keys);

        Tensor a = nn::add(tape, content, pos);
        if (masked) a = nn::add(tape, a, mask_t);
        scores.push_back(a);
    }
    return scores;
}

Tensor Model::encoder_forward(Tape* tape, const Tensor& x, const Tensor& memory, bool train,
                              uint64_t step) {
    size_t B = x.dim(0), N = x.dim(1);
    size_t M = (memory.defined() && cfg_.use_latent) ? memory.dim(1) : 0;
    size_t dk = cfg_.head_dim();
    size_t dv = cfg_.d_m / cfg_.n_heads;
    double inv_sqrt_dk = 1.0 / std::sqrt(static_cast<double>(dk));

    Tensor xhat = (M > 0) ? nn::concat_mid(tape, memory, x) : x;
    auto proj = [&](const Tensor& in, const Tensor& w) {
        Tensor flat = nn::reshape(tape, in, {in.dim(0) * in.dim(1), in.dim(2)});
        Tensor y = nn::matmul(tape, flat, w);
        return nn::reshape(tape, y, {in.dim(0), in.dim(1), w.dim(1)});
    };
    Tensor val = proj(xhat, wv);  // [B,keys,d_m]

    auto scores = attention_scores(tape, x, memory, true);
    std::vector<Tensor> heads;
    for (size_t h = 0; h < cfg_.n_heads; ++h) {
        Tensor a = nn::scale(tape, scores[h], inv_sqrt_dk);
        Tensor att = nn::softmax_last(tape, a);
        Tensor vh = nn::slice_last(tape, val, h * dv, dv);
        heads.push_back(nn::bmm(tape, att, vh));  // [B,N,dv]
    }
    Tensor cat = nn::concat_last(tape, heads);  // [B,N,d_m]
    Tensor attn_out = proj(cat, wo);
    attn_out = nn::dropout(tape, attn_out, cfg_.dropout_p, train, dropout_seed, 1, step);

    Tensor y = nn::layer_norm(tape, nn::add(tape, x, attn_out), ln1_g, ln1_b);
    Tensor h1 = nn::linear(tape, y, ff_w1, ff_b1);
    Tensor h2 = nn::gelu(tape, h1);
    Tensor h3 = nn::linear(tape, h2, ff_w2, ff_b2);
    h3 = nn::dropout(tape, h3, cfg_.dropout_p, train, dropout_seed, 2, step);
    Tensor out = nn::layer_norm(tape, nn::add(tape, y, h3), ln2_g, ln2_b);
    (void)B;
    (void)N;
    return out;
}

ForwardResult Model::forward(Tape* tape, const std::vector<uint16_t>& tokens, size_t batch,
                             const Tensor& memory, bool train, uint64_t step) {
    size_t nt = cfg_.n_tokens();
    if (tokens.size() != batch * nt)
        throw BadContextLength("expected " + std::to_string(batch * nt) + " tokens, got " +
                               std::to_string(tokens.size()));
    size_t e = cfg_.embed_dim();
    size_t g = cfg_.byte_group;
    size_t cin = e * g;
    size_t L = cfg_.enc_len();

    Tensor emb = nn::embedding(tape, tokens, embed_table);        // [B*nt, e]
    Tensor grouped = nn::reshape(tape, emb, {batch, L, cin});     // byte-grouping
    Tensor xc = nn::transpose_last2(tape, grouped);               // [B, cin, L]
    Tensor c = nn::conv1d(tape, xc, conv_w, conv_b, cfg_.conv_stride);
    c = nn::relu(tape, c);
    c = nn::maxpool1d(tape, c, cfg_.pool_k, cfg_.pool_stride);
    c = nn::batch_norm(tape, c, bn, train);
    c = nn::dropout(tape, c, cfg_.dropout_p, train, dropout_seed, 0, step);
    Tensor x = nn::transpose_last2(tape, c);                      // [B, n_pos, d_m]

    Tensor latent = encoder_forward(tape, x, memory, train, step);

    Tensor flat = nn::reshape(tape, latent, {batch, size_t(cfg_.n_pos()) * cfg_.d_m});
    Tensor logits = nn::linear(tape, flat, head_w, head_b);
    return {logits, latent};
}

std::vector<std::pair<std::string, nn::Shape>> Model::shape_trace() {
    std::vector<std::pair<std::string, nn::Shape>> trace;
    std::vector<uint16_t> tokens(cfg_.n_tokens(), 0);
    size_t L = cfg_.enc_len();
    Tensor emb = nn::embedding(nullptr, tokens, embed_table);
    trace.emplace_back("Embedding", emb.shape());
    Tensor grouped = nn::reshape(nullptr, emb, {size_t(1), L, size_t(cfg_.embed_dim() * cfg_.byte_group)});
    Tensor xc = nn::transpose_last2(nullptr, grouped);
    Tensor c = nn::conv1d(nullptr, xc, conv_w, conv_b, cfg_.conv_stride);
    trace.emplace_back("1DConv", nn::Shape{c.dim(1), c.dim(2)});
    c = nn::relu(nullptr, c);
    trace.emplace_back("Relu", nn::Shape{c.dim(1), c.dim(2)});
    c = nn::maxpool1d(nullptr, c, cfg_.pool_k, cfg_.pool_stride);
    trace.emplace_back("1DMaxPooling", nn::Shape{c.dim(1), c.dim(2)});
    c = nn::batch_norm(nullptr, c, bn, false);
    trace.emplace_back("BatchNormalization", nn::Shape{c.dim(1), c.dim(2)});
    trace.emplace_back("Dropout", nn::Shape{c.dim(1), c.dim(2)});
    Tensor x = nn::transpose_last2(nullptr, c);
    Tensor h = encoder_forward(nullptr, x, Tensor(), false, 0);
    trace.emplace_back("RelativeAttention", nn::Shape{h.dim(2), h.dim(1)});
    trace.emplace_back("LayerNorm", nn::Shape{h.dim(2), h.dim(1)});
    trace.emplace_back("FeedForwardHidden", nn::Shape{size_t(cfg_.d_ff), h.dim(1)});
    trace.emplace_back("FeedForwardOut", nn::Shape{h.dim(2), h.dim(1)});
    trace.emplace_back("GELUActivation", nn::Shape{h.dim(2), h.dim(1)});
    Tensor flat = nn::reshape(nullptr, h, {size_t(1), size_t(cfg_.n_pos()) * cfg_.d_m});
    Tensor logits = nn::linear(nullptr, flat, head_w, head_b);
    trace.emplace_back("Linear", nn::Shape{size_t(1), logits.dim(1)});
    return trace;
}

// --- checkpoint ---

namespace {
constexpr char kMagic[4] = {'G', 'F', 'C', 'K'};
constexpr uint16_t kVersion = 1;

void put_f64(Bytes& out, double x) {
    uint64_t bits;
    std::memcpy(&bits, &x, 8);
    put_u64(out, bits);
}
double get_f64(const Bytes& in, size_t& pos) {
    uint64_t bits = get_u64(in, pos);
    double x;
    std::memcpy(&x, &bits, 8);
    return x;
}

void put_blob(Bytes& out, const std::vector<double>& data) {
    put_u64(out, data.size());
    for (double d : data) {
        float f = static_cast<float>(d);
        uint32_t bits;
        std::memcpy(&bits, &f, 4);
        put_u32(out, bits);
    }
}
std::vector<double> get_blob(const Bytes& in, size_t& pos) {
    uint64_t n = get_u64(in, pos);
    std::vector<double> data(n);
    for (uint64_t i = 0; i < n; ++i) {
        uint32_t bits = get_u32(in, pos);
        float f;
        std::memcpy(&f, &bits, 4);
        data[i] = f;
    }
    return data;
}
}  // namespace

Bytes Model::save_checkpoint() const {
    Bytes out;
    out.insert(out.end(), kMagic, kMagic + 4);
    put_u16(out, kVersion);
    const ModelConfig& c = cfg_;
    for (uint32_t f : {c.alphabet, c.ngram, c.byte_group, c.context_len, c.d_m, c.d_ff,
                       c.n_heads, c.d_k, c.conv_k, c.conv_stride, c.pool_k, c.pool_stride,
                       c.mem_segments})
        put_u32(out, f);
    put_f64(out, c.dropout_p);
    put_f64(out, c.sinusoid_base);
    out.push_back(static_cast<uint8_t>(c.embed_mode));
    out.push_back(c.use_latent ? 1 : 0);
    out.push_back(c.segment_cut ? 1 : 0);
    for (const Tensor* t : {&embed_table, &conv_w, &conv_b, &bn.gamma, &bn.beta, &wq, &wk,
                            &wv, &wo, &u, &v, &ln1_g, &ln1_b, &ln2_g, &ln2_b, &ff_w1, &ff_b1,
                            &ff_w2, &ff_b2, &head_w, &head_b})
        put_blob(out, t->v());
    put_blob(out, bn.running_mean);
    put_blob(out, bn.running_var);
    auto digest = sha256_of(out.data(), out.size());
    out.insert(out.end(), digest.begin(), digest.end());
    return out;
}

std::vector<uint8_t> Model::fingerprint() const {
    Bytes ck = save_checkpoint();
    return std::vector<uint8_t>(ck.end() - 32, ck.end());
}

Model Model::load_checkpoint(const Bytes& bytes) {
    if (bytes.size() < 4 + 2 + 32 || std::memcmp(bytes.data(), kMagic, 4) != 0)
        throw BadMagic("not a model checkpoint");
    auto digest = sha256_of(bytes.data(), bytes.size() - 32);
    if (std::memcmp(digest.data(), bytes.data() + bytes.size() - 32, 32) != 0)
        throw HashMismatch("checkpoint content hash mismatch");
    size_t pos = 4;
    uint16_t version = get_u16(bytes, pos);
    if (version != kVersion) throw VersionUnsupported("checkpoint version " + std::to_string(version));
    ModelConfig c;
    uint32_t* fields[] = {&c.alphabet, &c.ngram, &c.byte_group, &c.context_len, &c.d_m,
                          &c.d_ff, &c.n_heads, &c.d_k, &c.conv_k, &c.conv_stride, &c.pool_k,
                          &c.pool_stride, &c.mem_segments};
    for (uint32_t* f : fields) *f = get_u32(bytes, pos);
    c.dropout_p = get_f64(bytes, pos);
    c.sinusoid_base = get_f64(bytes, pos);
    c.embed_mode = static_cast<EmbedMode>(bytes.at(pos++));
    c.use_latent = bytes.at(pos++) != 0;
    c.segment_cut = bytes.at(pos++) != 0;
    Model m(c);
    auto load_into = [&](Tensor& t) {
        auto data = get_blob(bytes, pos);
        if (data.size() != t.size()) throw CorruptStream("checkpoint blob size mismatch");
        t.v() = std::move(data);
    };
    for (Tensor* t : {&m.embed_table, &m.conv_w, &m.conv_b, &m.bn.gamma, &m.bn.beta, &m.wq,
                      &m.wk, &m.wv, &m.wo, &m.u, &m.v, &m.ln1_g, &m.ln1_b, &m.ln2_g, &m.ln2_b,
                      &m.ff_w1, &m.ff_b1, &m.ff_w2, &m.ff_b2, &m.head_w, &m.head_b})
        load_into(*t);
    m.bn.running_mean = get_blob(bytes, pos);
    m.bn.running_var = get_blob(bytes, pos);
    if (pos != bytes.size() - 32) throw CorruptStream("checkpoint has trailing bytes");
    return m;
}

std::vector<double> InferenceSession::predict(const std::vector<uint16_t>& context) {
    const ModelConfig& cfg = model_->config();
    if (context.size() != cfg.n_tokens())
        throw BadContextLength("context must be " + std::to_string(cfg.n_tokens()) + " tokens");
    Tensor memory;
    if (!memory_.empty()) {
        memory = memory_.front();
        for (size_t i = 1; i < memory_.size(); ++i)
            memory = nn::concat_mid(nullptr, memory, memory_[i]);
    }
    auto res = model_->forward(nullptr, context, 1, memory, false, step_++);
    if (cfg.use_latent) {
        memory_.push_back(res.latent);
        size_t cap = cfg.segment_cut ? 1 : cfg.mem_segments;
        while (memory_.size() > cap) memory_.pop_front();
    }
    // softmax over logits
    const auto& lv = res.logits.v();
    double mx = lv[0];
    for (double x : lv) mx = std::max(mx, x);
    double sum = 0.0;
    std::vector<double> p(lv.size());
    for (size_t i = 0; i < lv.size(); ++i) {
        p[i] = std::exp(lv[i] - mx);
        sum += p[i];
    }
    for (double& x : p) x /= sum;
    return p;
}

}  // namespace gnf
