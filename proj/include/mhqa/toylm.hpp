#pragma once

// A small deterministic pre-norm transformer. It has no trained weights; it
// exists so masks and attention statistics can be exercised end to end
// without an external model.

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "mhqa/attention_dump.hpp"
#include "mhqa/errors.hpp"
#include "mhqa/masks.hpp"
#include "mhqa/random.hpp"
#include "mhqa/text.hpp"

namespace mhqa::toy {

struct ToyConfig {
  std::size_t n_layers = 2;
  std::size_t n_heads = 2;
  std::size_t d_model = 16;
  std::size_t d_head = 8;
  std::size_t vocab_size = 97;
  std::uint64_t seed = 42;

  void validate() const {
    if (n_layers == 0 || n_heads == 0 || d_head == 0 || vocab_size == 0) {
      throw DomainError("toy config dimensions must be positive");
    }
    if (d_model != n_heads * d_head) throw DomainError("toy config requires d_model = n_heads * d_head");
  }
};

// Attention is kept for a subset of query rows ("stored rows"), laid out
// [layer][head][stored_row][key] exactly like an MHAD dump.
struct ToyTrace {
  std::size_t n_layers = 0;
  std::size_t n_heads = 0;
  std::size_t seq_len = 0;
  std::size_t vocab_size = 0;
  std::size_t d_model = 0;
  std::vector<std::uint32_t> stored_rows;
  std::vector<float> attention;
  std::vector<double> logits;  // [position][vocab]
  std::vector<double> hidden;  // final-layer residual stream, [position][d_model]

  float attn(std::size_t layer, std::size_t head, std::size_t query, std::size_t key) const {
    auto it = std::find(stored_rows.begin(), stored_rows.end(), query);
    if (it == stored_rows.end()) throw MissingRowError(query);
    const auto r = static_cast<std::size_t>(it - stored_rows.begin());
    return attention[((layer * n_heads + head) * stored_rows.size() + r) * seq_len + key];
  }

  std::span<const double> logits_at(std::size_t pos) const {
    return {logits.data() + pos * vocab_size, vocab_size};
  }

  std::span<const double> hidden_at(std::size_t pos) const {
    return {hidden.data() + pos * d_model, d_model};
  }
};

struct ForwardOptions {
  // Query rows whose attention is recorded; empty records every row.
  std::vector<std::uint32_t> keep_rows;
};

class ToyModel {
 public:
  explicit ToyModel(ToyConfig config) : cfg_(config) {
    cfg_.validate();
    Rng rng(cfg_.seed);
    const auto d = cfg_.d_model;
    const auto ff = 4 * d;
    auto fill = [&](std::vector<double>& w, std::size_t count, double scale) {
      w.resize(count);
      for (auto& x : w) x = rng.normal() * scale;
    };
    fill(embed_, cfg_.vocab_size * d, 1.0);
    layers_.resize(cfg_.n_layers);
    const double s = 1.0 / std::sqrt(static_cast<double>(d));
    for (auto& L : layers_) {
      fill(L.wq, d * d, s);
      fill(L.wk, d * d, s);
      fill(L.wv, d * d, s);
      fill(L.wo, d * d, s);
      fill(L.w1, d * ff, s);
      fill(L.w2, ff * d, 1.0 / std::sqrt(static_cast<double>(ff)));
    }
  }

  const ToyConfig& config() const { return cfg_; }

  ToyTrace forward(std::span<const std::uint32_t> tokens, const AttnMask& mask,
                   const ForwardOptions& opts = {}) const {
    const auto n = tokens.size();
    if (n != mask.n()) {
      throw DomainError("token count " + std::to_string(n) + " != mask length " + std::to_string(mask.n()));
    }
    for (auto t : tokens) {
      if (t >= cfg_.vocab_size) throw DomainError("token id " + std::to_string(t) + " >= vocab_size");
    }
    const auto d = cfg_.d_model;
    const auto dh = cfg_.d_head;
    const auto H = cfg_.n_heads;

    ToyTrace tr;
    tr.n_layers = cfg_.n_layers;
    tr.n_heads = H;
    tr.seq_len = n;
    tr.vocab_size = cfg_.vocab_size;
    tr.d_model = d;
    if (opts.keep_rows.empty()) {
      for (std::uint32_t i = 0; i < n; ++i) tr.stored_rows.push_back(i);
    } else {
      tr.stored_rows = opts.keep_rows;
      for (auto r : tr.stored_rows) {
        if (r >= n) throw DomainError("kept row " + std::to_string(r) + " outside sequence");
      }
    }
    std::vector<long> keep_slot(n, -1);
    for (std::size_t r = 0; r < tr.stored_rows.size(); ++r) keep_slot[tr.stored_rows[r]] = static_cast<long>(r);
    tr.attention.assign(cfg_.n_layers * H * tr.stored_rows.size() * n, 0.0f);

    std::vector<double> x(n * d);
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t k = 0; k < d; ++k) {
        x[i * d + k] = embed_[tokens[i] * d + k] + positional(i, k);
      }
    }

    std::vector<double> h(n * d), q(n * d), kx(n * d), v(n * d), ctx(n * d), scores(n);
    const double inv_sqrt_dh = 1.0 / std::sqrt(static_cast<double>(dh));
    for (std::size_t l = 0; l < cfg_.n_layers; ++l) {
      const auto& L = layers_[l];
      layer_norm(x, h, n);
      matmul(h, L.wq, q, n, d, d);
      matmul(h, L.wk, kx, n, d, d);
      matmul(h, L.wv, v, n, d, d);
      std::fill(ctx.begin(), ctx.end(), 0.0);
      for (std::size_t head = 0; head < H; ++head) {
        const auto off = head * dh;
        for (std::size_t i = 0; i < n; ++i) {
          double mx = -std::numeric_limits<double>::infinity();
          for (std::size_t j = 0; j < n; ++j) {
            if (mask.blocked(i, j)) {
              scores[j] = -std::numeric_limits<double>::infinity();
              continue;
            }
            double s = 0.0;
            for (std::size_t k = 0; k < dh; ++k) s += q[i * d + off + k] * kx[j * d + off + k];
            scores[j] = s * inv_sqrt_dh;
            mx = std::max(mx, scores[j]);
          }
          double z = 0.0;
          for (std::size_t j = 0; j < n; ++j) {
            scores[j] = std::exp(scores[j] - mx);  // exp(-inf) == 0 exactly
            z += scores[j];
          }
          for (std::size_t j = 0; j < n; ++j) {
            const double p = scores[j] / z;
            if (p == 0.0) continue;
            for (std::size_t k = 0; k < dh; ++k) ctx[i * d + off + k] += p * v[j * d + off + k];
            if (keep_slot[i] >= 0) {
              tr.attention[((l * H + head) * tr.stored_rows.size() + static_cast<std::size_t>(keep_slot[i])) * n + j] =
                  static_cast<float>(p);
            }
          }
        }
      }
      matmul(ctx, L.wo, h, n, d, d);
      for (std::size_t k = 0; k < n * d; ++k) x[k] += h[k];

      layer_norm(x, h, n);
      const auto ff = 4 * d;
      std::vector<double> mid(n * ff);
      matmul(h, L.w1, mid, n, d, ff);
      for (auto& m : mid) m = gelu(m);
      std::vector<double> out(n * d);
      matmul(mid, L.w2, out, n, ff, d);
      for (std::size_t k = 0; k < n * d; ++k) x[k] += out[k];
    }

    tr.hidden = x;
    layer_norm(x, h, n);
    tr.logits.assign(n * cfg_.vocab_size, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t t = 0; t < cfg_.vocab_size; ++t) {
        double s = 0.0;
        for (std::size_t k = 0; k < d; ++k) s += h[i * d + k] * embed_[t * d + k];
        tr.logits[i * cfg_.vocab_size + t] = s;
      }
    }
    return tr;
  }

 private:
  struct Layer {
    std::vector<double> wq, wk, wv, wo, w1, w2;
  };

  double positional(std::size_t pos, std::size_t k) const {
    const double rate = std::pow(10000.0, -static_cast<double>(k / 2 * 2) / static_cast<double>(cfg_.d_model));
    return k % 2 == 0 ? std::sin(pos * rate) : std::cos(pos * rate);
  }

  void layer_norm(const std::vector<double>& in, std::vector<double>& out, std::size_t n) const {
    const auto d = cfg_.d_model;
    for (std::size_t i = 0; i < n; ++i) {
      double mean = 0.0;
      for (std::size_t k = 0; k < d; ++k) mean += in[i * d + k];
      mean /= static_cast<double>(d);
      double var = 0.0;
      for (std::size_t k = 0; k < d; ++k) var += (in[i * d + k] - mean) * (in[i * d + k] - mean);
      const double inv = 1.0 / std::sqrt(var / static_cast<double>(d) + 1e-5);
      for (std::size_t k = 0; k < d; ++k) out[i * d + k] = (in[i * d + k] - mean) * inv;
    }
  }

  // out[n x cols] = in[n x inner] * w[inner x cols]
  static void matmul(const std::vector<double>& in, const std::vector<double>& w, std::vector<double>& out,
                     std::size_t n, std::size_t inner, std::size_t cols) {
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t c = 0; c < cols; ++c) {
        double s = 0.0;
        for (std::size_t k = 0; k < inner; ++k) s += in[i * inner + k] * w[k * cols + c];
        out[i * cols + c] = s;
      }
    }
  }

  static double gelu(double x) { return 0.5 * x * (1.0 + std::erf(x / std::sqrt(2.0))); }

  ToyConfig cfg_;
  std::vector<double> embed_;  // [vocab][d_model], tied with the output projection
  std::vector<Layer> layers_;
};

inline ToyTrace forward(const ToyConfig& config, std::span<const std::uint32_t> tokens, const AttnMask& mask) {
  return ToyModel(config).forward(tokens, mask);
}

// Writes the stored rows of a trace as an MHAD dump.
inline AttentionDump to_dump(const ToyTrace& tr, DumpMode mode) {
  if (mode == DumpMode::Full && tr.stored_rows.size() != tr.seq_len) {
    throw UsageError("full-mode dump needs a trace that recorded every row");
  }
  return AttentionDump(static_cast<std::uint32_t>(tr.n_layers), static_cast<std::uint32_t>(tr.n_heads),
                       static_cast<std::uint32_t>(tr.seq_len), mode, tr.stored_rows, tr.attention);
}

struct ToyToken {
  std::uint32_t id = 0;
  std::size_t begin = 0;  // character offsets, [begin, end)
  std::size_t end = 0;
};

// Splits text into alphanumeric runs and single punctuation characters;
// whitespace is dropped. Ids are a stable hash of the piece modulo vocab_size.
class ToyTokenizer {
 public:
  explicit ToyTokenizer(std::size_t vocab_size) : vocab_size_(vocab_size) {
    if (vocab_size_ == 0) throw DomainError("vocab_size must be positive");
  }

  std::vector<ToyToken> encode(std::string_view s) const {
    std::vector<ToyToken> out;
    std::size_t i = 0;
    while (i < s.size()) {
      const auto c = static_cast<unsigned char>(s[i]);
      if (text::is_space(s[i])) {
        ++i;
        continue;
      }
      std::size_t j = i + 1;
      if (std::isalnum(c) || c >= 0x80) {
        while (j < s.size() && (std::isalnum(static_cast<unsigned char>(s[j])) ||
                                static_cast<unsigned char>(s[j]) >= 0x80)) {
          ++j;
        }
      }
      out.push_back({id_of(s.substr(i, j - i)), i, j});
      i = j;
    }
    return out;
  }

  std::uint32_t id_of(std::string_view piece) const {
    return static_cast<std::uint32_t>(text::fnv1a64(piece) % vocab_size_);
  }

  // Surface form for generated ids.
  static std::string piece_for(std::uint32_t id) { return "w" + std::to_string(id); }

 private:
  std::size_t vocab_size_;
};

// Greedy decoding with full recomputation each step. Mask is causal, or
// prefix-bidirectional over the prompt when `prefix` is set.
inline std::vector<std::uint32_t> greedy_generate(const ToyModel& model, std::vector<std::uint32_t> tokens,
                                                  std::size_t max_new_tokens, bool prefix) {
  const auto prompt_len = tokens.size();
  std::vector<std::uint32_t> generated;
  for (std::size_t step = 0; step < max_new_tokens; ++step) {
    const auto n = tokens.size();
    const auto mask = build_prefix_mask(n, prefix ? prompt_len : 0);
    ForwardOptions opts;
    opts.keep_rows = {static_cast<std::uint32_t>(n - 1)};
    const auto tr = model.forward(tokens, mask, opts);
    const auto row = tr.logits_at(n - 1);
    const auto best = static_cast<std::uint32_t>(std::max_element(row.begin(), row.end()) - row.begin());
    generated.push_back(best);
    tokens.push_back(best);
  }
  return generated;
}

}  // namespace mhqa::toy
