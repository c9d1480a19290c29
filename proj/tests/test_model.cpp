#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <numeric>
#include <vector>

#include "doctest.h"
#include "gradcheck.hpp"
#include "septr/model.hpp"
#include "septr/rng.hpp"

using namespace septr;

namespace {

MelSpectrogram random_spec(std::size_t f, std::size_t t, Rng& rng) {
  MelSpectrogram m;
  m.freq_bins = f;
  m.time_slots = t;
  m.values.resize(f * t);
  for (double& v : m.values) v = rng.uniform();
  return m;
}

// Straight-line re-evaluations used as oracles below. They work on plain
// row-major matrices [rows x d] and share nothing with the library graph.
using Mat = std::vector<std::vector<double>>;

Mat to_mat(const Tensor& t) {
  const std::size_t rows = t.shape()[0], cols = t.shape()[1];
  Mat m(rows, std::vector<double>(cols));
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t c = 0; c < cols; ++c) m[r][c] = t.values()[r * cols + c];
  return m;
}

Mat matmul_oracle(const Mat& a, const Mat& b) {
  Mat out(a.size(), std::vector<double>(b[0].size(), 0.0));
  for (std::size_t i = 0; i < a.size(); ++i)
    for (std::size_t j = 0; j < b[0].size(); ++j)
      for (std::size_t k = 0; k < b.size(); ++k) out[i][j] += a[i][k] * b[k][j];
  return out;
}

Mat layer_norm_oracle(const Mat& x, const std::vector<double>& g,
                      const std::vector<double>& b, double eps = 1e-5) {
  Mat out = x;
  for (auto& row : out) {
    double mean = std::accumulate(row.begin(), row.end(), 0.0) / row.size();
    double var = 0.0;
    for (double v : row) var += (v - mean) * (v - mean);
    var /= row.size();
    for (std::size_t j = 0; j < row.size(); ++j)
      out[&row - &out[0]][j] =
          g[j] * (row[j] - mean) / std::sqrt(var + eps) + b[j];
  }
  return out;
}

Mat softmax_oracle(const Mat& x) {
  Mat out = x;
  for (auto& row : out) {
    double mx = *std::max_element(row.begin(), row.end());
    double sum = 0.0;
    for (double& v : row) {
      v = std::exp(v - mx);
      sum += v;
    }
    for (double& v : row) v /= sum;
  }
  return out;
}

Mat attention_oracle(const Mat& x, const BlockParamRefs& p) {
  const std::size_t heads = p.wq.size();
  const std::size_t dh = p.wq[0].shape()[1];
  const std::size_t d = p.wo.shape()[1];
  Mat z(x.size(), std::vector<double>(heads * dh));
  for (std::size_t h = 0; h < heads; ++h) {
    Mat q = matmul_oracle(x, to_mat(p.wq[h]));
    Mat k = matmul_oracle(x, to_mat(p.wk[h]));
    Mat v = matmul_oracle(x, to_mat(p.wv[h]));
    Mat scores(x.size(), std::vector<double>(x.size(), 0.0));
    for (std::size_t i = 0; i < x.size(); ++i)
      for (std::size_t j = 0; j < x.size(); ++j) {
        for (std::size_t e = 0; e < dh; ++e) scores[i][j] += q[i][e] * k[j][e];
        scores[i][j] /= std::sqrt(double(dh));
      }
    Mat a = softmax_oracle(scores);
    Mat zh = matmul_oracle(a, v);
    for (std::size_t i = 0; i < x.size(); ++i)
      for (std::size_t e = 0; e < dh; ++e) z[i][h * dh + e] = zh[i][e];
  }
  Mat out = matmul_oracle(z, to_mat(p.wo));
  for (auto& row : out)
    for (std::size_t j = 0; j < d; ++j) row[j] += p.bo.values()[j];
  return out;
}

Mat block_oracle(const Mat& x, const BlockParamRefs& p) {
  Mat attended =
      attention_oracle(layer_norm_oracle(x, p.ln1_gamma.values(),
                                         p.ln1_beta.values()),
                       p);
  Mat pre = x;
  for (std::size_t i = 0; i < x.size(); ++i)
    for (std::size_t j = 0; j < x[0].size(); ++j) pre[i][j] += attended[i][j];
  Mat hidden = matmul_oracle(
      layer_norm_oracle(pre, p.ln2_gamma.values(), p.ln2_beta.values()),
      to_mat(p.mlp_w1));
  for (auto& row : hidden)
    for (std::size_t j = 0; j < row.size(); ++j) {
      double v = row[j] + p.mlp_b1.values()[j];
      row[j] = 0.5 * v * (1.0 + std::erf(v / std::sqrt(2.0)));
    }
  Mat out = matmul_oracle(hidden, to_mat(p.mlp_w2));
  for (std::size_t i = 0; i < out.size(); ++i)
    for (std::size_t j = 0; j < out[0].size(); ++j)
      out[i][j] += p.mlp_b2.values()[j] + pre[i][j];
  return out;
}

BlockParamRefs random_block(std::size_t d, std::size_t heads,
                            std::size_t mlp_ratio, Rng& rng) {
  using testing::random_tensor;
  const std::size_t dh = (d + heads - 1) / heads;
  BlockParamRefs p;
  for (std::size_t h = 0; h < heads; ++h) {
    p.wq.push_back(random_tensor({d, dh}, rng, true, 0.3));
    p.wk.push_back(random_tensor({d, dh}, rng, true, 0.3));
    p.wv.push_back(random_tensor({d, dh}, rng, true, 0.3));
  }
  p.wo = random_tensor({heads * dh, d}, rng, true, 0.3);
  p.bo = random_tensor({d}, rng, true, 0.1);
  p.ln1_gamma = random_tensor({d}, rng, true, 0.2);
  p.ln1_beta = random_tensor({d}, rng, true, 0.1);
  for (double& v : p.ln1_gamma.values()) v += 1.0;
  p.ln2_gamma = random_tensor({d}, rng, true, 0.2);
  p.ln2_beta = random_tensor({d}, rng, true, 0.1);
  for (double& v : p.ln2_gamma.values()) v += 1.0;
  p.mlp_w1 = random_tensor({d, mlp_ratio * d}, rng, true, 0.3);
  p.mlp_b1 = random_tensor({mlp_ratio * d}, rng, true, 0.1);
  p.mlp_w2 = random_tensor({mlp_ratio * d, d}, rng, true, 0.3);
  p.mlp_b2 = random_tensor({d}, rng, true, 0.1);
  return p;
}

std::string temp_path(const char* name) {
  return (std::filesystem::temp_directory_path() / name).string();
}

}  // namespace

TEST_CASE("tokenize_project") {
  Rng rng(21);
  SUBCASE("full-size grid with unit patches has shape [n, k, d]") {
    MelSpectrogram spec = random_spec(128, 128, rng);
    Tensor w = testing::random_tensor({1, 256}, rng, false, 0.1);
    Tensor b = testing::random_tensor({256}, rng, false, 0.1);
    Tensor t = tokenize_project(spec, w, b, 1);
    CHECK(t.shape() == Shape{128, 128, 256});
  }
  SUBCASE("zero spectrogram yields the bias at every token") {
    MelSpectrogram spec;
    spec.freq_bins = 4;
    spec.time_slots = 6;
    spec.values.assign(24, 0.0);
    Tensor w = testing::random_tensor({1, 5}, rng, false);
    Tensor b = testing::random_tensor({5}, rng, false);
    Tensor t = tokenize_project(spec, w, b, 1);
    for (std::size_t i = 0; i < t.numel(); ++i)
      CHECK(t.values()[i] == b.values()[i % 5]);
  }
  SUBCASE("2x2 patches slice the grid correctly") {
    MelSpectrogram spec = random_spec(4, 4, rng);
    // identity projection exposes the raw patch layout
    Tensor w(Shape{4, 4}, {1, 0, 0, 0, 0, 1, 0, 0, 0, 0, 1, 0, 0, 0, 0, 1});
    Tensor b = Tensor::zeros({4});
    Tensor t = tokenize_project(spec, w, b, 2);
    REQUIRE(t.shape() == Shape{2, 2, 4});
    for (std::size_t j = 0; j < 2; ++j)
      for (std::size_t i = 0; i < 2; ++i)
        for (std::size_t di = 0; di < 2; ++di)
          for (std::size_t dt = 0; dt < 2; ++dt)
            CHECK(t.values()[(j * 2 + i) * 4 + di * 2 + dt] ==
                  spec.at(i * 2 + di, j * 2 + dt));
  }
  SUBCASE("indivisible grid is rejected") {
    MelSpectrogram spec = random_spec(5, 4, rng);
    Tensor w = Tensor::zeros({4, 4});
    Tensor b = Tensor::zeros({4});
    CHECK_THROWS_AS(tokenize_project(spec, w, b, 2), std::invalid_argument);
  }
}

TEST_CASE("multi_head_attention") {
  Rng rng(31);
  SUBCASE("matches the per-head oracle") {
    const std::size_t m = 5, d = 7, heads = 3;
    auto p = random_block(d, heads, 1, rng);
    Tensor x = testing::random_tensor({m, d}, rng, false);
    Tensor y = multi_head_attention(x, p);
    Mat expect = attention_oracle(to_mat(x), p);
    REQUIRE(y.shape() == Shape{m, d});
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < d; ++j)
        CHECK(std::abs(y.values()[i * d + j] - expect[i][j]) <= 1e-12);
  }
  SUBCASE("zero queries give uniform attention over values") {
    const std::size_t m = 4, d = 6;
    auto p = random_block(d, 1, 1, rng);
    for (double& v : p.wq[0].values()) v = 0.0;
    Tensor x = testing::random_tensor({m, d}, rng, false);
    Tensor y = multi_head_attention(x, p);
    // uniform attention means every output row is identical
    for (std::size_t i = 1; i < m; ++i)
      for (std::size_t j = 0; j < d; ++j)
        CHECK(std::abs(y.values()[i * d + j] - y.values()[j]) <= 1e-12);
  }
  SUBCASE("a single token passes its value straight through") {
    const std::size_t d = 6;
    auto p = random_block(d, 1, 1, rng);
    Tensor x = testing::random_tensor({1, d}, rng, false);
    Tensor y = multi_head_attention(x, p);
    Mat v = matmul_oracle(to_mat(x), to_mat(p.wv[0]));
    Mat expect = matmul_oracle(v, to_mat(p.wo));
    for (std::size_t j = 0; j < d; ++j)
      CHECK(std::abs(y.values()[j] - (expect[0][j] + p.bo.values()[j])) <=
            1e-12);
  }
  SUBCASE("output rows permute with input rows") {
    const std::size_t m = 5, d = 8;
    auto p = random_block(d, 2, 1, rng);
    Tensor x = testing::random_tensor({m, d}, rng, false);
    Tensor y = multi_head_attention(x, p);
    const std::vector<std::size_t> perm = {3, 0, 4, 1, 2};
    std::vector<double> xv(m * d);
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < d; ++j)
        xv[i * d + j] = x.values()[perm[i] * d + j];
    Tensor y2 = multi_head_attention(Tensor(Shape{m, d}, std::move(xv)), p);
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < d; ++j)
        CHECK(std::abs(y2.values()[i * d + j] -
                       y.values()[perm[i] * d + j]) <= 1e-12);
  }
}

TEST_CASE("transformer_block") {
  Rng rng(41);
  SUBCASE("matches the straight-line oracle") {
    const std::size_t m = 6, d = 10, heads = 2;
    auto p = random_block(d, heads, 4, rng);
    Tensor x = testing::random_tensor({m, d}, rng, false);
    Tensor y = transformer_block(x, p);
    Mat expect = block_oracle(to_mat(x), p);
    REQUIRE(y.shape() == Shape{m, d});
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < d; ++j)
        CHECK(std::abs(y.values()[i * d + j] - expect[i][j]) <= 1e-10);
  }
  SUBCASE("all-zero weights make the block an identity") {
    const std::size_t m = 3, d = 5;
    auto p = random_block(d, 2, 1, rng);
    for (Tensor* t : {&p.wo, &p.bo, &p.mlp_w1, &p.mlp_b1, &p.mlp_w2,
                      &p.mlp_b2})
      for (double& v : t->values()) v = 0.0;
    Tensor x = testing::random_tensor({m, d}, rng, false);
    Tensor y = transformer_block(x, p);
    for (std::size_t i = 0; i < x.numel(); ++i)
      CHECK(y.values()[i] == doctest::Approx(x.values()[i]).epsilon(1e-12));
  }
}

TEST_CASE("axis_pass") {
  Rng rng(51);
  const std::size_t n = 3, k = 4, d = 6;
  auto p = random_block(d, 2, 1, rng);
  TokenTensor t;
  t.values = testing::random_tensor({n, k, d}, rng, false);
  t.class_token = testing::random_tensor({d}, rng, false);
  t.state = ClassState::kPooled;
  Tensor pos_v = testing::random_tensor({k + 1, d}, rng, false, 0.1);
  Tensor pos_h = testing::random_tensor({n + 1, d}, rng, false, 0.1);

  SUBCASE("vertical pass keeps shape and replicates one class row per slot") {
    TokenTensor out = axis_pass(t, p, pos_v, Axis::kVertical);
    CHECK(out.values.shape() == Shape{n, k, d});
    CHECK(out.class_token.shape() == Shape{n, d});
    CHECK(out.state == ClassState::kReplicated);
  }
  SUBCASE("horizontal pass replicates one class row per frequency bin") {
    TokenTensor out = axis_pass(t, p, pos_h, Axis::kHorizontal);
    CHECK(out.values.shape() == Shape{n, k, d});
    CHECK(out.class_token.shape() == Shape{k, d});
  }
  SUBCASE("replicated input is rejected") {
    TokenTensor rep = axis_pass(t, p, pos_v, Axis::kVertical);
    CHECK_THROWS_AS(axis_pass(rep, p, pos_v, Axis::kVertical),
                    std::logic_error);
  }
  SUBCASE("wrong positional table size is rejected") {
    CHECK_THROWS_AS(axis_pass(t, p, pos_h, Axis::kVertical),
                    std::invalid_argument);
  }
  SUBCASE("vertical pass treats time slots independently") {
    TokenTensor out = axis_pass(t, p, pos_v, Axis::kVertical);
    // permute the time axis of the input and rerun
    const std::vector<std::size_t> perm = {2, 0, 1};
    std::vector<double> pv(n * k * d);
    for (std::size_t j = 0; j < n; ++j)
      for (std::size_t e = 0; e < k * d; ++e)
        pv[j * k * d + e] = t.values.values()[perm[j] * k * d + e];
    TokenTensor tp;
    tp.values = Tensor(Shape{n, k, d}, std::move(pv));
    tp.class_token = t.class_token;
    tp.state = ClassState::kPooled;
    TokenTensor out2 = axis_pass(tp, p, pos_v, Axis::kVertical);
    for (std::size_t j = 0; j < n; ++j)
      for (std::size_t e = 0; e < k * d; ++e)
        CHECK(std::abs(out2.values.values()[j * k * d + e] -
                       out.values.values()[perm[j] * k * d + e]) <= 1e-12);
    for (std::size_t j = 0; j < n; ++j)
      for (std::size_t e = 0; e < d; ++e)
        CHECK(std::abs(out2.class_token.values()[j * d + e] -
                       out.class_token.values()[perm[j] * d + e]) <= 1e-12);
  }
  SUBCASE("pass matches a manual concat + block + split evaluation") {
    TokenTensor out = axis_pass(t, p, pos_v, Axis::kVertical);
    for (std::size_t j = 0; j < n; ++j) {  // each time slot separately
      Mat x(k + 1, std::vector<double>(d));
      for (std::size_t e = 0; e < d; ++e)
        x[0][e] = t.class_token.values()[e] + pos_v.values()[e];
      for (std::size_t i = 0; i < k; ++i)
        for (std::size_t e = 0; e < d; ++e)
          x[i + 1][e] = t.values.values()[(j * k + i) * d + e] +
                        pos_v.values()[(i + 1) * d + e];
      Mat y = block_oracle(x, p);
      for (std::size_t e = 0; e < d; ++e)
        CHECK(std::abs(out.class_token.values()[j * d + e] - y[0][e]) <=
              1e-10);
      for (std::size_t i = 0; i < k; ++i)
        for (std::size_t e = 0; e < d; ++e)
          CHECK(std::abs(out.values.values()[(j * k + i) * d + e] -
                         y[i + 1][e]) <= 1e-10);
    }
  }
}

TEST_CASE("pool_class_tokens") {
  Tensor vals = Tensor::zeros({2, 2, 3});
  SUBCASE("averages the replicated copies") {
    TokenTensor t;
    t.values = vals;
    t.class_token = Tensor(Shape{2, 3}, {1, 2, 3, 5, 6, 7});
    t.state = ClassState::kReplicated;
    TokenTensor out = pool_class_tokens(t);
    CHECK(out.state == ClassState::kPooled);
    REQUIRE(out.class_token.shape() == Shape{3});
    CHECK(out.class_token.values() == std::vector<double>{3, 4, 5});
  }
  SUBCASE("pooling twice is rejected") {
    TokenTensor t;
    t.values = vals;
    t.class_token = Tensor(Shape{3}, {1, 2, 3});
    t.state = ClassState::kPooled;
    CHECK_THROWS_AS(pool_class_tokens(t), std::logic_error);
  }
}

TEST_CASE("parameter counting") {
  SUBCASE("closed form equals an actual parameter census") {
    Rng rng(61);
    std::vector<ModelConfig> cfgs;
    for (Variant v : {Variant::kVH, Variant::kHV, Variant::kV, Variant::kH}) {
      for (std::size_t depth : {1, 2}) {
        ModelConfig c;
        c.variant = v;
        c.depth = depth;
        c.token_dim = 16;
        c.heads = 3;  // 16/3 does not divide: exercises the ceil path
        c.patch_size = depth;  // 1 then 2
        c.mlp_ratio = depth == 1 ? 4 : 1;
        c.num_classes = 5;
        c.freq_bins = 16;
        c.time_slots = 24;
        cfgs.push_back(c);
      }
    }
    for (std::size_t patch : {4, 8}) {
      ModelConfig c;
      c.variant = Variant::kViT;
      c.depth = 2;
      c.token_dim = 12;
      c.heads = 4;
      c.num_classes = 3;
      c.freq_bins = 16;
      c.time_slots = 16;
      c.vit_patch = patch;
      c.vit_stride = 2;
      cfgs.push_back(c);
    }
    for (const auto& cfg : cfgs) {
      ModelParams p = init_params(cfg, rng);
      CHECK(param_count(cfg) == p.census());
    }
  }
  SUBCASE("separable counts grow linearly with the input side") {
    ModelConfig c;  // defaults: vh, unit patches
    std::vector<std::size_t> counts;
    for (std::size_t s : {64, 128, 192, 256})
      {
        ModelConfig cc = c;
        cc.freq_bins = cc.time_slots = s;
        counts.push_back(param_count(cc));
      }
    const std::ptrdiff_t d1 = counts[1] - counts[0];
    CHECK(counts[2] - counts[1] == d1);
    CHECK(counts[3] - counts[2] == d1);
    CHECK(d1 > 0);
  }
  SUBCASE("overlapping-patch counts grow quadratically with the side") {
    ModelConfig c;
    c.variant = Variant::kViT;
    c.depth = 6;
    std::vector<std::ptrdiff_t> counts;
    for (std::size_t s : {64, 128, 192, 256}) {
      ModelConfig cc = c;
      cc.freq_bins = cc.time_slots = s;
      counts.push_back(std::ptrdiff_t(param_count(cc)));
    }
    const auto dd1 = (counts[2] - counts[1]) - (counts[1] - counts[0]);
    const auto dd2 = (counts[3] - counts[2]) - (counts[2] - counts[1]);
    CHECK(dd1 == dd2);  // constant second difference
    CHECK(dd1 > 0);
  }
  SUBCASE("scan reports both models and their ratio") {
    ModelConfig sc;
    sc.mlp_ratio = 1;
    ModelConfig vc = sc;
    vc.variant = Variant::kViT;
    vc.depth = 6;
    auto rows = param_scan(sc, vc, {128, 256, 512});
    REQUIRE(rows.size() == 3);
    for (const auto& r : rows) {
      CHECK(r.ratio ==
            doctest::Approx(double(r.vit_count) / double(r.septr_count)));
      CHECK(r.septr_count > 0);
    }
    CHECK(rows[2].input_size == 512);
    CHECK(rows[2].ratio >= 5.0);
  }
}

TEST_CASE("forward passes") {
  Rng rng(71);
  SUBCASE("separable logits have one entry per class, all variants") {
    for (Variant v : {Variant::kVH, Variant::kHV, Variant::kV, Variant::kH}) {
      ModelConfig cfg;
      cfg.variant = v;
      cfg.depth = 1;
      cfg.token_dim = 8;
      cfg.heads = 2;
      cfg.num_classes = 4;
      cfg.freq_bins = 6;
      cfg.time_slots = 4;
      ModelParams p = init_params(cfg, rng);
      MelSpectrogram spec = random_spec(6, 4, rng);
      Tensor logits = model_forward(spec, p, cfg);
      CHECK(logits.shape() == Shape{4});
      logits.check_finite("logits");
    }
  }
  SUBCASE("grid mismatch is rejected") {
    ModelConfig cfg;
    cfg.depth = 1;
    cfg.token_dim = 8;
    cfg.heads = 2;
    cfg.freq_bins = 6;
    cfg.time_slots = 4;
    ModelParams p = init_params(cfg, rng);
    MelSpectrogram spec = random_spec(4, 6, rng);
    CHECK_THROWS_AS(model_forward(spec, p, cfg), std::invalid_argument);
  }
  SUBCASE("overlapping patch grid produces the expected token count") {
    ModelConfig cfg;
    cfg.variant = Variant::kViT;
    CHECK(cfg.vit_grid_f() == 61);  // (128 - 8) / 2 + 1
    CHECK(cfg.vit_grid_f() * cfg.vit_grid_t() == 3721);
    cfg.freq_bins = cfg.time_slots = 8;
    CHECK(cfg.vit_grid_f() * cfg.vit_grid_t() == 1);
  }
  SUBCASE("single-token grid runs end to end") {
    ModelConfig cfg;
    cfg.variant = Variant::kViT;
    cfg.depth = 1;
    cfg.token_dim = 8;
    cfg.heads = 2;
    cfg.num_classes = 3;
    cfg.freq_bins = cfg.time_slots = 8;
    cfg.vit_patch = 8;
    cfg.vit_stride = 2;
    ModelParams p = init_params(cfg, rng);
    MelSpectrogram spec = random_spec(8, 8, rng);
    Tensor logits = vit_forward(spec, p, cfg);
    CHECK(logits.shape() == Shape{3});
    logits.check_finite("logits");
  }
}

TEST_CASE("end-to-end gradient check on a tiny separable model") {
  ModelConfig cfg;
  cfg.variant = Variant::kVH;
  cfg.depth = 1;
  cfg.token_dim = 8;
  cfg.heads = 2;
  cfg.num_classes = 3;
  cfg.freq_bins = 4;
  cfg.time_slots = 4;
  Rng rng(81);
  ModelParams params = init_params(cfg, rng);
  // The production init is deliberately small; finite differencing needs
  // gradients well above its noise floor, so redraw with a larger spread.
  for (auto& [name, t] : params.tensors)
    for (double& v : t.values()) v = rng.uniform(-0.5, 0.5);
  MelSpectrogram spec = random_spec(4, 4, rng);
  const std::vector<int> labels = {1};
  auto forward = [&]() {
    Tensor logits = model_forward(spec, params, cfg);
    return cross_entropy(reshape(logits, {1, cfg.num_classes}), labels);
  };
  std::vector<Tensor> leaves;
  for (auto& [name, t] : params.tensors) leaves.push_back(t);
  // The 1e-4 denominator floor makes the comparison absolute for near-zero
  // gradients, which central differences cannot resolve past ~1e-11.
  CHECK(testing::max_grad_rel_error(forward, leaves, 1e-5, 1e-4) <= 1e-5);
}

TEST_CASE("checkpoints") {
  ModelConfig cfg;
  cfg.depth = 1;
  cfg.token_dim = 8;
  cfg.heads = 2;
  cfg.num_classes = 3;
  cfg.freq_bins = 4;
  cfg.time_slots = 4;
  Rng rng(91);
  ModelParams params = init_params(cfg, rng);
  const std::string path = temp_path("septr_test.spck");

  SUBCASE("round trip is bitwise exact") {
    save_checkpoint(path, params, cfg);
    ModelParams loaded = load_checkpoint(path, cfg);
    REQUIRE(loaded.tensors.size() == params.tensors.size());
    for (const auto& [name, t] : params.tensors) {
      const Tensor& l = loaded.at(name);
      CHECK(l.shape() == t.shape());
      CHECK(l.values() == t.values());
    }
    std::remove(path.c_str());
  }
  SUBCASE("a different configuration is rejected by digest") {
    save_checkpoint(path, params, cfg);
    ModelConfig other = cfg;
    other.num_classes = 4;
    CHECK_THROWS_WITH_AS(load_checkpoint(path, other),
                         doctest::Contains("digest"), std::runtime_error);
    std::remove(path.c_str());
  }
  SUBCASE("garbage files are rejected") {
    std::FILE* f = std::fopen(path.c_str(), "wb");
    std::fputs("not a checkpoint", f);
    std::fclose(f);
    CHECK_THROWS_AS(load_checkpoint(path, cfg), std::runtime_error);
    std::remove(path.c_str());
  }
}
