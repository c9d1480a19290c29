#include "septr/model.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace septr {

Variant variant_from_string(const std::string& s) {
  if (s == "vh") return Variant::kVH;
  if (s == "hv") return Variant::kHV;
  if (s == "v") return Variant::kV;
  if (s == "h") return Variant::kH;
  if (s == "vit") return Variant::kViT;
  throw std::invalid_argument("unknown variant '" + s +
                              "' (expected vh, hv, v, h, or vit)");
}

std::string variant_to_string(Variant v) {
  switch (v) {
    case Variant::kVH: return "vh";
    case Variant::kHV: return "hv";
    case Variant::kV: return "v";
    case Variant::kH: return "h";
    case Variant::kViT: return "vit";
  }
  return "?";
}

void ModelConfig::validate() const {
  if (depth < 1) throw std::invalid_argument("ModelConfig: depth must be >= 1");
  if (token_dim < heads)
    throw std::invalid_argument("ModelConfig: token_dim must be >= heads");
  if (heads == 0) throw std::invalid_argument("ModelConfig: heads must be > 0");
  if (num_classes < 2)
    throw std::invalid_argument("ModelConfig: need at least 2 classes");
  if (variant == Variant::kViT) {
    if (vit_patch == 0 || vit_stride == 0)
      throw std::invalid_argument("ModelConfig: ViT patch/stride must be > 0");
    if (freq_bins < vit_patch || time_slots < vit_patch)
      throw std::invalid_argument(
          "ModelConfig: input grid smaller than the ViT patch");
  } else {
    if (patch_size == 0)
      throw std::invalid_argument("ModelConfig: patch_size must be >= 1");
    if (freq_bins % patch_size != 0 || time_slots % patch_size != 0)
      throw std::invalid_argument(
          "ModelConfig: grid " + std::to_string(freq_bins) + "x" +
          std::to_string(time_slots) + " is not divisible by patch size " +
          std::to_string(patch_size));
  }
}

std::string ModelConfig::describe() const {
  std::ostringstream os;
  os << "variant=" << variant_to_string(variant) << " depth=" << depth
     << " dim=" << token_dim << " heads=" << heads << " patch=" << patch_size
     << " mlp_ratio=" << mlp_ratio << " classes=" << num_classes
     << " grid=" << freq_bins << "x" << time_slots
     << " vit_patch=" << vit_patch << " vit_stride=" << vit_stride;
  return os.str();
}

std::uint64_t ModelConfig::digest() const {
  const std::string s = describe();
  std::uint64_t h = 1469598103934665603ULL;  // FNV-1a
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

std::vector<Axis> passes_per_block(Variant v) {
  switch (v) {
    case Variant::kVH: return {Axis::kVertical, Axis::kHorizontal};
    case Variant::kHV: return {Axis::kHorizontal, Axis::kVertical};
    case Variant::kV: return {Axis::kVertical, Axis::kVertical};
    case Variant::kH: return {Axis::kHorizontal, Axis::kHorizontal};
    case Variant::kViT: break;
  }
  throw std::logic_error("passes_per_block: not a separable variant");
}

Tensor& ModelParams::at(const std::string& name) {
  auto it = tensors.find(name);
  if (it == tensors.end())
    throw std::out_of_range("ModelParams: no parameter named '" + name + "'");
  return it->second;
}

const Tensor& ModelParams::at(const std::string& name) const {
  auto it = tensors.find(name);
  if (it == tensors.end())
    throw std::out_of_range("ModelParams: no parameter named '" + name + "'");
  return it->second;
}

std::size_t ModelParams::census() const {
  std::size_t n = 0;
  for (const auto& [name, t] : tensors) n += t.numel();
  return n;
}

void ModelParams::zero_grad() {
  for (auto& [name, t] : tensors) t.zero_grad();
}

namespace {

Tensor init_weight(Shape shape, Rng& rng) {
  std::vector<double> v(shape_numel(shape));
  for (double& x : v) x = rng.truncated_normal(0.02);
  return Tensor(std::move(shape), std::move(v), true);
}

void add_block_params(ModelParams& p, const std::string& prefix,
                      const ModelConfig& cfg, Rng& rng) {
  const std::size_t d = cfg.token_dim;
  const std::size_t dh = cfg.head_dim();
  const std::size_t hidden = cfg.mlp_ratio * d;
  for (std::size_t h = 0; h < cfg.heads; ++h) {
    p.tensors[prefix + "attn.wq" + std::to_string(h)] =
        init_weight({d, dh}, rng);
    p.tensors[prefix + "attn.wk" + std::to_string(h)] =
        init_weight({d, dh}, rng);
    p.tensors[prefix + "attn.wv" + std::to_string(h)] =
        init_weight({d, dh}, rng);
  }
  p.tensors[prefix + "attn.wo"] = init_weight({cfg.heads * dh, d}, rng);
  p.tensors[prefix + "attn.bo"] = Tensor::zeros({d}, true);
  p.tensors[prefix + "ln1.g"] = Tensor::full({d}, 1.0, true);
  p.tensors[prefix + "ln1.b"] = Tensor::zeros({d}, true);
  p.tensors[prefix + "ln2.g"] = Tensor::full({d}, 1.0, true);
  p.tensors[prefix + "ln2.b"] = Tensor::zeros({d}, true);
  p.tensors[prefix + "mlp.w1"] = init_weight({d, hidden}, rng);
  p.tensors[prefix + "mlp.b1"] = Tensor::zeros({hidden}, true);
  p.tensors[prefix + "mlp.w2"] = init_weight({hidden, d}, rng);
  p.tensors[prefix + "mlp.b2"] = Tensor::zeros({d}, true);
}

}  // namespace

ModelParams init_params(const ModelConfig& cfg, Rng& rng) {
  cfg.validate();
  ModelParams p;
  const std::size_t d = cfg.token_dim;
  if (cfg.variant == Variant::kViT) {
    const std::size_t patch_in = cfg.vit_patch * cfg.vit_patch;
    const std::size_t tokens = cfg.vit_grid_f() * cfg.vit_grid_t();
    p.tensors["patch_proj.w"] = init_weight({patch_in, d}, rng);
    p.tensors["patch_proj.b"] = Tensor::zeros({d}, true);
    p.tensors["class_token"] = init_weight({d}, rng);
    p.tensors["pos"] = init_weight({tokens + 1, d}, rng);
    for (std::size_t i = 0; i < cfg.depth; ++i)
      add_block_params(p, "block" + std::to_string(i) + ".", cfg, rng);
  } else {
    const std::size_t patch_in = cfg.patch_size * cfg.patch_size;
    const std::size_t k = cfg.token_rows();
    const std::size_t n = cfg.token_cols();
    p.tensors["patch_proj.w"] = init_weight({patch_in, d}, rng);
    p.tensors["patch_proj.b"] = Tensor::zeros({d}, true);
    p.tensors["class_token"] = init_weight({d}, rng);
    const auto axes = passes_per_block(cfg.variant);
    for (std::size_t i = 0; i < cfg.depth; ++i) {
      for (std::size_t j = 0; j < axes.size(); ++j) {
        std::string prefix =
            "block" + std::to_string(i) + ".pass" + std::to_string(j) + ".";
        add_block_params(p, prefix, cfg, rng);
        const std::size_t axis_len = axes[j] == Axis::kVertical ? k : n;
        p.tensors[prefix + "pos"] = init_weight({axis_len + 1, d}, rng);
      }
    }
  }
  p.tensors["head.w1"] = init_weight({d, d}, rng);
  p.tensors["head.b1"] = Tensor::zeros({d}, true);
  p.tensors["head.w2"] = init_weight({d, cfg.num_classes}, rng);
  p.tensors["head.b2"] = Tensor::zeros({cfg.num_classes}, true);
  return p;
}

BlockParamRefs collect_block(const ModelParams& params,
                             const std::string& prefix, std::size_t heads) {
  BlockParamRefs r;
  r.ln1_gamma = params.at(prefix + "ln1.g");
  r.ln1_beta = params.at(prefix + "ln1.b");
  for (std::size_t h = 0; h < heads; ++h) {
    r.wq.push_back(params.at(prefix + "attn.wq" + std::to_string(h)));
    r.wk.push_back(params.at(prefix + "attn.wk" + std::to_string(h)));
    r.wv.push_back(params.at(prefix + "attn.wv" + std::to_string(h)));
  }
  r.wo = params.at(prefix + "attn.wo");
  r.bo = params.at(prefix + "attn.bo");
  r.ln2_gamma = params.at(prefix + "ln2.g");
  r.ln2_beta = params.at(prefix + "ln2.b");
  r.mlp_w1 = params.at(prefix + "mlp.w1");
  r.mlp_b1 = params.at(prefix + "mlp.b1");
  r.mlp_w2 = params.at(prefix + "mlp.w2");
  r.mlp_b2 = params.at(prefix + "mlp.b2");
  return r;
}

Tensor tokenize_project(const MelSpectrogram& spec, const Tensor& proj_w,
                        const Tensor& proj_b, std::size_t patch_size) {
  const std::size_t p = patch_size;
  if (spec.freq_bins % p != 0 || spec.time_slots % p != 0)
    throw std::invalid_argument(
        "tokenize_project: grid " + std::to_string(spec.freq_bins) + "x" +
        std::to_string(spec.time_slots) + " not divisible by patch size " +
        std::to_string(p));
  const std::size_t k = spec.freq_bins / p;
  const std::size_t n = spec.time_slots / p;
  // Constant patch tensor [n, k, p*p]; the input carries no gradient.
  std::vector<double> patches(n * k * p * p);
  for (std::size_t j = 0; j < n; ++j)
    for (std::size_t i = 0; i < k; ++i)
      for (std::size_t di = 0; di < p; ++di)
        for (std::size_t dt = 0; dt < p; ++dt)
          patches[((j * k + i) * p + di) * p + dt] =
              spec.at(i * p + di, j * p + dt);
  Tensor patch_tensor(Shape{n, k, p * p}, std::move(patches));
  return add_bias(matmul(patch_tensor, proj_w), proj_b);
}

Tensor multi_head_attention(const Tensor& x, const BlockParamRefs& p) {
  const std::size_t heads = p.wq.size();
  const double inv_sqrt_dq = 1.0 / std::sqrt(double(p.wq[0].shape()[1]));
  std::vector<Tensor> zs;
  zs.reserve(heads);
  for (std::size_t h = 0; h < heads; ++h) {
    Tensor q = matmul(x, p.wq[h]);
    Tensor k = matmul(x, p.wk[h]);
    Tensor v = matmul(x, p.wv[h]);
    Tensor scores = scale(matmul(q, transpose_last(k)), inv_sqrt_dq);
    zs.push_back(matmul(softmax_rows(scores), v));
  }
  Tensor z = heads == 1 ? zs[0] : concat(zs, zs[0].rank() - 1);
  return add_bias(matmul(z, p.wo), p.bo);
}

Tensor transformer_block(const Tensor& x, const BlockParamRefs& p) {
  Tensor attended =
      multi_head_attention(layer_norm(x, p.ln1_gamma, p.ln1_beta), p);
  Tensor pre = add(attended, x);
  Tensor hidden =
      gelu(add_bias(matmul(layer_norm(pre, p.ln2_gamma, p.ln2_beta), p.mlp_w1),
                    p.mlp_b1));
  return add(add_bias(matmul(hidden, p.mlp_w2), p.mlp_b2), pre);
}

TokenTensor axis_pass(const TokenTensor& t, const BlockParamRefs& p,
                      const Tensor& pos, Axis axis) {
  if (t.state != ClassState::kPooled)
    throw std::logic_error(
        "axis_pass: class state must be pooled before a pass; call "
        "pool_class_tokens first");
  // values [n, k, d]: vertical attends across k within each of the n time
  // slots; horizontal attends across n within each of the k frequency bins.
  Tensor work = axis == Axis::kVertical ? t.values : transpose_01(t.values);
  const std::size_t samples = work.shape()[0];
  const std::size_t tokens = work.shape()[1];
  const std::size_t d = work.shape()[2];
  if (pos.shape() != Shape{tokens + 1, d})
    throw std::invalid_argument("axis_pass: positional table " +
                                shape_to_string(pos.shape()) +
                                " does not cover " + std::to_string(tokens) +
                                " tokens plus the class slot");
  Tensor cls_rows = tile_leading(reshape(t.class_token, {1, d}), samples);
  Tensor x = concat({cls_rows, work}, 1);  // [samples, tokens+1, d]
  x = add_broadcast(x, pos);
  Tensor y = transformer_block(x, p);
  TokenTensor out;
  out.class_token = reshape(slice(y, 1, 0, 1), {samples, d});
  Tensor vals = slice(y, 1, 1, tokens);
  out.values = axis == Axis::kVertical ? vals : transpose_01(vals);
  out.state = ClassState::kReplicated;
  return out;
}

TokenTensor pool_class_tokens(const TokenTensor& t) {
  if (t.state != ClassState::kPooled) {
    TokenTensor out;
    out.values = t.values;
    out.class_token = mean_axis(t.class_token, 0);
    out.state = ClassState::kPooled;
    return out;
  }
  throw std::logic_error("pool_class_tokens: class state is already pooled");
}

namespace {

Tensor mlp_head(const Tensor& cls, const ModelParams& params) {
  Tensor h = gelu(add_bias(matmul(cls, params.at("head.w1")),
                           params.at("head.b1")));
  Tensor logits = add_bias(matmul(h, params.at("head.w2")),
                           params.at("head.b2"));
  return reshape(logits, {logits.shape().back()});
}

}  // namespace

Tensor septr_forward(const MelSpectrogram& spec, const ModelParams& params,
                     const ModelConfig& cfg) {
  cfg.validate();
  if (spec.freq_bins != cfg.freq_bins || spec.time_slots != cfg.time_slots)
    throw std::invalid_argument(
        "septr_forward: spectrogram " + std::to_string(spec.freq_bins) + "x" +
        std::to_string(spec.time_slots) + " does not match configured grid " +
        std::to_string(cfg.freq_bins) + "x" + std::to_string(cfg.time_slots));
  TokenTensor t;
  t.values = tokenize_project(spec, params.at("patch_proj.w"),
                              params.at("patch_proj.b"), cfg.patch_size);
  t.class_token = params.at("class_token");
  t.state = ClassState::kPooled;
  const auto axes = passes_per_block(cfg.variant);
  for (std::size_t i = 0; i < cfg.depth; ++i) {
    for (std::size_t j = 0; j < axes.size(); ++j) {
      std::string prefix =
          "block" + std::to_string(i) + ".pass" + std::to_string(j) + ".";
      auto refs = collect_block(params, prefix, cfg.heads);
      t = axis_pass(t, refs, params.at(prefix + "pos"), axes[j]);
      t = pool_class_tokens(t);
    }
  }
  return mlp_head(reshape(t.class_token, {1, cfg.token_dim}), params);
}

Tensor vit_forward(const MelSpectrogram& spec, const ModelParams& params,
                   const ModelConfig& cfg) {
  cfg.validate();
  if (spec.freq_bins != cfg.freq_bins || spec.time_slots != cfg.time_slots)
    throw std::invalid_argument("vit_forward: spectrogram grid mismatch");
  const std::size_t p = cfg.vit_patch;
  const std::size_t s = cfg.vit_stride;
  const std::size_t gf = cfg.vit_grid_f();
  const std::size_t gt = cfg.vit_grid_t();
  const std::size_t tokens = gf * gt;
  std::vector<double> patches(tokens * p * p);
  for (std::size_t fi = 0; fi < gf; ++fi)
    for (std::size_t ti = 0; ti < gt; ++ti)
      for (std::size_t di = 0; di < p; ++di)
        for (std::size_t dt = 0; dt < p; ++dt)
          patches[((fi * gt + ti) * p + di) * p + dt] =
              spec.at(fi * s + di, ti * s + dt);
  Tensor patch_tensor(Shape{tokens, p * p}, std::move(patches));
  Tensor tok = add_bias(matmul(patch_tensor, params.at("patch_proj.w")),
                        params.at("patch_proj.b"));
  Tensor x = concat(
      {reshape(params.at("class_token"), {1, cfg.token_dim}), tok}, 0);
  x = add(x, params.at("pos"));
  for (std::size_t i = 0; i < cfg.depth; ++i) {
    auto refs =
        collect_block(params, "block" + std::to_string(i) + ".", cfg.heads);
    x = transformer_block(x, refs);
  }
  return mlp_head(slice(x, 0, 0, 1), params);
}

Tensor model_forward(const MelSpectrogram& spec, const ModelParams& params,
                     const ModelConfig& cfg) {
  return cfg.variant == Variant::kViT ? vit_forward(spec, params, cfg)
                                      : septr_forward(spec, params, cfg);
}

namespace {

std::size_t block_fixed_count(const ModelConfig& cfg) {
  const std::size_t d = cfg.token_dim;
  const std::size_t dh = cfg.head_dim();
  const std::size_t hidden = cfg.mlp_ratio * d;
  const std::size_t attn = 3 * cfg.heads * d * dh + cfg.heads * dh * d + d;
  const std::size_t norms = 4 * d;
  const std::size_t mlp = d * hidden + hidden + hidden * d + d;
  return attn + norms + mlp;
}

std::size_t head_count(const ModelConfig& cfg) {
  const std::size_t d = cfg.token_dim;
  return d * d + d + d * cfg.num_classes + cfg.num_classes;
}

}  // namespace

std::size_t param_count(const ModelConfig& cfg) {
  cfg.validate();
  const std::size_t d = cfg.token_dim;
  std::size_t total = 0;
  if (cfg.variant == Variant::kViT) {
    total += cfg.vit_patch * cfg.vit_patch * d + d;  // patch projection
    total += d;                                      // class token
    total += (cfg.vit_grid_f() * cfg.vit_grid_t() + 1) * d;  // joint pos table
    total += cfg.depth * block_fixed_count(cfg);
  } else {
    total += cfg.patch_size * cfg.patch_size * d + d;
    total += d;
    const auto axes = passes_per_block(cfg.variant);
    for (std::size_t i = 0; i < cfg.depth; ++i)
      for (Axis a : axes) {
        const std::size_t axis_len =
            a == Axis::kVertical ? cfg.token_rows() : cfg.token_cols();
        total += block_fixed_count(cfg) + (axis_len + 1) * d;
      }
  }
  return total + head_count(cfg);
}

std::vector<ParamScanRow> param_scan(const ModelConfig& septr_cfg,
                                     const ModelConfig& vit_cfg,
                                     const std::vector<std::size_t>& sizes) {
  std::vector<ParamScanRow> rows;
  for (std::size_t s : sizes) {
    ModelConfig sc = septr_cfg;
    sc.freq_bins = sc.time_slots = s;
    ModelConfig vc = vit_cfg;
    vc.freq_bins = vc.time_slots = s;
    ParamScanRow row;
    row.input_size = s;
    row.septr_count = param_count(sc);
    row.vit_count = param_count(vc);
    row.ratio = double(row.vit_count) / double(row.septr_count);
    rows.push_back(row);
  }
  return rows;
}

// ---- checkpoints ----

namespace {

void write_u32(std::ostream& out, std::uint32_t v) {
  out.write(reinterpret_cast<const char*>(&v), 4);
}
void write_u64(std::ostream& out, std::uint64_t v) {
  out.write(reinterpret_cast<const char*>(&v), 8);
}
std::uint32_t read_u32(std::istream& in) {
  std::uint32_t v = 0;
  in.read(reinterpret_cast<char*>(&v), 4);
  return v;
}
std::uint64_t read_u64(std::istream& in) {
  std::uint64_t v = 0;
  in.read(reinterpret_cast<char*>(&v), 8);
  return v;
}

}  // namespace

void save_checkpoint(const std::string& path, const ModelParams& params,
                     const ModelConfig& cfg) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("save_checkpoint: cannot open " + path);
  out.write("SPCK", 4);
  write_u32(out, 1);
  write_u64(out, cfg.digest());
  write_u32(out, std::uint32_t(params.tensors.size()));
  for (const auto& [name, t] : params.tensors) {
    write_u32(out, std::uint32_t(name.size()));
    out.write(name.data(), std::streamsize(name.size()));
    write_u32(out, std::uint32_t(t.rank()));
    for (std::size_t e : t.shape()) write_u64(out, e);
    out.write(reinterpret_cast<const char*>(t.values().data()),
              std::streamsize(t.numel() * sizeof(double)));
  }
}

ModelParams load_checkpoint(const std::string& path, const ModelConfig& cfg) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("load_checkpoint: cannot open " + path);
  char magic[4];
  in.read(magic, 4);
  if (std::strncmp(magic, "SPCK", 4) != 0)
    throw std::runtime_error("load_checkpoint: bad magic in " + path);
  std::uint32_t version = read_u32(in);
  if (version != 1)
    throw std::runtime_error("load_checkpoint: unsupported version " +
                             std::to_string(version));
  std::uint64_t digest = read_u64(in);
  if (digest != cfg.digest())
    throw std::runtime_error(
        "load_checkpoint: config digest mismatch; checkpoint was saved with "
        "a different model configuration");
  ModelParams params;
  const std::uint32_t count = read_u32(in);
  for (std::uint32_t i = 0; i < count; ++i) {
    std::uint32_t name_len = read_u32(in);
    std::string name(name_len, '\0');
    in.read(name.data(), name_len);
    std::uint32_t rank = read_u32(in);
    Shape shape(rank);
    for (auto& e : shape) e = read_u64(in);
    std::vector<double> values(shape_numel(shape));
    in.read(reinterpret_cast<char*>(values.data()),
            std::streamsize(values.size() * sizeof(double)));
    if (!in)
      throw std::runtime_error("load_checkpoint: truncated file " + path);
    params.tensors[name] = Tensor(std::move(shape), std::move(values), true);
  }
  return params;
}

}  // namespace septr
