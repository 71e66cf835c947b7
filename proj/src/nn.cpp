#include "ttn/nn.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <limits>
#include <thread>

#include "ttn/error.hpp"
#include "ttn/io.hpp"
#include "ttn/rng.hpp"

namespace ttn::nn {

std::string_view kind_name(LayerKind kind) {
  switch (kind) {
    case LayerKind::Conv2d: return "conv2d";
    case LayerKind::Relu: return "relu";
    case LayerKind::MaxPool2d: return "maxpool2d";
    case LayerKind::Dense: return "dense";
    case LayerKind::Flatten: return "flatten";
  }
  return "?";
}

namespace {

LayerKind kind_from_name(std::string_view s) {
  for (auto k : {LayerKind::Conv2d, LayerKind::Relu, LayerKind::MaxPool2d, LayerKind::Dense, LayerKind::Flatten}) {
    if (kind_name(k) == s) return k;
  }
  fail(ErrorCode::InvalidArgument, "unknown layer type '" + std::string(s) + "'");
}

}  // namespace

LayerSpec LayerSpec::conv2d(std::string name, std::size_t out, std::size_t kernel, std::size_t stride,
                            std::size_t pad) {
  return {LayerKind::Conv2d, std::move(name), out, kernel, stride, pad};
}
LayerSpec LayerSpec::relu(std::string name) { return {LayerKind::Relu, std::move(name)}; }
LayerSpec LayerSpec::maxpool2d(std::string name, std::size_t window, std::size_t stride) {
  return {LayerKind::MaxPool2d, std::move(name), 0, window, stride, 0};
}
LayerSpec LayerSpec::dense(std::string name, std::size_t out) { return {LayerKind::Dense, std::move(name), out}; }
LayerSpec LayerSpec::flatten(std::string name) { return {LayerKind::Flatten, std::move(name)}; }

std::vector<Shape> NetSpec::output_shapes() const {
  require(input.size() == 3, ErrorCode::ShapeMismatch, "network input must be (C, H, W)");
  for (auto d : input) require(d > 0, ErrorCode::ShapeMismatch, "zero-sized network input");
  require(!layers.empty(), ErrorCode::ShapeMismatch, "network has no layers");
  std::vector<Shape> shapes;
  Shape cur = input;
  for (const auto& l : layers) {
    const std::string where = "layer '" + l.name + "' (" + std::string(kind_name(l.kind)) + ")";
    switch (l.kind) {
      case LayerKind::Conv2d: {
        require(cur.size() == 3, ErrorCode::ShapeMismatch, where + " needs a (C,H,W) input");
        require(l.out > 0 && l.kernel > 0 && l.stride > 0, ErrorCode::ShapeMismatch, where + " has a zero size");
        require(cur[1] + 2 * l.pad >= l.kernel && cur[2] + 2 * l.pad >= l.kernel, ErrorCode::ShapeMismatch,
                where + " kernel larger than padded input");
        cur = {l.out, (cur[1] + 2 * l.pad - l.kernel) / l.stride + 1, (cur[2] + 2 * l.pad - l.kernel) / l.stride + 1};
        break;
      }
      case LayerKind::MaxPool2d: {
        require(cur.size() == 3, ErrorCode::ShapeMismatch, where + " needs a (C,H,W) input");
        require(l.kernel > 0 && l.stride > 0, ErrorCode::ShapeMismatch, where + " has a zero size");
        require(cur[1] >= l.kernel && cur[2] >= l.kernel, ErrorCode::ShapeMismatch, where + " window larger than input");
        cur = {cur[0], (cur[1] - l.kernel) / l.stride + 1, (cur[2] - l.kernel) / l.stride + 1};
        break;
      }
      case LayerKind::Dense:
        require(cur.size() == 1, ErrorCode::ShapeMismatch, where + " needs a flat input");
        require(l.out > 0, ErrorCode::ShapeMismatch, where + " has zero outputs");
        cur = {l.out};
        break;
      case LayerKind::Flatten:
        cur = {shape_size(cur)};
        break;
      case LayerKind::Relu:
        break;
    }
    shapes.push_back(cur);
  }
  require(shapes.back().size() == 1, ErrorCode::ShapeMismatch, "network output must be flat");
  return shapes;
}

std::size_t NetSpec::output_dim() const { return output_shapes().back()[0]; }

std::optional<std::size_t> NetSpec::find(std::string_view name) const {
  for (std::size_t i = 0; i < layers.size(); ++i) {
    if (layers[i].name == name) return i;
  }
  return std::nullopt;
}

nlohmann::json NetSpec::to_json() const {
  nlohmann::json ls = nlohmann::json::array();
  for (const auto& l : layers) {
    nlohmann::json j = {{"type", kind_name(l.kind)}, {"name", l.name}};
    switch (l.kind) {
      case LayerKind::Conv2d:
        j["out"] = l.out;
        j["kernel"] = l.kernel;
        j["stride"] = l.stride;
        j["pad"] = l.pad;
        break;
      case LayerKind::MaxPool2d:
        j["window"] = l.kernel;
        j["stride"] = l.stride;
        break;
      case LayerKind::Dense:
        j["out"] = l.out;
        break;
      default:
        break;
    }
    ls.push_back(std::move(j));
  }
  return {{"input", input}, {"layers", ls}};
}

NetSpec NetSpec::from_json(const nlohmann::json& j) {
  NetSpec spec;
  try {
    spec.input = j.at("input").get<Shape>();
    for (const auto& lj : j.at("layers")) {
      LayerSpec l;
      l.kind = kind_from_name(lj.at("type").get<std::string>());
      l.name = lj.value("name", std::string(kind_name(l.kind)) + std::to_string(spec.layers.size()));
      switch (l.kind) {
        case LayerKind::Conv2d:
          l.out = lj.at("out").get<std::size_t>();
          l.kernel = lj.at("kernel").get<std::size_t>();
          l.stride = lj.value("stride", std::size_t{1});
          l.pad = lj.value("pad", std::size_t{0});
          break;
        case LayerKind::MaxPool2d:
          l.kernel = lj.at("window").get<std::size_t>();
          l.stride = lj.value("stride", l.kernel);
          break;
        case LayerKind::Dense:
          l.out = lj.at("out").get<std::size_t>();
          break;
        default:
          break;
      }
      spec.layers.push_back(std::move(l));
    }
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::InvalidArgument, std::string("net spec: ") + e.what());
  }
  for (std::size_t i = 0; i < spec.layers.size(); ++i) {
    for (std::size_t k = 0; k < i; ++k) {
      require(spec.layers[i].name != spec.layers[k].name, ErrorCode::DuplicateId,
              "duplicate layer name '" + spec.layers[i].name + "'");
    }
  }
  spec.output_shapes();
  return spec;
}

NetSpec tiny_topic_net(std::size_t k, std::size_t side, std::size_t channels) {
  NetSpec s;
  s.input = {channels, side, side};
  s.layers = {
      LayerSpec::conv2d("conv1", 16, 3, 1, 1), LayerSpec::relu("relu1"), LayerSpec::maxpool2d("pool1", 2, 2),
      LayerSpec::conv2d("conv2", 32, 3, 1, 1), LayerSpec::relu("relu2"), LayerSpec::maxpool2d("pool2", 2, 2),
      LayerSpec::flatten("flatten"),           LayerSpec::dense("fc7", 128), LayerSpec::relu("relu7"),
      LayerSpec::dense("fc8", k),
  };
  return s;
}

std::string resolve_layer_alias(const NetSpec& spec, std::string_view name) {
  if (spec.find(name) || name == "input") return std::string(name);
  if (name == "pool5" && spec.find("pool2")) return "pool2";
  if (name == "logits" && !spec.layers.empty()) return spec.layers.back().name;
  return std::string(name);
}

namespace {

std::size_t fan_in(const Shape& in, const LayerSpec& l) {
  return l.kind == LayerKind::Conv2d ? in[0] * l.kernel * l.kernel : in[0];
}

Shape layer_input(const NetSpec& spec, const std::vector<Shape>& shapes, std::size_t i) {
  return i == 0 ? spec.input : shapes[i - 1];
}

std::pair<Shape, Shape> param_shapes(const NetSpec& spec, const std::vector<Shape>& shapes, std::size_t i) {
  const auto& l = spec.layers[i];
  const Shape in = layer_input(spec, shapes, i);
  if (l.kind == LayerKind::Conv2d) return {{l.out, in[0], l.kernel, l.kernel}, {l.out}};
  return {{l.out, in[0]}, {l.out}};
}

}  // namespace

ParamBlock init_layer(const NetSpec& spec, std::size_t layer, std::uint64_t seed) {
  const auto shapes = spec.output_shapes();
  const auto& l = spec.layers.at(layer);
  if (!l.has_params()) return {};
  const Shape in = layer_input(spec, shapes, layer);
  const std::size_t fi = fan_in(in, l);
  auto [ws, bs] = param_shapes(spec, shapes, layer);
  ParamBlock b{Tensor(ws), Tensor(bs)};
  const double a = std::sqrt(6.0 / static_cast<double>(fi));
  Rng rng(derive_seed(seed, layer));
  for (auto& w : b.weight.values()) w = rng.uniform(-a, a);
  return b;
}

NetParams init_params(const NetSpec& spec, std::uint64_t seed) {
  spec.output_shapes();
  NetParams p;
  for (std::size_t i = 0; i < spec.layers.size(); ++i) {
    p.layers.push_back(init_layer(spec, i, seed));
    ParamBlock v;
    if (spec.layers[i].has_params()) {
      v.weight = Tensor(p.layers.back().weight.shape());
      v.bias = Tensor(p.layers.back().bias.shape());
    }
    p.velocity.push_back(std::move(v));
  }
  return p;
}

std::size_t default_threads() {
  if (const char* env = std::getenv("TTN_THREADS")) {
    const long n = std::strtol(env, nullptr, 10);
    if (n >= 1) return static_cast<std::size_t>(n);
  }
  return 1;
}

namespace {

template <typename Fn>
void parallel_for(std::size_t n, std::size_t threads, Fn&& fn) {
  threads = std::max<std::size_t>(1, std::min(threads, n));
  if (threads == 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i, 0);
    return;
  }
  std::vector<std::thread> pool;
  pool.reserve(threads);
  for (std::size_t t = 0; t < threads; ++t) {
    pool.emplace_back([&, t] {
      for (std::size_t i = t; i < n; i += threads) fn(i, t);
    });
  }
  for (auto& th : pool) th.join();
}

// Four interleaved partial sums; the summation order is fixed.
double dot(const double* a, const double* b, std::size_t n) {
  double s0 = 0, s1 = 0, s2 = 0, s3 = 0;
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    s0 += a[i] * b[i];
    s1 += a[i + 1] * b[i + 1];
    s2 += a[i + 2] * b[i + 2];
    s3 += a[i + 3] * b[i + 3];
  }
  for (; i < n; ++i) s0 += a[i] * b[i];
  return (s0 + s1) + (s2 + s3);
}

struct ConvGeom {
  std::size_t c, h, w, k, stride, pad, oh, ow;
  std::size_t rows() const { return c * k * k; }
  std::size_t cols() const { return oh * ow; }
};

ConvGeom conv_geom(const Shape& in, const LayerSpec& l) {
  return {in[0], in[1], in[2], l.kernel, l.stride, l.pad,
          (in[1] + 2 * l.pad - l.kernel) / l.stride + 1, (in[2] + 2 * l.pad - l.kernel) / l.stride + 1};
}

void im2col(const double* x, const ConvGeom& g, std::vector<double>& col) {
  col.assign(g.rows() * g.cols(), 0.0);
  for (std::size_t c = 0; c < g.c; ++c) {
    for (std::size_t ky = 0; ky < g.k; ++ky) {
      for (std::size_t kx = 0; kx < g.k; ++kx) {
        double* row = &col[((c * g.k + ky) * g.k + kx) * g.cols()];
        for (std::size_t oy = 0; oy < g.oh; ++oy) {
          const auto iy = static_cast<std::ptrdiff_t>(oy * g.stride + ky) - static_cast<std::ptrdiff_t>(g.pad);
          if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(g.h)) continue;
          for (std::size_t ox = 0; ox < g.ow; ++ox) {
            const auto ix = static_cast<std::ptrdiff_t>(ox * g.stride + kx) - static_cast<std::ptrdiff_t>(g.pad);
            if (ix < 0 || ix >= static_cast<std::ptrdiff_t>(g.w)) continue;
            row[oy * g.ow + ox] = x[(c * g.h + static_cast<std::size_t>(iy)) * g.w + static_cast<std::size_t>(ix)];
          }
        }
      }
    }
  }
}

void col2im(const std::vector<double>& col, const ConvGeom& g, double* dx) {
  std::fill(dx, dx + g.c * g.h * g.w, 0.0);
  for (std::size_t c = 0; c < g.c; ++c) {
    for (std::size_t ky = 0; ky < g.k; ++ky) {
      for (std::size_t kx = 0; kx < g.k; ++kx) {
        const double* row = &col[((c * g.k + ky) * g.k + kx) * g.cols()];
        for (std::size_t oy = 0; oy < g.oh; ++oy) {
          const auto iy = static_cast<std::ptrdiff_t>(oy * g.stride + ky) - static_cast<std::ptrdiff_t>(g.pad);
          if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(g.h)) continue;
          for (std::size_t ox = 0; ox < g.ow; ++ox) {
            const auto ix = static_cast<std::ptrdiff_t>(ox * g.stride + kx) - static_cast<std::ptrdiff_t>(g.pad);
            if (ix < 0 || ix >= static_cast<std::ptrdiff_t>(g.w)) continue;
            dx[(c * g.h + static_cast<std::size_t>(iy)) * g.w + static_cast<std::size_t>(ix)] += row[oy * g.ow + ox];
          }
        }
      }
    }
  }
}

void conv_forward(const double* x, const ConvGeom& g, const ParamBlock& p, std::size_t out_ch, double* y,
                  std::vector<double>& col) {
  im2col(x, g, col);
  const std::size_t rows = g.rows(), cols = g.cols();
  const double* w = p.weight.values().data();
  for (std::size_t o = 0; o < out_ch; ++o) {
    double* yo = y + o * cols;
    std::fill(yo, yo + cols, p.bias[o]);
    for (std::size_t j = 0; j < rows; ++j) {
      const double wj = w[o * rows + j];
      const double* cj = &col[j * cols];
      for (std::size_t q = 0; q < cols; ++q) yo[q] += wj * cj[q];
    }
  }
}

void maxpool_forward(const double* x, const Shape& in, const LayerSpec& l, double* y, std::uint32_t* arg) {
  const std::size_t c = in[0], h = in[1], w = in[2];
  const std::size_t oh = (h - l.kernel) / l.stride + 1, ow = (w - l.kernel) / l.stride + 1;
  for (std::size_t ch = 0; ch < c; ++ch) {
    for (std::size_t oy = 0; oy < oh; ++oy) {
      for (std::size_t ox = 0; ox < ow; ++ox) {
        std::size_t best = (ch * h + oy * l.stride) * w + ox * l.stride;
        for (std::size_t ky = 0; ky < l.kernel; ++ky) {
          for (std::size_t kx = 0; kx < l.kernel; ++kx) {
            const std::size_t idx = (ch * h + oy * l.stride + ky) * w + ox * l.stride + kx;
            if (x[idx] > x[best]) best = idx;
          }
        }
        const std::size_t o = (ch * oh + oy) * ow + ox;
        y[o] = x[best];
        arg[o] = static_cast<std::uint32_t>(best);
      }
    }
  }
}

}  // namespace

ForwardResult forward(const NetSpec& spec, const NetParams& params, const Tensor& batch, std::size_t threads) {
  const auto shapes = spec.output_shapes();
  require(batch.rank() == 4 && Shape(batch.shape().begin() + 1, batch.shape().end()) == spec.input,
          ErrorCode::ShapeMismatch,
          "batch shape " + shape_str(batch.shape()) + " incompatible with input " + shape_str(spec.input));
  require(params.layers.size() == spec.layers.size(), ErrorCode::ShapeMismatch, "params do not match spec");
  for (std::size_t i = 0; i < spec.layers.size(); ++i) {
    if (!spec.layers[i].has_params()) continue;
    const auto [ws, bs] = param_shapes(spec, shapes, i);
    require(params.layers[i].weight.shape() == ws && params.layers[i].bias.shape() == bs,
            ErrorCode::ShapeMismatch, "parameter shapes of '" + spec.layers[i].name + "' do not match spec");
  }

  const std::size_t n = batch.dim(0);
  ForwardResult res;
  auto& acts = res.cache.activations;
  acts.reserve(spec.layers.size() + 1);
  acts.push_back(batch);
  res.cache.pool_argmax.resize(spec.layers.size());
  for (std::size_t i = 0; i < spec.layers.size(); ++i) {
    Shape s{n};
    s.insert(s.end(), shapes[i].begin(), shapes[i].end());
    acts.emplace_back(s);
    if (spec.layers[i].kind == LayerKind::MaxPool2d) res.cache.pool_argmax[i].resize(n * shape_size(shapes[i]));
  }

  parallel_for(n, threads, [&](std::size_t b, std::size_t) {
    std::vector<double> col;
    for (std::size_t i = 0; i < spec.layers.size(); ++i) {
      const auto& l = spec.layers[i];
      const Shape in = layer_input(spec, shapes, i);
      const double* x = acts[i].item(b).data();
      double* y = acts[i + 1].item(b).data();
      const std::size_t in_size = shape_size(in);
      const std::size_t out_size = shape_size(shapes[i]);
      switch (l.kind) {
        case LayerKind::Conv2d:
          conv_forward(x, conv_geom(in, l), params.layers[i], l.out, y, col);
          break;
        case LayerKind::Relu:
          for (std::size_t q = 0; q < in_size; ++q) y[q] = x[q] > 0.0 ? x[q] : 0.0;
          break;
        case LayerKind::MaxPool2d:
          maxpool_forward(x, in, l, y, res.cache.pool_argmax[i].data() + b * out_size);
          break;
        case LayerKind::Dense: {
          const double* w = params.layers[i].weight.values().data();
          for (std::size_t o = 0; o < l.out; ++o) y[o] = params.layers[i].bias[o] + dot(w + o * in_size, x, in_size);
          break;
        }
        case LayerKind::Flatten:
          std::copy(x, x + in_size, y);
          break;
      }
    }
  });

  res.logits = acts.back();
  return res;
}

namespace {

std::vector<ParamBlock> zero_grads(const NetParams& params) {
  std::vector<ParamBlock> g;
  g.reserve(params.layers.size());
  for (const auto& p : params.layers) {
    ParamBlock b;
    if (!p.weight.empty()) {
      b.weight = Tensor(p.weight.shape());
      b.bias = Tensor(p.bias.shape());
    }
    g.push_back(std::move(b));
  }
  return g;
}

void clear(std::vector<ParamBlock>& g) {
  for (auto& b : g) {
    b.weight.fill(0.0);
    b.bias.fill(0.0);
  }
}

void accumulate(std::vector<ParamBlock>& into, const std::vector<ParamBlock>& from) {
  for (std::size_t i = 0; i < into.size(); ++i) {
    auto& w = into[i].weight.values();
    const auto& fw = from[i].weight.values();
    for (std::size_t q = 0; q < w.size(); ++q) w[q] += fw[q];
    auto& b = into[i].bias.values();
    const auto& fb = from[i].bias.values();
    for (std::size_t q = 0; q < b.size(); ++q) b[q] += fb[q];
  }
}

// Gradients of one sample; writes parameter grads into `g` (assumed zeroed)
// and, if dx_out is non-null, the input gradient.
void backward_sample(const NetSpec& spec, const std::vector<Shape>& shapes, const NetParams& params,
                     const ForwardCache& cache, std::size_t b, std::span<const double> grad_out,
                     std::vector<ParamBlock>& g, double* dx_out) {
  std::vector<double> dy(grad_out.begin(), grad_out.end());
  std::vector<double> dx;
  std::vector<double> col, dcol;
  for (std::size_t i = spec.layers.size(); i-- > 0;) {
    const auto& l = spec.layers[i];
    const Shape in = layer_input(spec, shapes, i);
    const std::size_t in_size = shape_size(in);
    const double* x = cache.activations[i].item(b).data();
    const bool need_dx = i > 0 || dx_out != nullptr;
    if (!need_dx && !l.has_params()) break;
    if (need_dx) dx.assign(in_size, 0.0);
    switch (l.kind) {
      case LayerKind::Conv2d: {
        const auto geom = conv_geom(in, l);
        const std::size_t rows = geom.rows(), cols = geom.cols();
        im2col(x, geom, col);
        const double* w = params.layers[i].weight.values().data();
        double* dw = g[i].weight.values().data();
        double* db = g[i].bias.values().data();
        for (std::size_t o = 0; o < l.out; ++o) {
          const double* dyo = &dy[o * cols];
          double s = 0.0;
          for (std::size_t q = 0; q < cols; ++q) s += dyo[q];
          db[o] += s;
          for (std::size_t j = 0; j < rows; ++j) dw[o * rows + j] += dot(dyo, &col[j * cols], cols);
        }
        if (need_dx) {
          dcol.assign(rows * cols, 0.0);
          for (std::size_t o = 0; o < l.out; ++o) {
            const double* dyo = &dy[o * cols];
            for (std::size_t j = 0; j < rows; ++j) {
              const double wj = w[o * rows + j];
              double* dc = &dcol[j * cols];
              for (std::size_t q = 0; q < cols; ++q) dc[q] += wj * dyo[q];
            }
          }
          col2im(dcol, geom, dx.data());
        }
        break;
      }
      case LayerKind::Relu:
        for (std::size_t q = 0; q < in_size; ++q) dx[q] = x[q] > 0.0 ? dy[q] : 0.0;
        break;
      case LayerKind::MaxPool2d: {
        const std::size_t out_size = shape_size(shapes[i]);
        const std::uint32_t* arg = cache.pool_argmax[i].data() + b * out_size;
        for (std::size_t q = 0; q < out_size; ++q) dx[arg[q]] += dy[q];
        break;
      }
      case LayerKind::Dense: {
        const double* w = params.layers[i].weight.values().data();
        double* dw = g[i].weight.values().data();
        double* db = g[i].bias.values().data();
        for (std::size_t o = 0; o < l.out; ++o) {
          const double d = dy[o];
          db[o] += d;
          double* dwo = dw + o * in_size;
          for (std::size_t q = 0; q < in_size; ++q) dwo[q] += d * x[q];
          if (need_dx) {
            const double* wo = w + o * in_size;
            for (std::size_t q = 0; q < in_size; ++q) dx[q] += d * wo[q];
          }
        }
        break;
      }
      case LayerKind::Flatten:
        std::copy(dy.begin(), dy.end(), dx.begin());
        break;
    }
    if (!need_dx) break;
    dy.swap(dx);
  }
  if (dx_out != nullptr) std::copy(dy.begin(), dy.end(), dx_out);
}

}  // namespace

Gradients backward(const NetSpec& spec, const NetParams& params, const ForwardCache& cache, const Tensor& grad_logits,
                   bool want_input_grad, std::size_t threads) {
  const auto shapes = spec.output_shapes();
  require(cache.activations.size() == spec.layers.size() + 1, ErrorCode::ShapeMismatch,
          "forward cache does not match spec");
  const std::size_t n = cache.activations.front().dim(0);
  require(grad_logits.shape() == Shape{n, shapes.back()[0]}, ErrorCode::ShapeMismatch,
          "grad_logits shape " + shape_str(grad_logits.shape()) + " does not match logits");

  Gradients out;
  out.layers = zero_grads(params);
  if (want_input_grad) out.input = Tensor(cache.activations.front().shape());

  threads = std::max<std::size_t>(1, std::min(threads, n));
  std::vector<std::vector<ParamBlock>> scratch(threads, zero_grads(params));
  for (std::size_t start = 0; start < n; start += threads) {
    const std::size_t group = std::min(threads, n - start);
    parallel_for(group, group, [&](std::size_t t, std::size_t) {
      clear(scratch[t]);
      const std::size_t b = start + t;
      backward_sample(spec, shapes, params, cache, b, grad_logits.item(b), scratch[t],
                      want_input_grad ? out.input.item(b).data() : nullptr);
    });
    for (std::size_t t = 0; t < group; ++t) accumulate(out.layers, scratch[t]);
  }
  return out;
}

double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

namespace {

void check_finite(const Tensor& t, const char* what) {
  for (double v : t.values()) require(std::isfinite(v), ErrorCode::NonFiniteInput, std::string("non-finite ") + what);
}

}  // namespace

LossResult sigmoid_cross_entropy(const Tensor& logits, const Tensor& targets) {
  require(logits.rank() == 2 && logits.shape() == targets.shape(), ErrorCode::ShapeMismatch,
          "logits " + shape_str(logits.shape()) + " vs targets " + shape_str(targets.shape()));
  check_finite(logits, "logits");
  check_finite(targets, "targets");
  const double inv_b = 1.0 / static_cast<double>(logits.dim(0));
  LossResult r{0.0, Tensor(logits.shape())};
  double total = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    const double x = logits[i], t = targets[i];
    require(t >= 0.0 && t <= 1.0, ErrorCode::InvalidArgument, "target outside [0, 1]");
    total += std::max(x, 0.0) - x * t + std::log1p(std::exp(-std::abs(x)));
    r.grad[i] = (sigmoid(x) - t) * inv_b;
  }
  r.loss = total * inv_b;
  return r;
}

LossResult softmax_cross_entropy(const Tensor& logits, const std::vector<std::size_t>& labels) {
  require(logits.rank() == 2 && logits.dim(0) == labels.size(), ErrorCode::ShapeMismatch,
          "logits " + shape_str(logits.shape()) + " vs " + std::to_string(labels.size()) + " labels");
  check_finite(logits, "logits");
  const std::size_t n = logits.dim(0), k = logits.dim(1);
  const double inv_b = 1.0 / static_cast<double>(n);
  LossResult r{0.0, Tensor(logits.shape())};
  double total = 0.0;
  for (std::size_t b = 0; b < n; ++b) {
    require(labels[b] < k, ErrorCode::IndexOutOfRange, "class label out of range");
    const auto x = logits.item(b);
    auto g = r.grad.item(b);
    const double m = *std::max_element(x.begin(), x.end());
    double z = 0.0;
    for (std::size_t c = 0; c < k; ++c) z += std::exp(x[c] - m);
    const double log_z = m + std::log(z);
    total += log_z - x[labels[b]];
    for (std::size_t c = 0; c < k; ++c) g[c] = (std::exp(x[c] - log_z) - (c == labels[b] ? 1.0 : 0.0)) * inv_b;
  }
  r.loss = total * inv_b;
  return r;
}

SgdConfig SgdConfig::pretrain() { return {0.001, 0.1, 50000, 0.9, 64, 120000}; }

SgdConfig SgdConfig::finetune() { return {0.0001, 0.1, 30000, 0.9, 64, 120000}; }

void SgdConfig::validate() const {
  require(base_lr > 0.0, ErrorCode::InvalidArgument, "base_lr must be > 0");
  require(lr_decay_factor > 0.0 && lr_decay_factor <= 1.0, ErrorCode::InvalidArgument, "lr decay must be in (0, 1]");
  require(lr_step > 0, ErrorCode::InvalidArgument, "lr_step must be > 0");
  require(momentum >= 0.0 && momentum < 1.0, ErrorCode::InvalidArgument, "momentum must be in [0, 1)");
  require(batch_size > 0, ErrorCode::InvalidArgument, "batch_size must be > 0");
}

nlohmann::json SgdConfig::to_json() const {
  return {{"base_lr", base_lr},         {"lr_decay_factor", lr_decay_factor}, {"lr_step", lr_step},
          {"momentum", momentum},       {"batch_size", batch_size},           {"max_iters", max_iters}};
}

SgdConfig SgdConfig::from_json(const nlohmann::json& j) {
  SgdConfig c;
  c.base_lr = j.value("base_lr", c.base_lr);
  c.lr_decay_factor = j.value("lr_decay_factor", c.lr_decay_factor);
  c.lr_step = j.value("lr_step", c.lr_step);
  c.momentum = j.value("momentum", c.momentum);
  c.batch_size = j.value("batch_size", c.batch_size);
  c.max_iters = j.value("max_iters", c.max_iters);
  return c;
}

double learning_rate(const SgdConfig& cfg, std::size_t iter) {
  double lr = cfg.base_lr;
  for (std::size_t steps = iter / cfg.lr_step; steps > 0 && lr > 0.0; --steps) lr *= cfg.lr_decay_factor;
  return lr;
}

void sgd_step(NetParams& params, const Gradients& grads, const SgdConfig& cfg, std::size_t iter) {
  require(grads.layers.size() == params.layers.size(), ErrorCode::ShapeMismatch, "gradient/param layer mismatch");
  const double lr = learning_rate(cfg, iter);
  auto update = [&](Tensor& w, Tensor& v, const Tensor& g) {
    require(w.shape() == g.shape() && v.shape() == w.shape(), ErrorCode::ShapeMismatch, "gradient shape mismatch");
    for (std::size_t q = 0; q < w.size(); ++q) {
      v[q] = cfg.momentum * v[q] - lr * g[q];
      w[q] += v[q];
    }
  };
  for (std::size_t i = 0; i < params.layers.size(); ++i) {
    if (params.layers[i].weight.empty()) continue;
    update(params.layers[i].weight, params.velocity[i].weight, grads.layers[i].weight);
    update(params.layers[i].bias, params.velocity[i].bias, grads.layers[i].bias);
  }
}

std::string serialize_weights(const NetSpec& spec, const NetParams& params, const nlohmann::json& extra) {
  nlohmann::json header = extra.is_object() ? extra : nlohmann::json::object();
  header["format"] = "ttn-net";
  header["version"] = 1;
  header["spec"] = spec.to_json();
  io::ByteWriter w;
  for (const auto* blocks : {&params.layers, &params.velocity}) {
    for (const auto& b : *blocks) {
      w.f64s(b.weight.values());
      w.f64s(b.bias.values());
    }
  }
  return io::encode_container(io::kNetMagic, header, w.data());
}

WeightsFile deserialize_weights(std::string_view bytes) {
  auto c = io::decode_container(io::kNetMagic, bytes);
  WeightsFile f;
  try {
    require(c.header.at("version").get<int>() == 1, ErrorCode::FormatVersionMismatch, "unsupported net version");
    f.spec = NetSpec::from_json(c.header.at("spec"));
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::CorruptFile, std::string("net header: ") + e.what());
  }
  f.params = init_params(f.spec, 0);
  io::ByteReader r(c.payload);
  for (auto* blocks : {&f.params.layers, &f.params.velocity}) {
    for (auto& b : *blocks) {
      r.f64s(b.weight.data());
      r.f64s(b.bias.data());
    }
  }
  require(r.remaining() == 0, ErrorCode::CorruptFile, "trailing bytes after weights payload");
  f.header = std::move(c.header);
  return f;
}

}  // namespace ttn::nn
