#pragma once

// Feature extractor (identity or small MLP) and a bias-free linear
// classifier head, plus a plain-text checkpoint format that round-trips
// every parameter bit-exactly.

#include <cstdint>
#include <filesystem>
#include <sstream>
#include <string>
#include <vector>

#include "lowshot/io.hpp"
#include "lowshot/linalg.hpp"

namespace lowshot {

enum class Activation : std::uint8_t { relu, none };

inline const char* activation_name(Activation a) {
  return a == Activation::relu ? "relu" : "none";
}

inline Activation activation_from_name(std::string_view name) {
  if (name == "relu") return Activation::relu;
  if (name == "none") return Activation::none;
  throw parse_error("unknown activation '" + std::string(name) + "'");
}

struct Layer {
  Matrix weight;  // out x in
  Vector bias;    // out
  Activation act = Activation::none;

  bool operator==(const Layer&) const = default;
};

// Empty layer list means the identity map (features used as-is).
struct ExtractorParams {
  std::vector<Layer> layers;

  bool is_identity() const { return layers.empty(); }

  std::size_t output_dim(std::size_t input_dim) const {
    return is_identity() ? input_dim : layers.back().weight.rows;
  }

  void validate(std::size_t input_dim) const {
    std::size_t dim = input_dim;
    for (std::size_t i = 0; i < layers.size(); ++i) {
      const Layer& l = layers[i];
      if (l.weight.rows == 0 || l.weight.cols == 0)
        throw shape_error("extractor layer " + std::to_string(i) + ": empty weight");
      if (l.weight.cols != dim)
        throw shape_error("extractor layer " + std::to_string(i) + ": expects input dim " +
                          std::to_string(l.weight.cols) + ", got " + std::to_string(dim));
      if (l.bias.size() != l.weight.rows)
        throw shape_error("extractor layer " + std::to_string(i) + ": bias size " +
                          std::to_string(l.bias.size()) + " != rows " +
                          std::to_string(l.weight.rows));
      dim = l.weight.rows;
    }
  }

  bool operator==(const ExtractorParams&) const = default;
};

// Classifier weights, one row per class. No bias term: scores are w_k' phi,
// so the decision surface between two classes passes through the origin.
struct HeadWeights {
  Matrix W;  // K x d

  std::size_t num_classes() const { return W.rows; }
  std::size_t feature_dim() const { return W.cols; }

  bool operator==(const HeadWeights&) const = default;
};

struct ModelParams {
  ExtractorParams extractor;
  HeadWeights head;

  bool operator==(const ModelParams&) const = default;
};

inline Vector apply_activation(Activation a, Vector v) {
  if (a == Activation::relu)
    for (double& x : v) x = x > 0.0 ? x : 0.0;
  return v;
}

inline Vector extract(const ExtractorParams& p, std::span<const double> x) {
  Vector h(x.begin(), x.end());
  for (const Layer& l : p.layers) {
    Vector pre = matvec(l.weight, h);
    for (std::size_t i = 0; i < pre.size(); ++i) pre[i] += l.bias[i];
    h = apply_activation(l.act, std::move(pre));
  }
  return h;
}

inline Matrix extract_batch(const ExtractorParams& p, const Matrix& X) {
  Matrix out(X.rows, p.output_dim(X.cols));
  for (std::size_t i = 0; i < X.rows; ++i) out.set_row(i, extract(p, X.row(i)));
  return out;
}

// Per-layer inputs and pre-activations kept from a forward pass so the
// backward pass can be run without recomputing.
struct ForwardTrace {
  std::vector<Vector> inputs;  // inputs[i] feeds layers[i]
  std::vector<Vector> pre;     // pre[i] = W_i inputs[i] + b_i
  Vector output;
};

inline ForwardTrace extract_traced(const ExtractorParams& p, std::span<const double> x) {
  ForwardTrace t;
  Vector h(x.begin(), x.end());
  for (const Layer& l : p.layers) {
    t.inputs.push_back(h);
    Vector pre = matvec(l.weight, h);
    for (std::size_t i = 0; i < pre.size(); ++i) pre[i] += l.bias[i];
    t.pre.push_back(pre);
    h = apply_activation(l.act, std::move(pre));
  }
  t.output = std::move(h);
  return t;
}

inline ExtractorParams zeros_like(const ExtractorParams& p) {
  ExtractorParams g;
  g.layers.reserve(p.layers.size());
  for (const Layer& l : p.layers)
    g.layers.push_back({Matrix(l.weight.rows, l.weight.cols),
                        Vector(l.bias.size(), 0.0), l.act});
  return g;
}

// Backpropagates grad_output through the trace, accumulating parameter
// gradients into `grads` (so batch sums fall out of repeated calls) and
// returning the gradient w.r.t. the raw input. relu' at 0 is taken as 0.
inline Vector extract_backward(const ExtractorParams& p, const ForwardTrace& t,
                               Vector grad_output, ExtractorParams& grads) {
  Vector g = std::move(grad_output);
  for (std::size_t li = p.layers.size(); li-- > 0;) {
    const Layer& l = p.layers[li];
    Layer& gl = grads.layers[li];
    if (l.act == Activation::relu)
      for (std::size_t i = 0; i < g.size(); ++i)
        if (!(t.pre[li][i] > 0.0)) g[i] = 0.0;
    for (std::size_t i = 0; i < l.weight.rows; ++i) {
      gl.bias[i] += g[i];
      for (std::size_t j = 0; j < l.weight.cols; ++j)
        gl.weight(i, j) += g[i] * t.inputs[li][j];
    }
    Vector g_in(l.weight.cols, 0.0);
    for (std::size_t i = 0; i < l.weight.rows; ++i)
      for (std::size_t j = 0; j < l.weight.cols; ++j)
        g_in[j] += l.weight(i, j) * g[i];
    g = std::move(g_in);
  }
  return g;
}

inline Vector logits(const HeadWeights& head, std::span<const double> phi) {
  return matvec(head.W, phi);
}

// Two-layer MLP: input_dim -> hidden (relu) -> out_dim (linear).
// Weights are He-initialised, normal(0, sqrt(2 / fan_in)); biases zero.
inline ExtractorParams make_mlp(std::size_t input_dim, std::size_t hidden,
                                std::size_t out_dim, Rng& rng) {
  if (input_dim == 0 || hidden == 0 || out_dim == 0)
    throw std::invalid_argument("make_mlp: dims must be >= 1");
  auto init_layer = [&](std::size_t out, std::size_t in, Activation act) {
    Layer l{Matrix(out, in), Vector(out, 0.0), act};
    const double std_dev = std::sqrt(2.0 / static_cast<double>(in));
    for (double& w : l.weight.data) w = std_dev * rng.normal();
    return l;
  };
  ExtractorParams p;
  p.layers.push_back(init_layer(hidden, input_dim, Activation::relu));
  p.layers.push_back(init_layer(out_dim, hidden, Activation::none));
  return p;
}

// Classifier rows start as small random directions, normal(0, 0.01).
inline HeadWeights make_head(std::size_t num_classes, std::size_t feature_dim, Rng& rng) {
  if (num_classes == 0 || feature_dim == 0)
    throw std::invalid_argument("make_head: dims must be >= 1");
  HeadWeights h{Matrix(num_classes, feature_dim)};
  for (double& w : h.W.data) w = 0.01 * rng.normal();
  return h;
}

struct Checkpoint {
  ModelParams params;
  std::uint64_t seed = 0;

  bool operator==(const Checkpoint&) const = default;
};

inline void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path) {
  std::ostringstream out;
  out << "lowshot-checkpoint v1\n";
  out << "seed " << ckpt.seed << "\n";
  out << "extractor " << ckpt.params.extractor.layers.size() << "\n";
  auto write_row = [&](std::span<const double> row) {
    for (std::size_t j = 0; j < row.size(); ++j) {
      if (j) out << " ";
      out << format_double(row[j]);
    }
    out << "\n";
  };
  for (const Layer& l : ckpt.params.extractor.layers) {
    out << "layer " << l.weight.rows << " " << l.weight.cols << " "
        << activation_name(l.act) << "\n";
    for (std::size_t i = 0; i < l.weight.rows; ++i) write_row(l.weight.row(i));
    write_row(l.bias);
  }
  const Matrix& W = ckpt.params.head.W;
  out << "head " << W.rows << " " << W.cols << "\n";
  for (std::size_t i = 0; i < W.rows; ++i) write_row(W.row(i));
  write_file_atomic(path, out.str());
}

namespace detail {

struct LineReader {
  std::string_view rest;
  std::string where;
  std::size_t line_no = 0;

  std::string_view next() {
    if (rest.empty()) fail("unexpected end of file");
    std::size_t pos = rest.find('\n');
    std::string_view line = pos == std::string_view::npos ? rest : rest.substr(0, pos);
    rest = pos == std::string_view::npos ? std::string_view{} : rest.substr(pos + 1);
    if (line.ends_with('\r')) line.remove_suffix(1);
    ++line_no;
    return line;
  }

  [[noreturn]] void fail(const std::string& what) const {
    throw parse_error(where + ":" + std::to_string(line_no) + ": " + what);
  }
};

inline std::vector<std::string_view> split_ws(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t i = 0;
  while (i < line.size()) {
    while (i < line.size() && line[i] == ' ') ++i;
    std::size_t start = i;
    while (i < line.size() && line[i] != ' ') ++i;
    if (i > start) out.push_back(line.substr(start, i - start));
  }
  return out;
}

inline Vector parse_row(LineReader& r, std::size_t expect) {
  const auto fields = split_ws(r.next());
  if (fields.size() != expect)
    r.fail("expected " + std::to_string(expect) + " values, got " +
           std::to_string(fields.size()));
  Vector v(expect);
  for (std::size_t j = 0; j < expect; ++j) {
    try {
      v[j] = parse_double(fields[j]);
    } catch (const parse_error& e) {
      r.fail(e.what());
    }
  }
  return v;
}

}  // namespace detail

inline Checkpoint load_checkpoint(const std::filesystem::path& path) {
  const std::string content = read_file(path);
  detail::LineReader r{content, path.string()};

  if (r.next() != "lowshot-checkpoint v1") r.fail("not a lowshot-checkpoint v1 file");

  Checkpoint ckpt;
  {
    const auto fields = detail::split_ws(r.next());
    if (fields.size() != 2 || fields[0] != "seed") r.fail("expected 'seed <u64>'");
    try {
      ckpt.seed = parse_u64(fields[1]);
    } catch (const parse_error& e) {
      r.fail(e.what());
    }
  }
  std::size_t num_layers = 0;
  {
    const auto fields = detail::split_ws(r.next());
    if (fields.size() != 2 || fields[0] != "extractor")
      r.fail("expected 'extractor <num-layers>'");
    try {
      num_layers = static_cast<std::size_t>(parse_u64(fields[1]));
    } catch (const parse_error& e) {
      r.fail(e.what());
    }
  }
  for (std::size_t li = 0; li < num_layers; ++li) {
    const auto fields = detail::split_ws(r.next());
    if (fields.size() != 4 || fields[0] != "layer")
      r.fail("expected 'layer <out> <in> <activation>'");
    Layer l;
    std::size_t rows = 0, cols = 0;
    try {
      rows = static_cast<std::size_t>(parse_u64(fields[1]));
      cols = static_cast<std::size_t>(parse_u64(fields[2]));
      l.act = activation_from_name(fields[3]);
    } catch (const parse_error& e) {
      r.fail(e.what());
    }
    if (rows == 0 || cols == 0) r.fail("layer dims must be >= 1");
    l.weight = Matrix(rows, cols);
    for (std::size_t i = 0; i < rows; ++i) l.weight.set_row(i, detail::parse_row(r, cols));
    l.bias = detail::parse_row(r, rows);
    ckpt.params.extractor.layers.push_back(std::move(l));
  }
  {
    const auto fields = detail::split_ws(r.next());
    if (fields.size() != 3 || fields[0] != "head") r.fail("expected 'head <K> <d>'");
    std::size_t K = 0, d = 0;
    try {
      K = static_cast<std::size_t>(parse_u64(fields[1]));
      d = static_cast<std::size_t>(parse_u64(fields[2]));
    } catch (const parse_error& e) {
      r.fail(e.what());
    }
    if (K == 0 || d == 0) r.fail("head dims must be >= 1");
    ckpt.params.head.W = Matrix(K, d);
    for (std::size_t i = 0; i < K; ++i) ckpt.params.head.W.set_row(i, detail::parse_row(r, d));
  }
  while (!r.rest.empty()) {
    if (!detail::split_ws(r.next()).empty()) r.fail("trailing content after head weights");
  }
  return ckpt;
}

}  // namespace lowshot
