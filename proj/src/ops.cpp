#include "mtal/ops.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "mtal/errors.hpp"
#include "mtal/parallel.hpp"

namespace mtal {
namespace {

template <typename T>
void require_rank(const Var<T>& v, std::size_t rank, const char* op, const char* what) {
  if (v->value().rank() != rank) {
    throw ShapeError(std::string(op) + ": " + what + " must have rank " + std::to_string(rank) +
                     ", got shape " + to_string(v->shape()));
  }
}

template <typename T>
void require_same_shape(const Var<T>& a, const Var<T>& b, const char* op) {
  if (a->shape() != b->shape()) {
    throw ShapeError(std::string(op) + ": shape mismatch " + to_string(a->shape()) + " vs " +
                     to_string(b->shape()));
  }
}

template <typename T>
void accumulate(const Var<T>& target, std::span<const T> delta) {
  if (!target->requires_grad()) return;
  auto g = target->grad_buffer().data();
  for (std::size_t k = 0; k < g.size(); ++k) g[k] += delta[k];
}

struct ConvGeometry {
  std::size_t n, c, h, w;     // input
  std::size_t m, kh, kw;      // kernels
  std::size_t ph, pw;         // padding
  std::size_t ho, wo;         // output

  // Output rows oy for which input row oy + ky - ph is inside [0, h).
  std::size_t oy_begin(std::size_t ky) const { return ph > ky ? ph - ky : 0; }
  std::size_t oy_end(std::size_t ky) const { return std::min(ho, h + ph - ky); }
  std::size_t ox_begin(std::size_t kx) const { return pw > kx ? pw - kx : 0; }
  std::size_t ox_end(std::size_t kx) const { return std::min(wo, w + pw - kx); }
};

template <typename T>
ConvGeometry conv_geometry(const Var<T>& input, const Var<T>& kernels, const Var<T>& bias,
                           Padding padding) {
  require_rank(input, 4, "conv2d", "input");
  require_rank(kernels, 4, "conv2d", "kernels");
  const auto& xs = input->shape();
  const auto& ks = kernels->shape();
  if (xs[1] != ks[1]) {
    throw ShapeError("conv2d: input channels of " + to_string(xs) +
                     " do not match kernel channels of " + to_string(ks));
  }
  if (bias->shape() != Shape{ks[0]}) {
    throw ShapeError("conv2d: bias shape " + to_string(bias->shape()) + " does not match kernels " +
                     to_string(ks));
  }
  ConvGeometry g{xs[0], xs[1], xs[2], xs[3], ks[0], ks[2], ks[3], 0, 0, 0, 0};
  if (padding == Padding::Same) {
    if (g.kh % 2 == 0 || g.kw % 2 == 0) {
      throw ShapeError("conv2d: same padding needs odd kernel extents, got " + to_string(ks));
    }
    g.ph = g.kh / 2;
    g.pw = g.kw / 2;
    g.ho = g.h;
    g.wo = g.w;
  } else {
    if (g.kh > g.h || g.kw > g.w) {
      throw ShapeError("conv2d: kernels " + to_string(ks) + " larger than input " + to_string(xs) +
                       " under valid padding");
    }
    g.ho = g.h - g.kh + 1;
    g.wo = g.w - g.kw + 1;
  }
  return g;
}

// out[n,g] = sum_f x[n,f] w[f,g] (+ b[g]).
template <typename T>
Var<T> affine(const Var<T>& input, const Var<T>& weight, const Var<T>* bias, const char* op) {
  require_rank(input, 2, op, "input");
  require_rank(weight, 2, op, "weight");
  const std::size_t n = input->shape()[0];
  const std::size_t f = input->shape()[1];
  const std::size_t g = weight->shape()[1];
  if (weight->shape()[0] != f) {
    throw ShapeError(std::string(op) + ": inner dimensions disagree, input " +
                     to_string(input->shape()) + " vs weight " + to_string(weight->shape()));
  }
  if (bias && (*bias)->shape() != Shape{g}) {
    throw ShapeError(std::string(op) + ": bias shape " + to_string((*bias)->shape()) +
                     " does not match weight " + to_string(weight->shape()));
  }
  BasicTensor<T> out({n, g});
  {
    const T* x = input->value().raw();
    const T* w = weight->value().raw();
    const T* b = bias ? (*bias)->value().raw() : nullptr;
    T* o = out.raw();
    parallel_for(n, [&](std::size_t row) {
      std::vector<double> acc(g, 0.0);
      for (std::size_t k = 0; k < f; ++k) {
        const double xv = x[row * f + k];
        const T* wr = w + k * g;
        for (std::size_t j = 0; j < g; ++j) acc[j] += xv * static_cast<double>(wr[j]);
      }
      for (std::size_t j = 0; j < g; ++j) {
        o[row * g + j] = static_cast<T>(acc[j] + (b ? static_cast<double>(b[j]) : 0.0));
      }
    });
  }
  std::vector<Var<T>> parents{input, weight};
  if (bias) parents.push_back(*bias);
  return make_op<T>(std::move(out), op, std::move(parents), [n, f, g](Node<T>& self) {
    const auto& ps = self.parents();
    const T* go = self.grad().raw();
    const T* x = ps[0]->value().raw();
    const T* w = ps[1]->value().raw();
    if (ps[0]->requires_grad()) {
      T* gx = ps[0]->grad_buffer().raw();
      parallel_for(n, [&](std::size_t row) {
        for (std::size_t k = 0; k < f; ++k) {
          double s = 0.0;
          const T* wr = w + k * g;
          for (std::size_t j = 0; j < g; ++j) s += static_cast<double>(go[row * g + j]) * wr[j];
          gx[row * f + k] += static_cast<T>(s);
        }
      });
    }
    if (ps[1]->requires_grad()) {
      T* gw = ps[1]->grad_buffer().raw();
      parallel_for(f, [&](std::size_t k) {
        std::vector<double> acc(g, 0.0);
        for (std::size_t row = 0; row < n; ++row) {
          const double xv = x[row * f + k];
          for (std::size_t j = 0; j < g; ++j) acc[j] += xv * static_cast<double>(go[row * g + j]);
        }
        for (std::size_t j = 0; j < g; ++j) gw[k * g + j] += static_cast<T>(acc[j]);
      });
    }
    if (ps.size() > 2 && ps[2]->requires_grad()) {
      T* gb = ps[2]->grad_buffer().raw();
      for (std::size_t j = 0; j < g; ++j) {
        double s = 0.0;
        for (std::size_t row = 0; row < n; ++row) s += go[row * g + j];
        gb[j] += static_cast<T>(s);
      }
    }
  });
}

}  // namespace

template <typename T>
Var<T> conv2d(const Var<T>& input, const Var<T>& kernels, const Var<T>& bias, Padding padding) {
  const ConvGeometry geo = conv_geometry(input, kernels, bias, padding);
  BasicTensor<T> out({geo.n, geo.m, geo.ho, geo.wo});
  {
    const T* x = input->value().raw();
    const T* k = kernels->value().raw();
    const T* b = bias->value().raw();
    T* o = out.raw();
    parallel_for(geo.n * geo.m, [&](std::size_t idx) {
      const std::size_t n = idx / geo.m;
      const std::size_t m = idx % geo.m;
      std::vector<double> acc(geo.ho * geo.wo, 0.0);
      for (std::size_t c = 0; c < geo.c; ++c) {
        const T* plane = x + (n * geo.c + c) * geo.h * geo.w;
        const T* kern = k + (m * geo.c + c) * geo.kh * geo.kw;
        for (std::size_t ky = 0; ky < geo.kh; ++ky) {
          for (std::size_t kx = 0; kx < geo.kw; ++kx) {
            const double wv = kern[ky * geo.kw + kx];
            const std::size_t x0 = geo.ox_begin(kx);
            const std::size_t x1 = geo.ox_end(kx);
            for (std::size_t oy = geo.oy_begin(ky); oy < geo.oy_end(ky); ++oy) {
              // Input column for output column ox is ox + kx - pw.
              const T* row = plane + (oy + ky - geo.ph) * geo.w;
              double* a = acc.data() + oy * geo.wo;
              for (std::size_t ox = x0; ox < x1; ++ox) {
                a[ox] += wv * static_cast<double>(row[ox + kx - geo.pw]);
              }
            }
          }
        }
      }
      T* dst = o + idx * geo.ho * geo.wo;
      const double bv = b[m];
      for (std::size_t i = 0; i < acc.size(); ++i) dst[i] = static_cast<T>(acc[i] + bv);
    });
  }
  return make_op<T>(std::move(out), "conv2d", {input, kernels, bias}, [geo](Node<T>& self) {
    const auto& ps = self.parents();
    const T* go = self.grad().raw();
    const T* x = ps[0]->value().raw();
    const T* k = ps[1]->value().raw();
    const std::size_t out_plane = geo.ho * geo.wo;
    if (ps[0]->requires_grad()) {
      T* gx = ps[0]->grad_buffer().raw();
      parallel_for(geo.n * geo.c, [&](std::size_t idx) {
        const std::size_t n = idx / geo.c;
        const std::size_t c = idx % geo.c;
        std::vector<double> acc(geo.h * geo.w, 0.0);
        for (std::size_t m = 0; m < geo.m; ++m) {
          const T* gplane = go + (n * geo.m + m) * out_plane;
          const T* kern = k + (m * geo.c + c) * geo.kh * geo.kw;
          for (std::size_t ky = 0; ky < geo.kh; ++ky) {
            for (std::size_t kx = 0; kx < geo.kw; ++kx) {
              const double wv = kern[ky * geo.kw + kx];
              const std::size_t x0 = geo.ox_begin(kx);
              const std::size_t x1 = geo.ox_end(kx);
              for (std::size_t oy = geo.oy_begin(ky); oy < geo.oy_end(ky); ++oy) {
                double* a = acc.data() + (oy + ky - geo.ph) * geo.w;
                const T* grow = gplane + oy * geo.wo;
                for (std::size_t ox = x0; ox < x1; ++ox) {
                  a[ox + kx - geo.pw] += wv * static_cast<double>(grow[ox]);
                }
              }
            }
          }
        }
        T* dst = gx + idx * geo.h * geo.w;
        for (std::size_t i = 0; i < acc.size(); ++i) dst[i] += static_cast<T>(acc[i]);
      });
    }
    if (ps[1]->requires_grad()) {
      T* gk = ps[1]->grad_buffer().raw();
      parallel_for(geo.m * geo.c, [&](std::size_t idx) {
        const std::size_t m = idx / geo.c;
        const std::size_t c = idx % geo.c;
        for (std::size_t ky = 0; ky < geo.kh; ++ky) {
          for (std::size_t kx = 0; kx < geo.kw; ++kx) {
            const std::size_t x0 = geo.ox_begin(kx);
            const std::size_t x1 = geo.ox_end(kx);
            double s = 0.0;
            for (std::size_t n = 0; n < geo.n; ++n) {
              const T* gplane = go + (n * geo.m + m) * out_plane;
              const T* plane = x + (n * geo.c + c) * geo.h * geo.w;
              for (std::size_t oy = geo.oy_begin(ky); oy < geo.oy_end(ky); ++oy) {
                const T* grow = gplane + oy * geo.wo;
                const T* row = plane + (oy + ky - geo.ph) * geo.w;
                for (std::size_t ox = x0; ox < x1; ++ox) {
                  s += static_cast<double>(grow[ox]) * static_cast<double>(row[ox + kx - geo.pw]);
                }
              }
            }
            gk[idx * geo.kh * geo.kw + ky * geo.kw + kx] += static_cast<T>(s);
          }
        }
      });
    }
    if (ps[2]->requires_grad()) {
      T* gb = ps[2]->grad_buffer().raw();
      for (std::size_t m = 0; m < geo.m; ++m) {
        double s = 0.0;
        for (std::size_t n = 0; n < geo.n; ++n) {
          const T* gplane = go + (n * geo.m + m) * out_plane;
          for (std::size_t i = 0; i < out_plane; ++i) s += gplane[i];
        }
        gb[m] += static_cast<T>(s);
      }
    }
  });
}

template <typename T>
Var<T> dense(const Var<T>& input, const Var<T>& weight, const Var<T>& bias) {
  return affine(input, weight, &bias, "dense");
}

template <typename T>
Var<T> matmul(const Var<T>& input, const Var<T>& weight) {
  return affine<T>(input, weight, nullptr, "matmul");
}

template <typename T>
Var<T> relu(const Var<T>& input) {
  BasicTensor<T> out(input->shape());
  auto x = input->value().data();
  auto o = out.data();
  for (std::size_t k = 0; k < x.size(); ++k) o[k] = x[k] > T{0} ? x[k] : T{0};
  return make_op<T>(std::move(out), "relu", {input}, [](Node<T>& self) {
    const auto& in = self.parents()[0];
    auto x = in->value().data();
    auto go = self.grad().data();
    auto gx = in->grad_buffer().data();
    for (std::size_t k = 0; k < x.size(); ++k) {
      if (x[k] > T{0}) gx[k] += go[k];
    }
  });
}

template <typename T>
Var<T> sigmoid(const Var<T>& input) {
  BasicTensor<T> out(input->shape());
  auto x = input->value().data();
  auto o = out.data();
  for (std::size_t k = 0; k < x.size(); ++k) {
    o[k] = static_cast<T>(1.0 / (1.0 + std::exp(-static_cast<double>(x[k]))));
  }
  return make_op<T>(std::move(out), "sigmoid", {input}, [](Node<T>& self) {
    const auto& in = self.parents()[0];
    auto s = self.value().data();
    auto go = self.grad().data();
    auto gx = in->grad_buffer().data();
    for (std::size_t k = 0; k < s.size(); ++k) {
      const double sv = s[k];
      gx[k] += static_cast<T>(static_cast<double>(go[k]) * sv * (1.0 - sv));
    }
  });
}

template <typename T>
Var<T> max_pool2d(const Var<T>& input, std::size_t window, PoolPolicy policy) {
  require_rank(input, 4, "max_pool2d", "input");
  const auto& s = input->shape();
  const std::size_t n = s[0], c = s[1], h = s[2], w = s[3];
  if (window == 0 || window > h || window > w) {
    throw ShapeError("max_pool2d: invalid window size " + std::to_string(window) + " for input " +
                     to_string(s));
  }
  if (policy == PoolPolicy::Strict && (h % window != 0 || w % window != 0)) {
    throw ShapeError("max_pool2d: window " + std::to_string(window) + " does not divide input " +
                     to_string(s));
  }
  const std::size_t ho = h / window, wo = w / window;
  BasicTensor<T> out({n, c, ho, wo});
  std::vector<std::size_t> argmax(out.size());
  const T* x = input->value().raw();
  for (std::size_t plane = 0; plane < n * c; ++plane) {
    const T* src = x + plane * h * w;
    for (std::size_t oy = 0; oy < ho; ++oy) {
      for (std::size_t ox = 0; ox < wo; ++ox) {
        std::size_t best = (oy * window) * w + ox * window;
        for (std::size_t dy = 0; dy < window; ++dy) {
          for (std::size_t dx = 0; dx < window; ++dx) {
            const std::size_t at = (oy * window + dy) * w + ox * window + dx;
            if (src[at] > src[best]) best = at;
          }
        }
        const std::size_t o = (plane * ho + oy) * wo + ox;
        out[o] = src[best];
        argmax[o] = plane * h * w + best;
      }
    }
  }
  return make_op<T>(std::move(out), "max_pool2d", {input},
                    [argmax = std::move(argmax)](Node<T>& self) {
                      auto go = self.grad().data();
                      auto gx = self.parents()[0]->grad_buffer().data();
                      for (std::size_t o = 0; o < go.size(); ++o) gx[argmax[o]] += go[o];
                    });
}

template <typename T>
Var<T> reshape(const Var<T>& input, Shape shape) {
  BasicTensor<T> out = input->value().reshaped(std::move(shape));
  return make_op<T>(std::move(out), "reshape", {input}, [](Node<T>& self) {
    accumulate<T>(self.parents()[0], self.grad().data());
  });
}

template <typename T>
Var<T> flatten(const Var<T>& input) {
  if (input->value().rank() < 2) {
    throw ShapeError("flatten: input needs rank >= 2, got " + to_string(input->shape()));
  }
  const std::size_t n = input->shape()[0];
  return reshape(input, Shape{n, input->value().size() / n});
}

template <typename T>
Var<T> softmax_cross_entropy(const Var<T>& logits, std::span<const int> labels) {
  require_rank(logits, 2, "softmax_cross_entropy", "logits");
  const std::size_t n = logits->shape()[0];
  const std::size_t c = logits->shape()[1];
  if (labels.size() != n) {
    throw ShapeError("softmax_cross_entropy: " + std::to_string(labels.size()) +
                     " labels for logits " + to_string(logits->shape()));
  }
  for (std::size_t h = 0; h < n; ++h) {
    if (labels[h] < 0 || static_cast<std::size_t>(labels[h]) >= c) {
      throw std::out_of_range("softmax_cross_entropy: label " + std::to_string(labels[h]) +
                              " at row " + std::to_string(h) + " outside [0, " +
                              std::to_string(c) + ")");
    }
  }
  const T* z = logits->value().raw();
  std::vector<double> probs(n * c);
  double total = 0.0;
  for (std::size_t h = 0; h < n; ++h) {
    const T* row = z + h * c;
    const double zmax = *std::max_element(row, row + c);
    double denom = 0.0;
    for (std::size_t j = 0; j < c; ++j) {
      probs[h * c + j] = std::exp(static_cast<double>(row[j]) - zmax);
      denom += probs[h * c + j];
    }
    for (std::size_t j = 0; j < c; ++j) probs[h * c + j] /= denom;
    total += zmax + std::log(denom) - static_cast<double>(row[labels[h]]);
  }
  auto out = BasicTensor<T>::scalar(static_cast<T>(total / static_cast<double>(n)));
  std::vector<int> targets(labels.begin(), labels.end());
  return make_op<T>(std::move(out), "softmax_cross_entropy", {logits},
                    [probs = std::move(probs), targets = std::move(targets), n, c](Node<T>& self) {
                      const double g = static_cast<double>(self.grad()[0]) / static_cast<double>(n);
                      T* gz = self.parents()[0]->grad_buffer().raw();
                      for (std::size_t h = 0; h < n; ++h) {
                        for (std::size_t j = 0; j < c; ++j) {
                          const double onehot = static_cast<std::size_t>(targets[h]) == j ? 1.0 : 0.0;
                          gz[h * c + j] += static_cast<T>(g * (probs[h * c + j] - onehot));
                        }
                      }
                    });
}

template <typename T>
Var<T> sum(const Var<T>& input) {
  double s = 0.0;
  for (auto v : input->value().data()) s += v;
  return make_op<T>(BasicTensor<T>::scalar(static_cast<T>(s)), "sum", {input}, [](Node<T>& self) {
    const T g = self.grad()[0];
    for (auto& v : self.parents()[0]->grad_buffer().data()) v += g;
  });
}

template <typename T>
Var<T> sum_squares(const Var<T>& input) {
  double s = 0.0;
  for (auto v : input->value().data()) s += static_cast<double>(v) * static_cast<double>(v);
  return make_op<T>(BasicTensor<T>::scalar(static_cast<T>(s)), "sum_squares", {input},
                    [](Node<T>& self) {
                      const double g = self.grad()[0];
                      const auto& in = self.parents()[0];
                      auto x = in->value().data();
                      auto gx = in->grad_buffer().data();
                      for (std::size_t k = 0; k < x.size(); ++k) {
                        gx[k] += static_cast<T>(2.0 * g * static_cast<double>(x[k]));
                      }
                    });
}

template <typename T>
Var<T> add(const Var<T>& a, const Var<T>& b) {
  require_same_shape(a, b, "add");
  BasicTensor<T> out(a->shape());
  auto x = a->value().data();
  auto y = b->value().data();
  auto o = out.data();
  for (std::size_t k = 0; k < o.size(); ++k) o[k] = x[k] + y[k];
  return make_op<T>(std::move(out), "add", {a, b}, [](Node<T>& self) {
    for (const auto& p : self.parents()) accumulate<T>(p, self.grad().data());
  });
}

template <typename T>
Var<T> add_n(std::span<const Var<T>> terms) {
  if (terms.empty()) throw std::invalid_argument("add_n: no terms");
  BasicTensor<T> out = terms[0]->value();
  for (std::size_t t = 1; t < terms.size(); ++t) {
    require_same_shape(terms[0], terms[t], "add_n");
    auto src = terms[t]->value().data();
    auto o = out.data();
    for (std::size_t k = 0; k < o.size(); ++k) o[k] += src[k];
  }
  return make_op<T>(std::move(out), "add_n", {terms.begin(), terms.end()}, [](Node<T>& self) {
    for (const auto& p : self.parents()) accumulate<T>(p, self.grad().data());
  });
}

template <typename T>
Var<T> mul(const Var<T>& a, const Var<T>& b) {
  require_same_shape(a, b, "mul");
  BasicTensor<T> out(a->shape());
  auto x = a->value().data();
  auto y = b->value().data();
  auto o = out.data();
  for (std::size_t k = 0; k < o.size(); ++k) o[k] = x[k] * y[k];
  return make_op<T>(std::move(out), "mul", {a, b}, [](Node<T>& self) {
    const auto& pa = self.parents()[0];
    const auto& pb = self.parents()[1];
    auto go = self.grad().data();
    if (pa->requires_grad()) {
      auto ga = pa->grad_buffer().data();
      auto y = pb->value().data();
      for (std::size_t k = 0; k < go.size(); ++k) ga[k] += go[k] * y[k];
    }
    if (pb->requires_grad()) {
      auto gb = pb->grad_buffer().data();
      auto x = pa->value().data();
      for (std::size_t k = 0; k < go.size(); ++k) gb[k] += go[k] * x[k];
    }
  });
}

template <typename T>
Var<T> scale(const Var<T>& input, double factor) {
  BasicTensor<T> out(input->shape());
  auto x = input->value().data();
  auto o = out.data();
  for (std::size_t k = 0; k < o.size(); ++k) o[k] = static_cast<T>(factor * x[k]);
  return make_op<T>(std::move(out), "scale", {input}, [factor](Node<T>& self) {
    auto go = self.grad().data();
    auto gx = self.parents()[0]->grad_buffer().data();
    for (std::size_t k = 0; k < go.size(); ++k) gx[k] += static_cast<T>(factor * go[k]);
  });
}

template <typename T>
Var<T> select(const Var<T>& input, std::size_t index) {
  if (input->value().rank() < 1) throw ShapeError("select: input must have rank >= 1");
  const auto& s = input->shape();
  if (index >= s[0]) {
    throw std::out_of_range("select: index " + std::to_string(index) + " out of range for " +
                            to_string(s));
  }
  Shape inner(s.begin() + 1, s.end());
  const std::size_t len = shape_size(inner);
  auto src = input->value().data().subspan(index * len, len);
  BasicTensor<T> out(std::move(inner), std::vector<T>(src.begin(), src.end()));
  return make_op<T>(std::move(out), "select", {input}, [index, len](Node<T>& self) {
    auto go = self.grad().data();
    auto gx = self.parents()[0]->grad_buffer().data().subspan(index * len, len);
    for (std::size_t k = 0; k < len; ++k) gx[k] += go[k];
  });
}

template <typename T>
Var<T> stack(std::span<const Var<T>> parts) {
  if (parts.empty()) throw std::invalid_argument("stack: no parts");
  const Shape& inner = parts[0]->shape();
  const std::size_t len = shape_size(inner);
  std::vector<T> data;
  data.reserve(len * parts.size());
  for (const auto& p : parts) {
    require_same_shape(parts[0], p, "stack");
    auto v = p->value().data();
    data.insert(data.end(), v.begin(), v.end());
  }
  Shape shape{parts.size()};
  shape.insert(shape.end(), inner.begin(), inner.end());
  return make_op<T>(BasicTensor<T>(std::move(shape), std::move(data)), "stack",
                    {parts.begin(), parts.end()}, [len](Node<T>& self) {
                      auto go = self.grad().data();
                      const auto& ps = self.parents();
                      for (std::size_t i = 0; i < ps.size(); ++i) {
                        accumulate<T>(ps[i], go.subspan(i * len, len));
                      }
                    });
}

template <typename T>
Var<T> mix(std::span<const Var<T>> terms, const Var<T>& coeffs, std::size_t row) {
  if (terms.empty()) throw std::invalid_argument("mix: no terms");
  require_rank(coeffs, 2, "mix", "coefficients");
  const std::size_t cols = coeffs->shape()[1];
  if (cols != terms.size() || row >= coeffs->shape()[0]) {
    throw ShapeError("mix: coefficients " + to_string(coeffs->shape()) + " do not fit " +
                     std::to_string(terms.size()) + " terms at row " + std::to_string(row));
  }
  for (const auto& t : terms) require_same_shape(terms[0], t, "mix");
  const std::size_t len = terms[0]->value().size();
  const T* a = coeffs->value().raw() + row * cols;
  std::vector<double> acc(len, 0.0);
  for (std::size_t c = 0; c < cols; ++c) {
    const double w = a[c];
    auto x = terms[c]->value().data();
    for (std::size_t k = 0; k < len; ++k) acc[k] += w * static_cast<double>(x[k]);
  }
  BasicTensor<T> out(terms[0]->shape());
  for (std::size_t k = 0; k < len; ++k) out[k] = static_cast<T>(acc[k]);
  std::vector<Var<T>> parents(terms.begin(), terms.end());
  parents.push_back(coeffs);
  return make_op<T>(std::move(out), "mix", std::move(parents), [row, cols, len](Node<T>& self) {
    const auto& ps = self.parents();
    const auto& coeff_node = ps.back();
    const T* a = coeff_node->value().raw() + row * cols;
    auto go = self.grad().data();
    for (std::size_t c = 0; c < cols; ++c) {
      const auto& term = ps[c];
      if (term->requires_grad()) {
        auto gx = term->grad_buffer().data();
        const double w = a[c];
        for (std::size_t k = 0; k < len; ++k) gx[k] += static_cast<T>(w * go[k]);
      }
      if (coeff_node->requires_grad()) {
        auto x = term->value().data();
        double s = 0.0;
        for (std::size_t k = 0; k < len; ++k) s += static_cast<double>(go[k]) * x[k];
        coeff_node->grad_buffer()[row * cols + c] += static_cast<T>(s);
      }
    }
  });
}

#define MTAL_INSTANTIATE(T)                                                                  \
  template Var<T> conv2d(const Var<T>&, const Var<T>&, const Var<T>&, Padding);              \
  template Var<T> dense(const Var<T>&, const Var<T>&, const Var<T>&);                        \
  template Var<T> matmul(const Var<T>&, const Var<T>&);                                      \
  template Var<T> relu(const Var<T>&);                                                       \
  template Var<T> sigmoid(const Var<T>&);                                                    \
  template Var<T> max_pool2d(const Var<T>&, std::size_t, PoolPolicy);                        \
  template Var<T> flatten(const Var<T>&);                                                    \
  template Var<T> reshape(const Var<T>&, Shape);                                             \
  template Var<T> softmax_cross_entropy(const Var<T>&, std::span<const int>);                \
  template Var<T> sum(const Var<T>&);                                                        \
  template Var<T> sum_squares(const Var<T>&);                                                \
  template Var<T> add(const Var<T>&, const Var<T>&);                                         \
  template Var<T> add_n(std::span<const Var<T>>);                                            \
  template Var<T> mul(const Var<T>&, const Var<T>&);                                         \
  template Var<T> scale(const Var<T>&, double);                                              \
  template Var<T> select(const Var<T>&, std::size_t);                                        \
  template Var<T> stack(std::span<const Var<T>>);                                            \
  template Var<T> mix(std::span<const Var<T>>, const Var<T>&, std::size_t);

MTAL_INSTANTIATE(float)
MTAL_INSTANTIATE(double)
#undef MTAL_INSTANTIATE

}  // namespace mtal
