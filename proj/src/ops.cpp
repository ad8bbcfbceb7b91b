#include "dahf/ops.hpp"

#include <algorithm>
#include <cmath>
#include <memory>
#include <string>

#include "dahf/kernels.hpp"

namespace dahf::ops {

namespace {

Node& input(Node& self, std::size_t i) { return *self.inputs[i]; }

void require_same_shape(const Var& a, const Var& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw ValidationError(std::string(op) + ": shape mismatch " + a.value().shape_string() + " vs " +
                          b.value().shape_string());
  }
}

void require_rank(const Var& a, int rank, const char* op) {
  if (a.value().rank() != rank) {
    throw ValidationError(std::string(op) + ": expected rank " + std::to_string(rank) + ", got " +
                          a.value().shape_string());
  }
}

void require_scalar(const Var& s, const char* op) {
  if (s.value().size() != 1) throw ValidationError(std::string(op) + ": expected a scalar");
}

// Per-axis interpolation taps for half-pixel-centre bilinear resampling.
struct Taps {
  std::vector<int> lo, hi;
  std::vector<double> wlo, whi;
};

Taps make_taps(int in, int out) {
  Taps t;
  t.lo.resize(out);
  t.hi.resize(out);
  t.wlo.resize(out);
  t.whi.resize(out);
  const double scale = static_cast<double>(in) / out;
  for (int i = 0; i < out; ++i) {
    double src = (i + 0.5) * scale - 0.5;
    if (src < 0.0) src = 0.0;
    int i0 = static_cast<int>(std::floor(src));
    if (i0 > in - 1) i0 = in - 1;
    const int i1 = std::min(i0 + 1, in - 1);
    const double l1 = src - i0;
    t.lo[i] = i0;
    t.hi[i] = i1;
    t.wlo[i] = 1.0 - l1;
    t.whi[i] = l1;
  }
  return t;
}

}  // namespace

Var add(const Var& a, const Var& b) {
  require_same_shape(a, b, "add");
  Tensor y = a.value();
  for (std::size_t i = 0; i < y.size(); ++i) y[i] += b.value()[i];
  return make_result(std::move(y), {a, b}, [](Node& self) {
    for (std::size_t k = 0; k < 2; ++k)
      if (input(self, k).requires_grad) input(self, k).accumulate(self.grad);
  });
}

Var sub(const Var& a, const Var& b) {
  require_same_shape(a, b, "sub");
  Tensor y = a.value();
  for (std::size_t i = 0; i < y.size(); ++i) y[i] -= b.value()[i];
  return make_result(std::move(y), {a, b}, [](Node& self) {
    if (input(self, 0).requires_grad) input(self, 0).accumulate(self.grad);
    if (input(self, 1).requires_grad) {
      Tensor& g = input(self, 1).grad_ref();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] -= self.grad[i];
    }
  });
}

Var mul(const Var& a, const Var& b) {
  require_same_shape(a, b, "mul");
  Tensor y = a.value();
  for (std::size_t i = 0; i < y.size(); ++i) y[i] *= b.value()[i];
  return make_result(std::move(y), {a, b}, [](Node& self) {
    Node& na = input(self, 0);
    Node& nb = input(self, 1);
    if (na.requires_grad) {
      Tensor& g = na.grad_ref();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * nb.value[i];
    }
    if (nb.requires_grad) {
      Tensor& g = nb.grad_ref();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * na.value[i];
    }
  });
}

Var scale(const Var& a, double s) {
  Tensor y = a.value();
  for (double& v : y.values()) v *= s;
  return make_result(std::move(y), {a}, [s](Node& self) {
    Tensor& g = input(self, 0).grad_ref();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += s * self.grad[i];
  });
}

Var add_scalar(const Var& a, double s) {
  Tensor y = a.value();
  for (double& v : y.values()) v += s;
  return make_result(std::move(y), {a}, [](Node& self) { input(self, 0).accumulate(self.grad); });
}

Var scale_by(const Var& a, const Var& s) {
  require_scalar(s, "scale_by");
  const double sv = s.value()[0];
  Tensor y = a.value();
  for (double& v : y.values()) v *= sv;
  return make_result(std::move(y), {a, s}, [](Node& self) {
    Node& na = input(self, 0);
    Node& ns = input(self, 1);
    const double sv = ns.value[0];
    if (na.requires_grad) {
      Tensor& g = na.grad_ref();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += sv * self.grad[i];
    }
    if (ns.requires_grad) {
      double acc = 0.0;
      for (std::size_t i = 0; i < self.grad.size(); ++i) acc += self.grad[i] * na.value[i];
      ns.grad_ref()[0] += acc;
    }
  });
}

Var sum(const std::vector<Var>& terms) {
  if (terms.empty()) throw ValidationError("sum: no terms");
  Tensor y = terms[0].value();
  for (std::size_t t = 1; t < terms.size(); ++t) {
    require_same_shape(terms[0], terms[t], "sum");
    for (std::size_t i = 0; i < y.size(); ++i) y[i] += terms[t].value()[i];
  }
  return make_result(std::move(y), terms, [](Node& self) {
    for (auto& in : self.inputs)
      if (in->requires_grad) in->accumulate(self.grad);
  });
}

Var mul_channels(const Var& f, const Var& w) {
  require_rank(f, 3, "mul_channels");
  if (w.value().size() != static_cast<std::size_t>(f.value().channels())) {
    throw ValidationError("mul_channels: weight count does not match channels");
  }
  Tensor y = f.value();
  const int plane = y.plane();
  for (int c = 0; c < y.channels(); ++c) {
    const double s = w.value()[c];
    for (double& v : y.channel(c)) v *= s;
  }
  return make_result(std::move(y), {f, w}, [plane](Node& self) {
    Node& nf = input(self, 0);
    Node& nw = input(self, 1);
    const int channels = static_cast<int>(nw.value.size());
    for (int c = 0; c < channels; ++c) {
      const double* g = self.grad.data() + static_cast<std::size_t>(c) * plane;
      const double* x = nf.value.data() + static_cast<std::size_t>(c) * plane;
      if (nf.requires_grad) {
        double* gf = nf.grad_ref().data() + static_cast<std::size_t>(c) * plane;
        const double s = nw.value[c];
        for (int p = 0; p < plane; ++p) gf[p] += s * g[p];
      }
      if (nw.requires_grad) {
        double acc = 0.0;
        for (int p = 0; p < plane; ++p) acc += g[p] * x[p];
        nw.grad_ref()[c] += acc;
      }
    }
  });
}

Var mul_plane(const Var& f, const Var& m) {
  require_rank(f, 3, "mul_plane");
  require_rank(m, 3, "mul_plane");
  if (m.value().channels() != 1 || m.value().height() != f.value().height() ||
      m.value().width() != f.value().width()) {
    throw ValidationError("mul_plane: plane " + m.value().shape_string() + " does not match " +
                          f.value().shape_string());
  }
  Tensor y = f.value();
  const int plane = y.plane();
  for (int c = 0; c < y.channels(); ++c) {
    double* row = y.channel(c).data();
    for (int p = 0; p < plane; ++p) row[p] *= m.value()[p];
  }
  return make_result(std::move(y), {f, m}, [plane](Node& self) {
    Node& nf = input(self, 0);
    Node& nm = input(self, 1);
    const int channels = nf.value.channels();
    for (int c = 0; c < channels; ++c) {
      const double* g = self.grad.data() + static_cast<std::size_t>(c) * plane;
      if (nf.requires_grad) {
        double* gf = nf.grad_ref().data() + static_cast<std::size_t>(c) * plane;
        for (int p = 0; p < plane; ++p) gf[p] += g[p] * nm.value[p];
      }
      if (nm.requires_grad) {
        const double* x = nf.value.data() + static_cast<std::size_t>(c) * plane;
        double* gm = nm.grad_ref().data();
        for (int p = 0; p < plane; ++p) gm[p] += g[p] * x[p];
      }
    }
  });
}

Var concat_channels(const std::vector<Var>& parts) {
  if (parts.empty()) throw ValidationError("concat_channels: no inputs");
  int channels = 0;
  for (const Var& p : parts) {
    require_rank(p, 3, "concat_channels");
    if (p.value().height() != parts[0].value().height() || p.value().width() != parts[0].value().width()) {
      throw ValidationError("concat_channels: spatial mismatch " + p.value().shape_string() + " vs " +
                            parts[0].value().shape_string());
    }
    channels += p.value().channels();
  }
  Tensor y = Tensor::chw(channels, parts[0].value().height(), parts[0].value().width());
  std::size_t offset = 0;
  for (const Var& p : parts) {
    std::copy(p.value().values().begin(), p.value().values().end(), y.values().begin() + static_cast<long>(offset));
    offset += p.value().size();
  }
  return make_result(std::move(y), parts, [](Node& self) {
    std::size_t offset = 0;
    for (auto& in : self.inputs) {
      const std::size_t n = in->value.size();
      if (in->requires_grad) in->accumulate(std::span<const double>(self.grad.data() + offset, n));
      offset += n;
    }
  });
}

Var pad_replicate(const Var& f, int pad) {
  require_rank(f, 3, "pad_replicate");
  if (pad < 0) throw ValidationError("pad_replicate: negative padding");
  if (pad == 0) return f;
  const int c = f.value().channels(), h = f.value().height(), w = f.value().width();
  const int oh = h + 2 * pad, ow = w + 2 * pad;
  Tensor y = Tensor::chw(c, oh, ow);
  for (int ch = 0; ch < c; ++ch)
    for (int yy = 0; yy < oh; ++yy)
      for (int xx = 0; xx < ow; ++xx) {
        y.at(ch, yy, xx) = f.value().at(ch, std::clamp(yy - pad, 0, h - 1), std::clamp(xx - pad, 0, w - 1));
      }
  return make_result(std::move(y), {f}, [=](Node& self) {
    Tensor& g = input(self, 0).grad_ref();
    for (int ch = 0; ch < c; ++ch)
      for (int yy = 0; yy < oh; ++yy)
        for (int xx = 0; xx < ow; ++xx) {
          g.at(ch, std::clamp(yy - pad, 0, h - 1), std::clamp(xx - pad, 0, w - 1)) += self.grad.at(ch, yy, xx);
        }
  });
}

Var select_channel(const Var& f, int c) {
  require_rank(f, 3, "select_channel");
  if (c < 0 || c >= f.value().channels()) throw ValidationError("select_channel: index out of range");
  const auto src = f.value().channel(c);
  Tensor y({1, f.value().height(), f.value().width()}, std::vector<double>(src.begin(), src.end()));
  return make_result(std::move(y), {f}, [c](Node& self) {
    Node& nf = input(self, 0);
    double* g = nf.grad_ref().channel(c).data();
    for (std::size_t p = 0; p < self.grad.size(); ++p) g[p] += self.grad[p];
  });
}

Var index(const Var& v, int i) {
  if (i < 0 || static_cast<std::size_t>(i) >= v.value().size()) throw ValidationError("index: out of range");
  return make_result(Tensor::scalar(v.value()[static_cast<std::size_t>(i)]), {v},
                     [i](Node& self) { input(self, 0).grad_ref()[static_cast<std::size_t>(i)] += self.grad[0]; });
}

Var stack(const std::vector<Var>& scalars) {
  std::vector<double> vals;
  vals.reserve(scalars.size());
  for (const Var& s : scalars) {
    require_scalar(s, "stack");
    vals.push_back(s.value()[0]);
  }
  const int n = static_cast<int>(vals.size());
  return make_result(Tensor({n}, std::move(vals)), scalars, [](Node& self) {
    for (std::size_t i = 0; i < self.inputs.size(); ++i)
      if (self.inputs[i]->requires_grad) self.inputs[i]->grad_ref()[0] += self.grad[i];
  });
}

Var relu(const Var& x) {
  record_branches(x.value().span());
  Tensor y = x.value();
  for (double& v : y.values()) v = v > 0.0 ? v : 0.0;
  return make_result(std::move(y), {x}, [](Node& self) {
    Node& nx = input(self, 0);
    Tensor& g = nx.grad_ref();
    for (std::size_t i = 0; i < g.size(); ++i)
      if (nx.value[i] > 0.0) g[i] += self.grad[i];
  });
}

Var sigmoid(const Var& x) {
  Tensor y = x.value();
  for (double& v : y.values()) v = 1.0 / (1.0 + std::exp(-v));
  return make_result(std::move(y), {x}, [](Node& self) {
    Tensor& g = input(self, 0).grad_ref();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * self.value[i] * (1.0 - self.value[i]);
  });
}

Var abs(const Var& x) {
  record_branches(x.value().span());
  Tensor y = x.value();
  for (double& v : y.values()) v = std::abs(v);
  return make_result(std::move(y), {x}, [](Node& self) {
    Node& nx = input(self, 0);
    Tensor& g = nx.grad_ref();
    for (std::size_t i = 0; i < g.size(); ++i) {
      const double v = nx.value[i];
      g[i] += self.grad[i] * (v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0));
    }
  });
}

Var conv2d(const Var& x, const Var& weight, const Var& bias, int stride, int pad) {
  require_rank(x, 3, "conv2d");
  require_rank(weight, 4, "conv2d weight");
  const Tensor& w = weight.value();
  if (w.dim(1) != x.value().channels() || w.dim(2) != w.dim(3)) {
    throw ValidationError("conv2d: weight " + w.shape_string() + " incompatible with input " +
                          x.value().shape_string());
  }
  kernels::ConvGeometry g;
  g.in_channels = x.value().channels();
  g.in_height = x.value().height();
  g.in_width = x.value().width();
  g.out_channels = w.dim(0);
  g.kernel = w.dim(2);
  g.stride = stride;
  g.pad = pad;
  if (g.out_height() < 1 || g.out_width() < 1) throw ValidationError("conv2d: empty output");
  const bool has_bias = static_cast<bool>(bias);
  if (has_bias && bias.value().size() != static_cast<std::size_t>(g.out_channels)) {
    throw ValidationError("conv2d: bias size mismatch");
  }

  Tensor y = Tensor::chw(g.out_channels, g.out_height(), g.out_width());
  kernels::parallel::conv2d_forward(g, x.value().span(), w.span(),
                                    has_bias ? bias.value().span() : std::span<const double>{}, y.span());
  std::vector<Var> inputs{x, weight};
  if (has_bias) inputs.push_back(bias);
  return make_result(std::move(y), inputs, [g, has_bias](Node& self) {
    Node& nx = input(self, 0);
    Node& nw = input(self, 1);
    std::span<double> gb;
    if (has_bias && input(self, 2).requires_grad) gb = input(self, 2).grad_ref().span();
    kernels::parallel::conv2d_backward(g, nx.value.span(), nw.value.span(), self.grad.span(),
                                       nx.requires_grad ? nx.grad_ref().span() : std::span<double>{},
                                       nw.requires_grad ? nw.grad_ref().span() : std::span<double>{}, gb);
  });
}

Var group_norm(const Var& x, const Var& gamma, const Var& beta, int groups, double eps) {
  require_rank(x, 3, "group_norm");
  const int channels = x.value().channels();
  if (groups < 1 || channels % groups != 0) throw ValidationError("group_norm: groups must divide channels");
  const int plane = x.value().plane();
  const int per_group = channels / groups * plane;

  auto xhat = std::make_shared<Tensor>(x.value().shape());
  auto inv_std = std::make_shared<std::vector<double>>(static_cast<std::size_t>(groups));
  Tensor y(x.value().shape());
  for (int gi = 0; gi < groups; ++gi) {
    const double* src = x.value().data() + static_cast<std::size_t>(gi) * per_group;
    double mean = 0.0;
    for (int i = 0; i < per_group; ++i) mean += src[i];
    mean /= per_group;
    double var = 0.0;
    for (int i = 0; i < per_group; ++i) var += (src[i] - mean) * (src[i] - mean);
    var /= per_group;
    const double is = 1.0 / std::sqrt(var + eps);
    (*inv_std)[gi] = is;
    double* xh = xhat->data() + static_cast<std::size_t>(gi) * per_group;
    for (int i = 0; i < per_group; ++i) xh[i] = (src[i] - mean) * is;
  }
  for (int c = 0; c < channels; ++c) {
    const double ga = gamma.value()[c], be = beta.value()[c];
    const double* xh = xhat->data() + static_cast<std::size_t>(c) * plane;
    double* dst = y.data() + static_cast<std::size_t>(c) * plane;
    for (int p = 0; p < plane; ++p) dst[p] = ga * xh[p] + be;
  }
  return make_result(std::move(y), {x, gamma, beta}, [=](Node& self) {
    Node& nx = input(self, 0);
    Node& ng = input(self, 1);
    Node& nb = input(self, 2);
    const double* dy = self.grad.data();
    for (int c = 0; c < channels; ++c) {
      const double* xh = xhat->data() + static_cast<std::size_t>(c) * plane;
      const double* d = dy + static_cast<std::size_t>(c) * plane;
      double sg = 0.0, sb = 0.0;
      for (int p = 0; p < plane; ++p) {
        sg += d[p] * xh[p];
        sb += d[p];
      }
      if (ng.requires_grad) ng.grad_ref()[c] += sg;
      if (nb.requires_grad) nb.grad_ref()[c] += sb;
    }
    if (!nx.requires_grad) return;
    Tensor& gx = nx.grad_ref();
    const int cpg = channels / groups;
    std::vector<double> dxh(static_cast<std::size_t>(per_group));
    for (int gi = 0; gi < groups; ++gi) {
      double mean_d = 0.0, mean_dx = 0.0;
      const std::size_t base = static_cast<std::size_t>(gi) * per_group;
      for (int i = 0; i < per_group; ++i) {
        const int c = gi * cpg + i / plane;
        dxh[i] = dy[base + i] * ng.value[c];
        mean_d += dxh[i];
        mean_dx += dxh[i] * (*xhat)[base + i];
      }
      mean_d /= per_group;
      mean_dx /= per_group;
      const double is = (*inv_std)[gi];
      for (int i = 0; i < per_group; ++i) gx[base + i] += is * (dxh[i] - mean_d - (*xhat)[base + i] * mean_dx);
    }
  });
}

Var global_avg_pool(const Var& f) {
  require_rank(f, 3, "global_avg_pool");
  const int channels = f.value().channels(), plane = f.value().plane();
  Tensor y({channels});
  for (int c = 0; c < channels; ++c) {
    double acc = 0.0;
    for (double v : f.value().channel(c)) acc += v;
    y[c] = acc / plane;
  }
  return make_result(std::move(y), {f}, [channels, plane](Node& self) {
    Tensor& g = input(self, 0).grad_ref();
    for (int c = 0; c < channels; ++c) {
      const double d = self.grad[c] / plane;
      double* row = g.channel(c).data();
      for (int p = 0; p < plane; ++p) row[p] += d;
    }
  });
}

Var avg_pool(const Var& f, int factor) {
  require_rank(f, 3, "avg_pool");
  if (factor < 1 || f.value().height() % factor || f.value().width() % factor) {
    throw ValidationError("avg_pool: factor must divide spatial size");
  }
  if (factor == 1) return f;
  const int c = f.value().channels(), h = f.value().height() / factor, w = f.value().width() / factor;
  const int iw = f.value().width();
  const double inv = 1.0 / (factor * factor);
  Tensor y = Tensor::chw(c, h, w);
  for (int ch = 0; ch < c; ++ch)
    for (int y0 = 0; y0 < h; ++y0)
      for (int x0 = 0; x0 < w; ++x0) {
        double acc = 0.0;
        for (int dy = 0; dy < factor; ++dy)
          for (int dx = 0; dx < factor; ++dx) acc += f.value().at(ch, y0 * factor + dy, x0 * factor + dx);
        y.at(ch, y0, x0) = acc * inv;
      }
  return make_result(std::move(y), {f}, [=](Node& self) {
    Tensor& g = input(self, 0).grad_ref();
    for (int ch = 0; ch < c; ++ch)
      for (int yy = 0; yy < h * factor; ++yy)
        for (int xx = 0; xx < iw; ++xx) g.at(ch, yy, xx) += self.grad.at(ch, yy / factor, xx / factor) * inv;
  });
}

Var bilinear_resize(const Var& f, int out_h, int out_w) {
  require_rank(f, 3, "bilinear_resize");
  if (out_h < 1 || out_w < 1) throw ValidationError("bilinear_resize: empty target");
  const int c = f.value().channels(), ih = f.value().height(), iw = f.value().width();
  if (ih == out_h && iw == out_w) return f;
  auto ty = std::make_shared<Taps>(make_taps(ih, out_h));
  auto tx = std::make_shared<Taps>(make_taps(iw, out_w));
  Tensor y = Tensor::chw(c, out_h, out_w);
#pragma omp parallel for num_threads(kernels::num_threads()) schedule(static)
  for (int ch = 0; ch < c; ++ch) {
    for (int yy = 0; yy < out_h; ++yy) {
      for (int xx = 0; xx < out_w; ++xx) {
        const Tensor& s = f.value();
        y.at(ch, yy, xx) = ty->wlo[yy] * (tx->wlo[xx] * s.at(ch, ty->lo[yy], tx->lo[xx]) +
                                          tx->whi[xx] * s.at(ch, ty->lo[yy], tx->hi[xx])) +
                           ty->whi[yy] * (tx->wlo[xx] * s.at(ch, ty->hi[yy], tx->lo[xx]) +
                                          tx->whi[xx] * s.at(ch, ty->hi[yy], tx->hi[xx]));
      }
    }
  }
  return make_result(std::move(y), {f}, [=](Node& self) {
    Tensor& g = input(self, 0).grad_ref();
#pragma omp parallel for num_threads(kernels::num_threads()) schedule(static)
    for (int ch = 0; ch < c; ++ch) {
      for (int yy = 0; yy < out_h; ++yy) {
        for (int xx = 0; xx < out_w; ++xx) {
          const double d = self.grad.at(ch, yy, xx);
          g.at(ch, ty->lo[yy], tx->lo[xx]) += d * ty->wlo[yy] * tx->wlo[xx];
          g.at(ch, ty->lo[yy], tx->hi[xx]) += d * ty->wlo[yy] * tx->whi[xx];
          g.at(ch, ty->hi[yy], tx->lo[xx]) += d * ty->whi[yy] * tx->wlo[xx];
          g.at(ch, ty->hi[yy], tx->hi[xx]) += d * ty->whi[yy] * tx->whi[xx];
        }
      }
    }
  });
}

Var linear(const Var& x, const Var& weight, const Var& bias) {
  require_rank(x, 1, "linear");
  require_rank(weight, 2, "linear weight");
  const int k = weight.value().dim(0), n = weight.value().dim(1);
  if (x.value().dim(0) != n) throw ValidationError("linear: input size does not match weight");
  const bool has_bias = static_cast<bool>(bias);
  if (has_bias && bias.value().size() != static_cast<std::size_t>(k)) throw ValidationError("linear: bias size mismatch");
  Tensor y({k});
  for (int r = 0; r < k; ++r) {
    double acc = has_bias ? bias.value()[r] : 0.0;
    for (int j = 0; j < n; ++j) acc += weight.value()[static_cast<std::size_t>(r) * n + j] * x.value()[j];
    y[r] = acc;
  }
  std::vector<Var> inputs{x, weight};
  if (has_bias) inputs.push_back(bias);
  return make_result(std::move(y), inputs, [k, n, has_bias](Node& self) {
    Node& nx = input(self, 0);
    Node& nw = input(self, 1);
    for (int r = 0; r < k; ++r) {
      const double d = self.grad[r];
      if (nw.requires_grad) {
        double* gw = nw.grad_ref().data() + static_cast<std::size_t>(r) * n;
        for (int j = 0; j < n; ++j) gw[j] += d * nx.value[j];
      }
      if (nx.requires_grad) {
        Tensor& gx = nx.grad_ref();
        for (int j = 0; j < n; ++j) gx[j] += d * nw.value[static_cast<std::size_t>(r) * n + j];
      }
    }
    if (has_bias && input(self, 2).requires_grad) input(self, 2).accumulate(self.grad);
  });
}

Var softmax(const Var& logits) {
  require_rank(logits, 1, "softmax");
  Tensor y = logits.value();
  const double mx = *std::max_element(y.values().begin(), y.values().end());
  double z = 0.0;
  for (double& v : y.values()) {
    v = std::exp(v - mx);
    z += v;
  }
  for (double& v : y.values()) v /= z;
  return make_result(std::move(y), {logits}, [](Node& self) {
    double dot = 0.0;
    for (std::size_t i = 0; i < self.value.size(); ++i) dot += self.value[i] * self.grad[i];
    Tensor& g = input(self, 0).grad_ref();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.value[i] * (self.grad[i] - dot);
  });
}

Var softmax_channels(const Var& f) {
  require_rank(f, 3, "softmax_channels");
  const int c = f.value().channels(), plane = f.value().plane();
  Tensor y = f.value();
  for (int p = 0; p < plane; ++p) {
    double mx = -INFINITY;
    for (int ch = 0; ch < c; ++ch) mx = std::max(mx, y[static_cast<std::size_t>(ch) * plane + p]);
    double z = 0.0;
    for (int ch = 0; ch < c; ++ch) {
      double& v = y[static_cast<std::size_t>(ch) * plane + p];
      v = std::exp(v - mx);
      z += v;
    }
    for (int ch = 0; ch < c; ++ch) y[static_cast<std::size_t>(ch) * plane + p] /= z;
  }
  return make_result(std::move(y), {f}, [c, plane](Node& self) {
    Tensor& g = input(self, 0).grad_ref();
    for (int p = 0; p < plane; ++p) {
      double dot = 0.0;
      for (int ch = 0; ch < c; ++ch) {
        const std::size_t i = static_cast<std::size_t>(ch) * plane + p;
        dot += self.value[i] * self.grad[i];
      }
      for (int ch = 0; ch < c; ++ch) {
        const std::size_t i = static_cast<std::size_t>(ch) * plane + p;
        g[i] += self.value[i] * (self.grad[i] - dot);
      }
    }
  });
}

Var attention(const Var& q, const Var& k, const Var& v, Tensor* probs_out) {
  require_rank(q, 3, "attention");
  require_rank(k, 3, "attention");
  require_rank(v, 3, "attention");
  if (q.value().channels() != k.value().channels()) throw ValidationError("attention: query/key width mismatch");
  if (k.value().height() != v.value().height() || k.value().width() != v.value().width()) {
    throw ValidationError("attention: key/value spatial mismatch");
  }
  kernels::AttentionGeometry g;
  g.dim = q.value().channels();
  g.queries = q.value().plane();
  g.keys = k.value().plane();
  g.channels = v.value().channels();
  auto probs = std::make_shared<Tensor>(std::vector<int>{g.queries, g.keys});
  Tensor y = Tensor::chw(g.channels, q.value().height(), q.value().width());
  kernels::parallel::attention_forward(g, q.value().span(), k.value().span(), v.value().span(), y.span(),
                                       probs->span());
  if (probs_out) *probs_out = *probs;
  return make_result(std::move(y), {q, k, v}, [g, probs](Node& self) {
    Node& nq = input(self, 0);
    Node& nk = input(self, 1);
    Node& nv = input(self, 2);
    kernels::parallel::attention_backward(g, nq.value.span(), nk.value.span(), nv.value.span(), probs->span(),
                                          self.grad.span(),
                                          nq.requires_grad ? nq.grad_ref().span() : std::span<double>{},
                                          nk.requires_grad ? nk.grad_ref().span() : std::span<double>{},
                                          nv.requires_grad ? nv.grad_ref().span() : std::span<double>{});
  });
}

Var threshold_gate(const Var& weights, const Var& tau) {
  require_rank(weights, 1, "threshold_gate");
  if (tau.value().size() != weights.value().size()) throw ValidationError("threshold_gate: one tau per channel required");
  for (double t : tau.value().values()) {
    if (!(t >= 0.0) || !(t < 1.0)) throw ValidationError("threshold_gate: tau must lie in [0, 1)");
  }
  record_branches(weights.value().span(), tau.value().span());
  Tensor y = weights.value();
  for (std::size_t i = 0; i < y.size(); ++i) {
    const double t = tau.value()[i];
    y[i] = std::clamp(std::max(y[i] - t, 0.0) / (1.0 - t), 0.0, 1.0);
  }
  return make_result(std::move(y), {weights, tau}, [](Node& self) {
    Node& nw = input(self, 0);
    Node& nt = input(self, 1);
    for (std::size_t i = 0; i < self.value.size(); ++i) {
      const double w = nw.value[i], t = nt.value[i];
      if (!(w > t) || self.value[i] >= 1.0) continue;
      const double d = self.grad[i];
      if (nw.requires_grad) nw.grad_ref()[i] += d / (1.0 - t);
      if (nt.requires_grad) nt.grad_ref()[i] += d * (w - 1.0) / ((1.0 - t) * (1.0 - t));
    }
  });
}

Var mean_all(const Var& x) {
  const double n = static_cast<double>(x.value().size());
  double acc = 0.0;
  for (double v : x.value().values()) acc += v;
  return make_result(Tensor::scalar(acc / n), {x}, [n](Node& self) {
    Tensor& g = input(self, 0).grad_ref();
    const double d = self.grad[0] / n;
    for (double& v : g.values()) v += d;
  });
}

Var sum_all(const Var& x) {
  double acc = 0.0;
  for (double v : x.value().values()) acc += v;
  return make_result(Tensor::scalar(acc), {x}, [](Node& self) {
    Tensor& g = input(self, 0).grad_ref();
    const double d = self.grad[0];
    for (double& v : g.values()) v += d;
  });
}

}  // namespace dahf::ops
