#include "saliq/ops.hpp"

#include <Eigen/Core>

#include <cmath>
#include <cstring>
#include <stdexcept>
#include <string>

namespace saliq::ops {

namespace {

using MatrixRM = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapRM = Eigen::Map<MatrixRM>;
using ConstMapRM = Eigen::Map<const MatrixRM>;

void require(bool ok, const std::string& msg) {
  if (!ok) throw std::invalid_argument(msg);
}

struct ConvDims {
  int n, ci, h, w;
  int co, kh, kw;
  int oh, ow;
};

ConvDims conv_dims(const Tensor& x, const Tensor& w, int stride, int padding) {
  require(x.ndim() == 4, "conv2d: input must be NCHW, got " + x.shape_str());
  require(w.ndim() == 4, "conv2d: kernel must be OIHW, got " + w.shape_str());
  require(stride >= 1, "conv2d: stride must be >= 1");
  require(padding >= 0, "conv2d: padding must be >= 0");
  ConvDims d{};
  d.n = x.dim(0);
  d.ci = x.dim(1);
  d.h = x.dim(2);
  d.w = x.dim(3);
  d.co = w.dim(0);
  d.kh = w.dim(2);
  d.kw = w.dim(3);
  require(w.dim(1) == d.ci, "conv2d: channel mismatch, input " + x.shape_str() + " vs kernel " + w.shape_str());
  require(d.kh <= d.h + 2 * padding && d.kw <= d.w + 2 * padding,
          "conv2d: kernel " + w.shape_str() + " larger than padded input " + x.shape_str());
  d.oh = (d.h + 2 * padding - d.kh) / stride + 1;
  d.ow = (d.w + 2 * padding - d.kw) / stride + 1;
  require(d.oh >= 1 && d.ow >= 1, "conv2d: output spatial dims must be >= 1");
  return d;
}

// Copy one image into a zero-padded scratch buffer, [ci, h+2p, w+2p].
void pad_image(const float* src, int ci, int h, int w, int p, std::vector<float>& dst) {
  const int ph = h + 2 * p;
  const int pw = w + 2 * p;
  dst.assign(static_cast<size_t>(ci) * ph * pw, 0.0f);
  for (int c = 0; c < ci; ++c) {
    for (int i = 0; i < h; ++i) {
      std::memcpy(&dst[(static_cast<size_t>(c) * ph + i + p) * pw + p], &src[(static_cast<size_t>(c) * h + i) * w],
                  sizeof(float) * static_cast<size_t>(w));
    }
  }
}

}  // namespace

Tensor conv2d(const Tensor& x, const Tensor& w, int stride, int padding) {
  const ConvDims d = conv_dims(x, w, stride, padding);
  Tensor out({d.n, d.co, d.oh, d.ow});
  const int ph = d.h + 2 * padding;
  const int pw = d.w + 2 * padding;
  const int64_t in_image = static_cast<int64_t>(d.ci) * d.h * d.w;
  const int64_t out_image = static_cast<int64_t>(d.co) * d.oh * d.ow;

#pragma omp parallel
  {
    std::vector<float> padded;
#pragma omp for schedule(static)
    for (int n = 0; n < d.n; ++n) {
      pad_image(x.data() + n * in_image, d.ci, d.h, d.w, padding, padded);
      float* out_n = out.data() + n * out_image;
      for (int o = 0; o < d.co; ++o) {
        float* out_plane = out_n + static_cast<int64_t>(o) * d.oh * d.ow;
        for (int c = 0; c < d.ci; ++c) {
          for (int kh = 0; kh < d.kh; ++kh) {
            for (int kw = 0; kw < d.kw; ++kw) {
              const float wv = w[((static_cast<int64_t>(o) * d.ci + c) * d.kh + kh) * d.kw + kw];
              const float* in_row0 = &padded[(static_cast<size_t>(c) * ph + kh) * pw + kw];
              for (int oh = 0; oh < d.oh; ++oh) {
                const float* in_row = in_row0 + static_cast<int64_t>(oh) * stride * pw;
                float* out_row = out_plane + static_cast<int64_t>(oh) * d.ow;
                if (stride == 1) {
                  for (int ow = 0; ow < d.ow; ++ow) out_row[ow] += wv * in_row[ow];
                } else {
                  for (int ow = 0; ow < d.ow; ++ow) out_row[ow] += wv * in_row[static_cast<int64_t>(ow) * stride];
                }
              }
            }
          }
        }
      }
    }
  }
  return out;
}

void conv2d_backward(const Tensor& x, const Tensor& w, int stride, int padding, const Tensor& dy, Tensor* dx,
                     Tensor* dw) {
  const ConvDims d = conv_dims(x, w, stride, padding);
  require(dy.ndim() == 4 && dy.dim(0) == d.n && dy.dim(1) == d.co && dy.dim(2) == d.oh && dy.dim(3) == d.ow,
          "conv2d_backward: upstream shape " + dy.shape_str() + " does not match output");
  const int ph = d.h + 2 * padding;
  const int pw = d.w + 2 * padding;
  const int64_t in_image = static_cast<int64_t>(d.ci) * d.h * d.w;
  const int64_t out_image = static_cast<int64_t>(d.co) * d.oh * d.ow;
  const int64_t wsize = w.numel();

  // Per-image kernel-gradient partials, reduced in ascending image order so
  // the result does not depend on the thread count.
  std::vector<float> dw_partials;
  if (dw) dw_partials.assign(static_cast<size_t>(d.n) * wsize, 0.0f);
  if (dx) *dx = Tensor(x.shape());

#pragma omp parallel
  {
    std::vector<float> padded;
    std::vector<float> dpadded;
#pragma omp for schedule(static)
    for (int n = 0; n < d.n; ++n) {
      const float* dy_n = dy.data() + n * out_image;
      if (dw) {
        pad_image(x.data() + n * in_image, d.ci, d.h, d.w, padding, padded);
        float* dw_n = &dw_partials[static_cast<size_t>(n) * wsize];
        for (int o = 0; o < d.co; ++o) {
          const float* dy_plane = dy_n + static_cast<int64_t>(o) * d.oh * d.ow;
          for (int c = 0; c < d.ci; ++c) {
            float* dw_oc = dw_n + (static_cast<int64_t>(o) * d.ci + c) * d.kh * d.kw;
            for (int oh = 0; oh < d.oh; ++oh) {
              const float* in_base = &padded[static_cast<size_t>(c) * ph * pw + static_cast<size_t>(oh) * stride * pw];
              const float* dy_row = dy_plane + static_cast<int64_t>(oh) * d.ow;
              for (int kh = 0; kh < d.kh; ++kh) {
                for (int kw = 0; kw < d.kw; ++kw) {
                  const float* in_row = in_base + static_cast<int64_t>(kh) * pw + kw;
                  float acc = 0.0f;
                  if (stride == 1) {
                    for (int ow = 0; ow < d.ow; ++ow) acc += dy_row[ow] * in_row[ow];
                  } else {
                    for (int ow = 0; ow < d.ow; ++ow) acc += dy_row[ow] * in_row[static_cast<int64_t>(ow) * stride];
                  }
                  dw_oc[kh * d.kw + kw] += acc;
                }
              }
            }
          }
        }
      }
      if (dx) {
        dpadded.assign(static_cast<size_t>(d.ci) * ph * pw, 0.0f);
        for (int o = 0; o < d.co; ++o) {
          const float* dy_plane = dy_n + static_cast<int64_t>(o) * d.oh * d.ow;
          for (int c = 0; c < d.ci; ++c) {
            for (int kh = 0; kh < d.kh; ++kh) {
              for (int kw = 0; kw < d.kw; ++kw) {
                const float wv = w[((static_cast<int64_t>(o) * d.ci + c) * d.kh + kh) * d.kw + kw];
                float* dp_row0 = &dpadded[(static_cast<size_t>(c) * ph + kh) * pw + kw];
                for (int oh = 0; oh < d.oh; ++oh) {
                  float* dp_row = dp_row0 + static_cast<int64_t>(oh) * stride * pw;
                  const float* dy_row = dy_plane + static_cast<int64_t>(oh) * d.ow;
                  if (stride == 1) {
                    for (int ow = 0; ow < d.ow; ++ow) dp_row[ow] += wv * dy_row[ow];
                  } else {
                    for (int ow = 0; ow < d.ow; ++ow) dp_row[static_cast<int64_t>(ow) * stride] += wv * dy_row[ow];
                  }
                }
              }
            }
          }
        }
        float* dx_n = dx->data() + n * in_image;
        for (int c = 0; c < d.ci; ++c) {
          for (int i = 0; i < d.h; ++i) {
            std::memcpy(&dx_n[(static_cast<size_t>(c) * d.h + i) * d.w],
                        &dpadded[(static_cast<size_t>(c) * ph + i + padding) * pw + padding],
                        sizeof(float) * static_cast<size_t>(d.w));
          }
        }
      }
    }
  }

  if (dw) {
    *dw = Tensor(w.shape());
    float* acc = dw->data();
    for (int n = 0; n < d.n; ++n) {
      const float* part = &dw_partials[static_cast<size_t>(n) * wsize];
      for (int64_t i = 0; i < wsize; ++i) acc[i] += part[i];
    }
  }
}

Tensor maxpool2d(const Tensor& x, int window, std::vector<int32_t>* argmax_out) {
  require(x.ndim() == 4, "maxpool2d: input must be NCHW, got " + x.shape_str());
  require(window >= 1, "maxpool2d: window must be >= 1");
  const int n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
  require(h % window == 0 && w % window == 0, "maxpool2d: spatial dims " + x.shape_str() + " not divisible by window " +
                                                  std::to_string(window));
  const int oh = h / window, ow = w / window;
  Tensor out({n, c, oh, ow});
  if (argmax_out) argmax_out->assign(static_cast<size_t>(out.numel()), 0);

  const int64_t planes = static_cast<int64_t>(n) * c;
#pragma omp parallel for schedule(static)
  for (int64_t p = 0; p < planes; ++p) {
    const float* in_plane = x.data() + p * h * w;
    float* out_plane = out.data() + p * oh * ow;
    int32_t* arg_plane = argmax_out ? argmax_out->data() + p * oh * ow : nullptr;
    for (int i = 0; i < oh; ++i) {
      for (int j = 0; j < ow; ++j) {
        int32_t best_idx = (i * window) * w + j * window;
        float best = in_plane[best_idx];
        for (int di = 0; di < window; ++di) {
          for (int dj = 0; dj < window; ++dj) {
            const int32_t idx = (i * window + di) * w + (j * window + dj);
            if (in_plane[idx] > best) {
              best = in_plane[idx];
              best_idx = idx;
            }
          }
        }
        out_plane[i * ow + j] = best;
        if (arg_plane) arg_plane[i * ow + j] = best_idx;
      }
    }
  }
  return out;
}

void maxpool2d_backward(const Tensor& dy, const std::vector<int32_t>& argmax, Tensor& dx) {
  require(static_cast<int64_t>(argmax.size()) == dy.numel(), "maxpool2d_backward: argmax/upstream size mismatch");
  const int n = dy.dim(0), c = dy.dim(1), oh = dy.dim(2), ow = dy.dim(3);
  const int h = dx.dim(2), w = dx.dim(3);
  (void)h;
  const int64_t planes = static_cast<int64_t>(n) * c;
  const int64_t in_plane_sz = static_cast<int64_t>(dx.dim(2)) * w;
#pragma omp parallel for schedule(static)
  for (int64_t p = 0; p < planes; ++p) {
    const float* dy_plane = dy.data() + p * oh * ow;
    const int32_t* arg_plane = argmax.data() + p * oh * ow;
    float* dx_plane = dx.data() + p * in_plane_sz;
    for (int64_t i = 0; i < static_cast<int64_t>(oh) * ow; ++i) dx_plane[arg_plane[i]] += dy_plane[i];
  }
}

Tensor dense(const Tensor& x, const Tensor& w, const Tensor& b) {
  require(x.ndim() == 2 && w.ndim() == 2 && b.ndim() == 1, "dense: expected x [N,F], w [F,G], b [G]");
  require(x.dim(1) == w.dim(0),
          "dense: inner dim mismatch, x " + x.shape_str() + " vs w " + w.shape_str());
  require(b.dim(0) == w.dim(1), "dense: bias dim mismatch, b " + b.shape_str() + " vs w " + w.shape_str());
  const int n = x.dim(0), f = x.dim(1), g = w.dim(1);
  Tensor out({n, g});
  MapRM(out.data(), n, g).noalias() = ConstMapRM(x.data(), n, f) * ConstMapRM(w.data(), f, g);
  for (int i = 0; i < n; ++i) {
    float* row = out.data() + static_cast<int64_t>(i) * g;
    for (int j = 0; j < g; ++j) row[j] += b[j];
  }
  return out;
}

void dense_backward(const Tensor& x, const Tensor& w, const Tensor& dy, Tensor* dx, Tensor* dw, Tensor* db) {
  const int n = x.dim(0), f = x.dim(1), g = w.dim(1);
  require(dy.ndim() == 2 && dy.dim(0) == n && dy.dim(1) == g, "dense_backward: upstream shape mismatch");
  if (dx) {
    *dx = Tensor({n, f});
    MapRM(dx->data(), n, f).noalias() = ConstMapRM(dy.data(), n, g) * ConstMapRM(w.data(), f, g).transpose();
  }
  if (dw) {
    *dw = Tensor({f, g});
    MapRM(dw->data(), f, g).noalias() = ConstMapRM(x.data(), n, f).transpose() * ConstMapRM(dy.data(), n, g);
  }
  if (db) {
    *db = Tensor({g});
    for (int i = 0; i < n; ++i) {
      const float* row = dy.data() + static_cast<int64_t>(i) * g;
      for (int j = 0; j < g; ++j) (*db)[j] += row[j];
    }
  }
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  require(a.ndim() == 2 && b.ndim() == 2, "matmul: expected 2-D operands, got " + a.shape_str() + " and " + b.shape_str());
  require(a.dim(1) == b.dim(0), "matmul: inner dim mismatch, " + a.shape_str() + " vs " + b.shape_str());
  const int m = a.dim(0), k = a.dim(1), n = b.dim(1);
  Tensor out({m, n});
  MapRM(out.data(), m, n).noalias() = ConstMapRM(a.data(), m, k) * ConstMapRM(b.data(), k, n);
  return out;
}

void matmul_backward(const Tensor& a, const Tensor& b, const Tensor& dy, Tensor* da, Tensor* db) {
  const int m = a.dim(0), k = a.dim(1), n = b.dim(1);
  require(dy.dim(0) == m && dy.dim(1) == n, "matmul_backward: upstream shape mismatch");
  if (da) {
    *da = Tensor({m, k});
    MapRM(da->data(), m, k).noalias() = ConstMapRM(dy.data(), m, n) * ConstMapRM(b.data(), k, n).transpose();
  }
  if (db) {
    *db = Tensor({k, n});
    MapRM(db->data(), k, n).noalias() = ConstMapRM(a.data(), m, k).transpose() * ConstMapRM(dy.data(), m, n);
  }
}

Tensor softmax(const Tensor& logits) {
  require(logits.ndim() == 2, "softmax: expected [N,C] logits, got " + logits.shape_str());
  const int n = logits.dim(0), c = logits.dim(1);
  Tensor out({n, c});
  for (int i = 0; i < n; ++i) {
    const float* row = logits.data() + static_cast<int64_t>(i) * c;
    float* po = out.data() + static_cast<int64_t>(i) * c;
    float m = row[0];
    for (int j = 1; j < c; ++j) m = std::max(m, row[j]);
    double denom = 0.0;
    for (int j = 0; j < c; ++j) denom += std::exp(static_cast<double>(row[j]) - m);
    for (int j = 0; j < c; ++j) {
      po[j] = static_cast<float>(std::exp(static_cast<double>(row[j]) - m) / denom);
    }
  }
  return out;
}

void softmax_backward(const Tensor& probs, const Tensor& dy, Tensor& dx) {
  const int n = probs.dim(0), c = probs.dim(1);
  for (int i = 0; i < n; ++i) {
    const float* p = probs.data() + static_cast<int64_t>(i) * c;
    const float* g = dy.data() + static_cast<int64_t>(i) * c;
    float* o = dx.data() + static_cast<int64_t>(i) * c;
    double dot = 0.0;
    for (int j = 0; j < c; ++j) dot += static_cast<double>(g[j]) * p[j];
    for (int j = 0; j < c; ++j) o[j] += static_cast<float>(p[j] * (static_cast<double>(g[j]) - dot));
  }
}

namespace {

// Row log-sum-exp with max subtraction.
double row_lse(const float* row, int c) {
  float m = row[0];
  for (int j = 1; j < c; ++j) m = std::max(m, row[j]);
  double s = 0.0;
  for (int j = 0; j < c; ++j) s += std::exp(static_cast<double>(row[j]) - m);
  return static_cast<double>(m) + std::log(s);
}

}  // namespace

double cross_entropy(const Tensor& logits, const std::vector<int>& labels) {
  require(logits.ndim() == 2, "cross_entropy: expected [N,C] logits, got " + logits.shape_str());
  const int n = logits.dim(0), c = logits.dim(1);
  require(static_cast<int>(labels.size()) == n, "cross_entropy: label count does not match batch");
  double total = 0.0;
  for (int i = 0; i < n; ++i) {
    const int y = labels[static_cast<size_t>(i)];
    require(y >= 0 && y < c, "cross_entropy: label " + std::to_string(y) + " out of range [0," + std::to_string(c) + ")");
    const float* row = logits.data() + static_cast<int64_t>(i) * c;
    total += row_lse(row, c) - static_cast<double>(row[y]);
  }
  return total / n;
}

void cross_entropy_backward(const Tensor& logits, const std::vector<int>& labels, double upstream, Tensor& dlogits) {
  const int n = logits.dim(0), c = logits.dim(1);
  const Tensor p = softmax(logits);
  const double scale = upstream / n;
  for (int i = 0; i < n; ++i) {
    const float* pr = p.data() + static_cast<int64_t>(i) * c;
    float* o = dlogits.data() + static_cast<int64_t>(i) * c;
    for (int j = 0; j < c; ++j) {
      const double onehot = (j == labels[static_cast<size_t>(i)]) ? 1.0 : 0.0;
      o[j] += static_cast<float>(scale * (static_cast<double>(pr[j]) - onehot));
    }
  }
}

double kl_divergence(const Tensor& p, const Tensor& q) {
  require(p.ndim() == 2 && q.ndim() == 2 && p.same_shape(q), "kl_divergence: expected matching [N,C] tensors");
  const int n = p.dim(0), c = p.dim(1);
  double total = 0.0;
  for (int i = 0; i < n; ++i) {
    const float* pr = p.data() + static_cast<int64_t>(i) * c;
    const float* qr = q.data() + static_cast<int64_t>(i) * c;
    double ps = 0.0, qs = 0.0;
    for (int j = 0; j < c; ++j) {
      ps += pr[j];
      qs += qr[j];
    }
    require(std::abs(ps - 1.0) <= 1e-4 && std::abs(qs - 1.0) <= 1e-4,
            "kl_divergence: row " + std::to_string(i) + " is not a normalized distribution");
    double row = 0.0;
    for (int j = 0; j < c; ++j) {
      if (pr[j] <= 0.0f) continue;
      const double qc = std::max(static_cast<double>(qr[j]), 1e-12);
      row += static_cast<double>(pr[j]) * (std::log(static_cast<double>(pr[j])) - std::log(qc));
    }
    total += row;
  }
  return total / n;
}

double kl_divergence_logits(const Tensor& a, const Tensor& b) {
  require(a.ndim() == 2 && b.ndim() == 2 && a.same_shape(b), "kl_divergence_logits: expected matching [N,C] tensors");
  const int n = a.dim(0), c = a.dim(1);
  double total = 0.0;
  for (int i = 0; i < n; ++i) {
    const float* ar = a.data() + static_cast<int64_t>(i) * c;
    const float* br = b.data() + static_cast<int64_t>(i) * c;
    const double lse_a = row_lse(ar, c);
    const double lse_b = row_lse(br, c);
    double row = 0.0;
    for (int j = 0; j < c; ++j) {
      const double logp = static_cast<double>(ar[j]) - lse_a;
      const double logq = static_cast<double>(br[j]) - lse_b;
      row += std::exp(logp) * (logp - logq);
    }
    total += row;
  }
  return total / n;
}

void kl_divergence_logits_backward(const Tensor& a, const Tensor& b, double upstream, Tensor& da, Tensor& db) {
  const int n = a.dim(0), c = a.dim(1);
  const double scale = upstream / n;
  for (int i = 0; i < n; ++i) {
    const float* ar = a.data() + static_cast<int64_t>(i) * c;
    const float* br = b.data() + static_cast<int64_t>(i) * c;
    float* dar = da.data() + static_cast<int64_t>(i) * c;
    float* dbr = db.data() + static_cast<int64_t>(i) * c;
    const double lse_a = row_lse(ar, c);
    const double lse_b = row_lse(br, c);
    double r = 0.0;
    for (int j = 0; j < c; ++j) {
      const double logp = static_cast<double>(ar[j]) - lse_a;
      const double logq = static_cast<double>(br[j]) - lse_b;
      r += std::exp(logp) * (logp - logq);
    }
    for (int j = 0; j < c; ++j) {
      const double logp = static_cast<double>(ar[j]) - lse_a;
      const double logq = static_cast<double>(br[j]) - lse_b;
      const double p = std::exp(logp);
      const double q = std::exp(logq);
      dar[j] += static_cast<float>(scale * p * ((logp - logq) - r));
      dbr[j] += static_cast<float>(scale * (q - p));
    }
  }
}

double pick_label_sum(const Tensor& logits, const std::vector<int>& labels) {
  const int n = logits.dim(0), c = logits.dim(1);
  require(static_cast<int>(labels.size()) == n, "pick_label_sum: label count does not match batch");
  double total = 0.0;
  for (int i = 0; i < n; ++i) {
    const int y = labels[static_cast<size_t>(i)];
    require(y >= 0 && y < c, "pick_label_sum: label out of range");
    total += static_cast<double>(logits[static_cast<int64_t>(i) * c + y]);
  }
  return total;
}

void pick_label_sum_backward(const std::vector<int>& labels, double upstream, Tensor& dlogits) {
  const int c = dlogits.dim(1);
  for (size_t i = 0; i < labels.size(); ++i) {
    dlogits[static_cast<int64_t>(i) * c + labels[i]] += static_cast<float>(upstream);
  }
}

}  // namespace saliq::ops
