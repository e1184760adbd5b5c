#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <numeric>

#include "model_impl.hpp"
#include "shapdoor/rng.hpp"

namespace shapdoor::detail {

namespace {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstRowMap = Eigen::Map<const RowMatrix>;

RowMatrix standardize(const NeuralNet& net, const Matrix& xs) {
  RowMatrix a(static_cast<Eigen::Index>(xs.rows()), static_cast<Eigen::Index>(xs.cols()));
  for (std::size_t i = 0; i < xs.rows(); ++i) {
    for (std::size_t j = 0; j < xs.cols(); ++j) {
      a(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) =
          (xs(i, j) - net.input_mean[j]) / net.input_scale[j];
    }
  }
  return a;
}

Eigen::VectorXd forward(const NeuralNet& net, RowMatrix a) {
  for (std::size_t l = 0; l < net.layers.size(); ++l) {
    const auto& layer = net.layers[l];
    ConstRowMap w(layer.weights.data(), static_cast<Eigen::Index>(layer.outputs),
                  static_cast<Eigen::Index>(layer.inputs));
    Eigen::Map<const Eigen::RowVectorXd> b(layer.bias.data(),
                                           static_cast<Eigen::Index>(layer.outputs));
    RowMatrix z = a * w.transpose();
    z.rowwise() += b;
    if (l + 1 < net.layers.size()) z = z.cwiseMax(0.0);
    a = std::move(z);
  }
  return a.col(0);
}

}  // namespace

double net_margin(const NeuralNet& net, std::span<const double> x) {
  Matrix one(1, x.size(), std::vector<double>(x.begin(), x.end()));
  return forward(net, standardize(net, one))(0);
}

void net_margins(const NeuralNet& net, const Matrix& xs, std::span<double> out) {
  const Eigen::VectorXd m = forward(net, standardize(net, xs));
  for (std::size_t i = 0; i < xs.rows(); ++i) out[i] = m(static_cast<Eigen::Index>(i));
}

NeuralNet train_net(const Dataset& ds, const NetParams& params, std::uint64_t seed,
                    std::vector<double>* epoch_losses) {
  const std::size_t n = ds.n_rows();
  const std::size_t d = ds.n_features();
  Rng rng(seed, 0x7e7);

  NeuralNet net;
  net.input_mean.assign(d, 0.0);
  net.input_scale.assign(d, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    auto r = ds.row(i);
    for (std::size_t j = 0; j < d; ++j) net.input_mean[j] += r[j];
  }
  for (double& m : net.input_mean) m /= static_cast<double>(n);
  for (std::size_t i = 0; i < n; ++i) {
    auto r = ds.row(i);
    for (std::size_t j = 0; j < d; ++j) {
      const double c = r[j] - net.input_mean[j];
      net.input_scale[j] += c * c;
    }
  }
  for (double& s : net.input_scale) {
    s = std::sqrt(s / static_cast<double>(n));
    if (s < 1e-12) s = 1.0;
  }

  std::vector<std::size_t> widths{d};
  widths.insert(widths.end(), params.layer_widths.begin(), params.layer_widths.end());
  widths.push_back(1);
  const std::size_t n_layers = widths.size() - 1;

  std::vector<RowMatrix> w(n_layers);
  std::vector<Eigen::RowVectorXd> b(n_layers);
  for (std::size_t l = 0; l < n_layers; ++l) {
    const auto in = static_cast<Eigen::Index>(widths[l]);
    const auto out = static_cast<Eigen::Index>(widths[l + 1]);
    // He initialization for ReLU layers, Glorot-style for the output.
    const double stddev = std::sqrt((l + 1 < n_layers ? 2.0 : 1.0) / static_cast<double>(in));
    w[l].resize(out, in);
    for (Eigen::Index r = 0; r < out; ++r) {
      for (Eigen::Index c = 0; c < in; ++c) w[l](r, c) = stddev * rng.normal();
    }
    b[l] = Eigen::RowVectorXd::Zero(out);
  }

  const RowMatrix x_all = standardize(net, ds.features());
  Eigen::VectorXd y_all(static_cast<Eigen::Index>(n));
  for (std::size_t i = 0; i < n; ++i) y_all(static_cast<Eigen::Index>(i)) = ds.label(i);

  const double keep = 1.0 - params.dropout_rate;
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});

  std::vector<RowMatrix> acts(n_layers), pre(n_layers), masks(n_layers);
  for (std::size_t epoch = 0; epoch < params.epochs; ++epoch) {
    rng.shuffle(order);
    for (std::size_t start = 0; start < n; start += params.batch_size) {
      const std::size_t end = std::min(n, start + params.batch_size);
      const auto bs = static_cast<Eigen::Index>(end - start);
      RowMatrix a(bs, static_cast<Eigen::Index>(d));
      Eigen::VectorXd y(bs);
      for (Eigen::Index k = 0; k < bs; ++k) {
        const auto src = static_cast<Eigen::Index>(order[start + static_cast<std::size_t>(k)]);
        a.row(k) = x_all.row(src);
        y(k) = y_all(src);
      }

      for (std::size_t l = 0; l < n_layers; ++l) {
        acts[l] = a;
        RowMatrix z = a * w[l].transpose();
        z.rowwise() += b[l];
        if (l + 1 < n_layers) {
          pre[l] = z;
          a = z.cwiseMax(0.0);
          if (params.dropout_rate > 0.0) {
            masks[l].resize(a.rows(), a.cols());
            for (Eigen::Index r = 0; r < a.rows(); ++r) {
              for (Eigen::Index c = 0; c < a.cols(); ++c) {
                masks[l](r, c) = rng.uniform() < keep ? 1.0 / keep : 0.0;
              }
            }
            a = a.cwiseProduct(masks[l]);
          }
        } else {
          a = std::move(z);
        }
      }

      // d(mean BCE)/d(logit) = (sigmoid(z) - y) / batch
      RowMatrix dz(bs, 1);
      for (Eigen::Index k = 0; k < bs; ++k) {
        dz(k, 0) = (logistic(a(k, 0)) - y(k)) / static_cast<double>(bs);
      }
      for (std::size_t l = n_layers; l-- > 0;) {
        const RowMatrix dw = dz.transpose() * acts[l];
        const Eigen::RowVectorXd db = dz.colwise().sum();
        if (l > 0) {
          RowMatrix da = dz * w[l];
          if (params.dropout_rate > 0.0) da = da.cwiseProduct(masks[l - 1]);
          dz = da.cwiseProduct((pre[l - 1].array() > 0.0).cast<double>().matrix());
        }
        w[l] -= params.learning_rate * dw;
        b[l] -= params.learning_rate * db;
      }
    }

    if (epoch_losses) {
      RowMatrix a = x_all;
      for (std::size_t l = 0; l < n_layers; ++l) {
        RowMatrix z = a * w[l].transpose();
        z.rowwise() += b[l];
        a = l + 1 < n_layers ? RowMatrix(z.cwiseMax(0.0)) : z;
      }
      double loss = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        loss += logistic_loss(a(static_cast<Eigen::Index>(i), 0), ds.label(i));
      }
      epoch_losses->push_back(loss / static_cast<double>(n));
    }
  }

  for (std::size_t l = 0; l < n_layers; ++l) {
    DenseLayer layer;
    layer.inputs = widths[l];
    layer.outputs = widths[l + 1];
    layer.weights.assign(w[l].data(), w[l].data() + w[l].size());
    layer.bias.assign(b[l].data(), b[l].data() + b[l].size());
    net.layers.push_back(std::move(layer));
  }
  return net;
}

}  // namespace shapdoor::detail
