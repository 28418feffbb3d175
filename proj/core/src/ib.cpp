#include "closer/ib.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numbers>
#include <numeric>

#include "closer/error.hpp"
#include "closer/mlp.hpp"
#include "closer/optim.hpp"
#include "closer/rng.hpp"

namespace closer {

namespace {

Tensor sample_covariance(const Tensor& features, std::span<const std::size_t> rows,
                         double shrinkage) {
  const auto d = features.cols();
  const double n = static_cast<double>(rows.size());
  std::vector<double> mean(d, 0.0);
  for (auto i : rows)
    for (std::size_t j = 0; j < d; ++j) mean[j] += features.at(i, j);
  for (auto& m : mean) m /= n;
  Tensor cov({d, d});
  for (auto i : rows) {
    for (std::size_t j = 0; j < d; ++j) {
      const double dj = features.at(i, j) - mean[j];
      for (std::size_t k = j; k < d; ++k) cov.at(j, k) += dj * (features.at(i, k) - mean[k]);
    }
  }
  for (std::size_t j = 0; j < d; ++j) {
    for (std::size_t k = j; k < d; ++k) {
      cov.at(j, k) /= (n - 1.0);
      cov.at(k, j) = cov.at(j, k);
    }
    cov.at(j, j) += shrinkage;
  }
  return cov;
}

}  // namespace

double spd_logdet(const Tensor& matrix) {
  require(matrix.rank() == 2 && matrix.rows() == matrix.cols(), ErrorCode::kShapeMismatch,
          "logdet: matrix must be square");
  const auto d = matrix.rows();
  Tensor l({d, d});
  double logdet = 0.0;
  for (std::size_t j = 0; j < d; ++j) {
    double diag = matrix.at(j, j);
    for (std::size_t k = 0; k < j; ++k) diag -= l.at(j, k) * l.at(j, k);
    require(diag > 0.0, ErrorCode::kDegenerateInput,
            "logdet: matrix is not positive definite (pivot " + std::to_string(j) + ")");
    const double ljj = std::sqrt(diag);
    l.at(j, j) = ljj;
    logdet += 2.0 * std::log(ljj);
    for (std::size_t i = j + 1; i < d; ++i) {
      double s = matrix.at(i, j);
      for (std::size_t k = 0; k < j; ++k) s -= l.at(i, k) * l.at(j, k);
      l.at(i, j) = s / ljj;
    }
  }
  return logdet;
}

CovarianceSummary covariances(const Tensor& features, std::span<const int> labels,
                              double shrinkage) {
  require(features.rank() == 2 && features.rows() == labels.size(), ErrorCode::kShapeMismatch,
          "covariances: feature rows do not match label count");
  require(shrinkage > 0.0, ErrorCode::kInvalidArgument, "covariances: shrinkage must be positive");
  const auto d = features.cols();
  require(d >= 2, ErrorCode::kInvalidArgument, "covariances: need dimension >= 2");
  std::map<int, std::vector<std::size_t>> members;
  for (std::size_t i = 0; i < labels.size(); ++i) members[labels[i]].push_back(i);
  require(members.size() >= 2, ErrorCode::kInvalidArgument, "covariances: need at least two classes");

  CovarianceSummary out;
  out.dim = d;
  out.shrinkage = shrinkage;
  for (const auto& [c, rows] : members) {
    require(rows.size() >= 2, ErrorCode::kInvalidArgument,
            "covariances: class " + std::to_string(c) + " has fewer than two samples");
    out.class_ids.push_back(c);
    out.within_logdet.push_back(spd_logdet(sample_covariance(features, rows, shrinkage)));
    out.undersampled = out.undersampled || rows.size() <= d;
  }
  std::vector<std::size_t> all(labels.size());
  std::iota(all.begin(), all.end(), std::size_t{0});
  out.total_logdet = spd_logdet(sample_covariance(features, all, shrinkage));
  out.undersampled = out.undersampled || all.size() <= d;
  return out;
}

IbBoundTerms ib_bound_terms(const CovarianceSummary& summary) {
  require(summary.classes() >= 1 && summary.within_logdet.size() == summary.classes(),
          ErrorCode::kInvalidArgument, "ib bound: summary has no classes");
  const double base = static_cast<double>(summary.dim) * std::log(2.0 * std::numbers::pi * std::numbers::e);
  const double mean_within =
      std::accumulate(summary.within_logdet.begin(), summary.within_logdet.end(), 0.0) /
      static_cast<double>(summary.classes());
  return {base + mean_within, base + summary.total_logdet};
}

double ib_lower_bound(const CovarianceSummary& summary) {
  const auto t = ib_bound_terms(summary);
  if (!(t.numerator < 0.0) || !(t.denominator < 0.0)) {
    fail(ErrorCode::kNotInRegime,
         "ib bound: requires negative numerator and denominator, got " +
             std::to_string(t.numerator) + " and " + std::to_string(t.denominator));
  }
  return 1.0 - t.numerator / t.denominator;
}

void MineConfig::validate() const {
  require(iterations >= 1, ErrorCode::kInvalidArgument, "mine: iterations must be >= 1");
  require(hidden >= 1, ErrorCode::kInvalidArgument, "mine: hidden width must be >= 1");
  require(layers >= 2, ErrorCode::kInvalidArgument, "mine: need at least two layers");
  require(batch_size >= 2, ErrorCode::kInvalidArgument, "mine: batch size must be >= 2");
  require(lr > 0.0, ErrorCode::kInvalidArgument, "mine: learning rate must be positive");
  require(readout_fraction > 0.0 && readout_fraction <= 1.0, ErrorCode::kInvalidArgument,
          "mine: readout fraction must lie in (0, 1]");
}

MineResult mine_estimate(const Tensor& a, const Tensor& b, const MineConfig& config) {
  config.validate();
  require(a.rank() == 2 && b.rank() == 2 && a.rows() == b.rows(), ErrorCode::kShapeMismatch,
          "mine: a and b must be matrices with matching rows");
  const auto n = a.rows();
  require(n >= 2 * config.batch_size, ErrorCode::kInvalidArgument,
          "mine: need at least 2x batch size samples, got " + std::to_string(n));
  const auto da = a.cols(), db = b.cols();

  std::vector<std::size_t> dims{da + db};
  for (std::size_t l = 0; l + 1 < config.layers; ++l) dims.push_back(config.hidden);
  dims.push_back(1);
  Rng rng(derive_seed(config.seed, stream::kMine));
  Mlp net = Mlp::init(dims, derive_seed(config.seed, stream::kInit));
  Adam adam(config.lr);

  const auto m = config.batch_size;
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::vector<std::size_t> perm(m);
  std::size_t cursor = n;

  MineResult out;
  out.trace.reserve(config.iterations);
  std::vector<double> joint(m * (da + db)), marginal(m * (da + db));
  for (std::size_t it = 0; it < config.iterations; ++it) {
    if (cursor + m > n) {
      std::shuffle(order.begin(), order.end(), rng);
      cursor = 0;
    }
    std::iota(perm.begin(), perm.end(), std::size_t{0});
    std::shuffle(perm.begin(), perm.end(), rng);
    for (std::size_t r = 0; r < m; ++r) {
      const auto i = order[cursor + r];
      const auto k = order[cursor + perm[r]];
      double* jr = joint.data() + r * (da + db);
      double* mr = marginal.data() + r * (da + db);
      for (std::size_t c = 0; c < da; ++c) jr[c] = mr[c] = a.at(i, c);
      for (std::size_t c = 0; c < db; ++c) {
        jr[da + c] = b.at(i, c);
        mr[da + c] = b.at(k, c);
      }
    }
    cursor += m;

    Tape tape;
    const auto bound = net.bind(tape, true);
    Var t_joint = net.forward(bound, tape.constant(Tensor::matrix(m, da + db, joint)));
    Var t_marg = net.forward(bound, tape.constant(Tensor::matrix(m, da + db, marginal)));
    // DV bound: mean T(joint) − (logsumexp T(marginal) − log m)
    Var dv = sub(mean(t_joint), logsumexp(t_marg));
    const double value = dv.value().item() + std::log(static_cast<double>(m));
    if (!std::isfinite(value)) {
      fail(ErrorCode::kNonFinite, "mine: non-finite objective at iteration " + std::to_string(it));
    }
    out.trace.push_back(value);
    tape.backward(scale(dv, -1.0));
    std::vector<Tensor> grads;
    for (auto v : bound.params) grads.push_back(tape.grad(v));
    adam.step(net.parameters(), grads);
  }
  const auto window = std::max<std::size_t>(
      1, static_cast<std::size_t>(std::ceil(config.readout_fraction * static_cast<double>(config.iterations))));
  out.raw = std::accumulate(out.trace.end() - static_cast<std::ptrdiff_t>(window), out.trace.end(), 0.0) /
            static_cast<double>(window);
  out.estimate = std::max(0.0, out.raw);
  return out;
}

Tensor one_hot(std::span<const int> labels, std::span<const int> classes) {
  require(!labels.empty() && !classes.empty(), ErrorCode::kInvalidArgument, "one_hot: empty input");
  std::map<int, std::size_t> index;
  for (std::size_t k = 0; k < classes.size(); ++k) index[classes[k]] = k;
  Tensor out({labels.size(), classes.size()});
  for (std::size_t i = 0; i < labels.size(); ++i) {
    auto it = index.find(labels[i]);
    require(it != index.end(), ErrorCode::kInvalidArgument,
            "one_hot: label " + std::to_string(labels[i]) + " not in class list");
    out.at(i, it->second) = 1.0;
  }
  return out;
}

std::vector<IbPoint> ib_plane(const EncoderParams& params, const Dataset& data,
                              std::span<const int> base_classes,
                              std::span<const int> new_classes, const IbPlaneConfig& config) {
  std::vector<int> whole(base_classes.begin(), base_classes.end());
  whole.insert(whole.end(), new_classes.begin(), new_classes.end());
  std::sort(whole.begin(), whole.end());

  struct Group {
    const char* name;
    std::vector<int> classes;
  };
  std::vector<Group> groups{{"base", {base_classes.begin(), base_classes.end()}},
                            {"new", {new_classes.begin(), new_classes.end()}},
                            {"whole", whole}};
  std::vector<IbPoint> out;
  for (auto& g : groups) {
    std::sort(g.classes.begin(), g.classes.end());
    if (g.classes.empty()) continue;
    const Dataset subset = data.filter_classes(g.classes);
    require(!subset.empty(), ErrorCode::kInvalidArgument,
            std::string("ib_plane: no samples for group ") + g.name);
    const Tensor x = subset.all_inputs();
    const Tensor z = embed(params, x);
    const Tensor y = one_hot(subset.labels(), g.classes);
    IbPoint p;
    p.group = g.name;
    // Small groups get a smaller batch so every batch draws distinct samples.
    MineConfig xz = config.xz, yz = config.yz;
    xz.batch_size = std::min(xz.batch_size, subset.size() / 2);
    yz.batch_size = std::min(yz.batch_size, subset.size() / 2);
    p.i_xz = mine_estimate(x, z, xz).estimate;
    p.i_yz = mine_estimate(y, z, yz).estimate;
    if (g.classes.size() >= 2) {
      try {
        p.closed_form_bound = ib_lower_bound(covariances(z, subset.labels()));
      } catch (const Error& e) {
        if (e.code() != ErrorCode::kNotInRegime && e.code() != ErrorCode::kInvalidArgument) throw;
      }
    }
    out.push_back(std::move(p));
  }
  return out;
}

}  // namespace closer
