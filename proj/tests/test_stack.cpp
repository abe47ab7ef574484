#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "test_util.hpp"
#include "tp/stack.hpp"

using namespace tp;

namespace {

Vec normal_vec(Index n, Rng& rng) {
  auto d = Dist1D::std_normal();
  Vec v(n);
  for (Index i = 0; i < n; ++i) v[i] = d.sample(rng);
  return v;
}

Vec linspace(double lo, double hi, Index n) {
  Vec v(n);
  for (Index i = 0; i < n; ++i) v[i] = lo + (hi - lo) * double(i) / double(std::max<Index>(n - 1, 1));
  return v;
}

// Eq.-(1) GP NLL through dense solves, independent of the layer path.
double gp_nll_oracle(const Mat& sigma, const Vec& y) {
  auto ldlt = sigma.ldlt();
  double quad = y.dot(ldlt.solve(y));
  double logdet = ldlt.vectorD().array().log().sum();
  return 0.5 * y.size() * kLogTwoPi + 0.5 * quad + 0.5 * logdet;
}

// closed-form multivariate student-t log density at zero location
double mvt_logpdf_oracle(const Mat& sigma, const Vec& y, double theta) {
  const double n = double(y.size());
  auto ldlt = sigma.ldlt();
  double quad = y.dot(ldlt.solve(y));
  double logdet = ldlt.vectorD().array().log().sum();
  return std::lgamma(0.5 * (theta + n)) - std::lgamma(0.5 * theta) -
         0.5 * n * std::log(theta * kPi) - 0.5 * logdet -
         0.5 * (theta + n) * std::log1p(quad / theta);
}

Kernel noisy_se(double sigma, double rate, double sigma0) {
  return Kernel::sum({Kernel::squared_exponential(sigma, rate), Kernel::white_noise(sigma0)});
}

}  // namespace

TEST_CASE("validation: order and exclusion rules") {
  CHECK(validate_stack(std::vector<LayerSpec>{}).valid);

  MarginalLayer marg(Warping::log(), LocationFn::constant(0.0), 1.0);
  CovarianceLayer cov(Kernel::squared_exponential(1.0, 1.0));
  CHECK(validate_stack({LayerSpec(marg), LayerSpec(cov)}).valid == false);
  CHECK(validate_stack({LayerSpec(cov), LayerSpec(marg)}).valid);

  CHECK(validate_stack({LayerSpec(ArchimedeanLayer::clayton(1.0)), LayerSpec(cov)}).valid == false);
  CHECK(validate_stack({LayerSpec(ArchimedeanLayer::clayton(1.0)), LayerSpec(marg)}).valid);
  CHECK(validate_stack({LayerSpec(EllipticalLayer::student_t(0.25)), LayerSpec(cov)}).valid);
  CHECK(validate_stack({LayerSpec(cov), LayerSpec(EllipticalLayer::student_t(0.25))}).valid ==
        false);
  CHECK_THROWS_AS(static_cast<void>(make_stack({LayerSpec(marg), LayerSpec(cov)})),
                  ValidationError);
}

TEST_CASE("reference-only stack at the mode") {
  LayerStack stack;
  for (Index n : {1, 3, 8}) {
    Vec t = linspace(0.0, 1.0, n);
    CHECK(stack_nll(stack, t, Vec::Zero(n)) ==
          doctest::Approx(0.5 * n * kLogTwoPi).epsilon(1e-14));
  }
}

TEST_CASE("covariance-only stack equals the closed-form GP NLL") {
  Rng rng(3);
  for (int rep = 0; rep < 50; ++rep) {
    Index n = 2 + Index(rng.uniform() * 18);
    Vec t(n);
    for (Index i = 0; i < n; ++i) t[i] = 10.0 * rng.uniform();
    auto kernel = noisy_se(0.5 + rng.uniform(), 0.2 + rng.uniform(), 0.1 + 0.4 * rng.uniform());
    LayerStack stack;
    stack.covariance = CovarianceLayer(kernel);
    Vec y = normal_vec(n, rng);
    double expect = gp_nll_oracle(gram(kernel, t, true), y);
    CHECK(stack_nll(stack, t, y) == doctest::Approx(expect).epsilon(0).scale(1).epsilon(1e-8));
  }
}

TEST_CASE("student-t stack equals the closed-form multivariate t density") {
  Rng rng(5);
  for (int rep = 0; rep < 50; ++rep) {
    Index n = 1 + Index(rng.uniform() * 4);
    Vec t(n);
    for (Index i = 0; i < n; ++i) t[i] = 6.0 * rng.uniform();
    double nu_inv = 0.05 + 0.4 * rng.uniform();
    auto kernel = noisy_se(0.6 + rng.uniform(), 0.3 + rng.uniform(), 0.2);
    LayerStack stack;
    stack.copula = EllipticalLayer::student_t(nu_inv);
    stack.covariance = CovarianceLayer(kernel);
    Vec y = normal_vec(n, rng);
    double expect = -mvt_logpdf_oracle(gram(kernel, t, true), y, 1.0 / nu_inv);
    CHECK(stack_nll(stack, t, y) == doctest::Approx(expect).epsilon(0).scale(1).epsilon(1e-6));
  }
}

TEST_CASE("identity reductions are exact") {
  Rng rng(7);
  Vec t = linspace(0.0, 3.0, 6);
  Vec y = normal_vec(6, rng);
  auto kernel = noisy_se(1.1, 0.4, 0.3);

  LayerStack gaussian;
  gaussian.covariance = CovarianceLayer(kernel);
  LayerStack boundary;
  boundary.copula = EllipticalLayer::student_t(0.0);
  boundary.covariance = CovarianceLayer(kernel);
  LayerStack identity_radial;
  identity_radial.copula = EllipticalLayer::gaussian_identity();
  identity_radial.covariance = CovarianceLayer(kernel);
  LayerStack identity_warp = gaussian;
  identity_warp.marginals.push_back(
      MarginalLayer(Warping::affine(0.0, 1.0), LocationFn::constant(0.0), 1.0));

  double base = stack_nll(gaussian, t, y);
  CHECK(std::abs(stack_nll(boundary, t, y) - base) <= 1e-10);
  CHECK(std::abs(stack_nll(identity_radial, t, y) - base) <= 1e-10);
  CHECK(std::abs(stack_nll(identity_warp, t, y) - base) <= 1e-10);

  auto a = stack_posterior_sample(boundary, t, y, linspace(0.5, 2.5, 4), 50, 99);
  auto b = stack_posterior_sample(gaussian, t, y, linspace(0.5, 2.5, 4), 50, 99);
  CHECK((a.samples - b.samples).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("domain violation yields the +inf sentinel with a reason") {
  LayerStack stack;
  stack.marginals.push_back(MarginalLayer(Warping::log(), LocationFn::constant(0.0), 1.0));
  Vec t(2), y(2);
  t << 0.0, 1.0;
  y << 1.0, -0.5;  // log warping rejects the negative coordinate
  auto res = stack_nll_explained(stack, t, y);
  CHECK(std::isinf(res.value));
  CHECK(!res.reason.empty());
}

TEST_CASE("composite logdet accounting vs full numeric jacobian") {
  Rng rng(11);
  for (int rep = 0; rep < 8; ++rep) {
    Index n = 2 + Index(rng.uniform() * 3);
    Vec t(n);
    for (Index i = 0; i < n; ++i) t[i] = 4.0 * rng.uniform();
    auto kernel = noisy_se(0.8, 0.5, 0.2);
    LayerStack stack;
    stack.copula = EllipticalLayer::student_t(0.2);
    stack.covariance = CovarianceLayer(kernel);
    stack.marginals.push_back(
        MarginalLayer(Warping::box_cox_shifted(1.4, 0.2), LocationFn::constant(0.1), 0.9));
    Vec x = normal_vec(n, rng);
    // forward simulate a data point through the stack
    Vec v = std::get<EllipticalLayer>(*stack.copula).forward(x);
    v = cov_forward(*stack.covariance, t, v);
    Vec y = marginal_forward(stack.marginals[0], t, v);

    auto inverse_map = [&](const Vec& q) {
      Vec z = marginal_inverse(stack.marginals[0], t, q);
      z = cov_inverse(*stack.covariance, t, z);
      return std::get<EllipticalLayer>(*stack.copula).inverse(z);
    };
    double logdet = tp_test::numeric_jacobian_logdet(inverse_map, y, 1e-6);
    Vec x_rec = inverse_map(y);
    double numeric_nll = 0.5 * n * kLogTwoPi + 0.5 * x_rec.squaredNorm() - logdet;
    CHECK(stack_nll(stack, t, y) ==
          doctest::Approx(numeric_nll).epsilon(0).scale(1).epsilon(1e-4));
  }
}

TEST_CASE("permutation consistency for elliptical stacks") {
  Rng rng(13);
  for (int rep = 0; rep < 10; ++rep) {
    Index n = 5;
    Vec t(n);
    for (Index i = 0; i < n; ++i) t[i] = 5.0 * rng.uniform();
    LayerStack stack;
    stack.copula = EllipticalLayer::student_t(0.3);
    stack.covariance = CovarianceLayer(noisy_se(1.0, 0.4, 0.25));
    stack.marginals.push_back(
        MarginalLayer(Warping::sinh_arcsinh(0.2, 1.3), LocationFn::constant(0.0), 1.1));
    Vec y = normal_vec(n, rng);
    double base = stack_nll(stack, t, y);
    std::vector<Index> perm = {4, 2, 0, 3, 1};
    Vec tp(n), yp(n);
    for (Index i = 0; i < n; ++i) {
      tp[i] = t[perm[i]];
      yp[i] = y[perm[i]];
    }
    CHECK(stack_nll(stack, tp, yp) == doctest::Approx(base).epsilon(0).scale(1).epsilon(1e-9));
  }
}

TEST_CASE("marginalization consistency by quadrature, with the swap-map negative control") {
  LayerStack stack;
  stack.copula = EllipticalLayer::student_t(0.25);
  stack.covariance = CovarianceLayer(Kernel::brownian(1.0));
  Vec t2(2), t1(1);
  t2 << 1.0, 4.0;  // distinct variances make the swap map inconsistent
  t1 << 1.0;

  auto density2 = [&](double y1, double y2) {
    Vec y(2);
    y << y1, y2;
    return std::exp(-stack_nll(stack, t2, y));
  };
  auto density1 = [&](double y1) {
    Vec y(1);
    y << y1;
    return std::exp(-stack_nll(stack, t1, y));
  };

  double worst = 0.0, worst_swap = 0.0;
  for (int k = 0; k < 10; ++k) {
    double y1 = -2.0 + 4.0 * k / 9.0;
    // integrate over y2 with a tangent substitution covering the real line
    auto integrand = [&](double u) {
      double c = 3.0;
      double y2 = c * std::tan(u);
      double jac = c / (std::cos(u) * std::cos(u));
      return density2(y1, y2) * jac;
    };
    auto integrand_swapped = [&](double u) {
      double c = 3.0;
      double y2 = c * std::tan(u);
      double jac = c / (std::cos(u) * std::cos(u));
      return density2(y2, y1) * jac;  // deliberately inconsistent swap map
    };
    double marginal = tp_test::adaptive_simpson(integrand, -kPi / 2 + 1e-9, kPi / 2 - 1e-9, 1e-10);
    double swapped =
        tp_test::adaptive_simpson(integrand_swapped, -kPi / 2 + 1e-9, kPi / 2 - 1e-9, 1e-10);
    worst = std::max(worst, std::abs(marginal - density1(y1)));
    worst_swap = std::max(worst_swap, std::abs(swapped - density1(y1)));
  }
  CHECK(worst < 1e-3);
  CHECK(worst_swap > 0.01);  // guards the harness itself
}

TEST_CASE("posterior sampling: noiseless interpolation at the data") {
  Rng rng(17);
  LayerStack stack;
  stack.covariance = CovarianceLayer(Kernel::squared_exponential(1.0, 0.7));
  stack.marginals.push_back(
      MarginalLayer(Warping::sinh_arcsinh(0.1, 1.2), LocationFn::constant(0.3), 1.2));
  Vec t = linspace(0.0, 2.0, 5);
  Vec x = normal_vec(5, rng);
  Vec y = marginal_forward(stack.marginals[0], t, cov_forward(*stack.covariance, t, x));
  auto set = stack_posterior_sample(stack, t, y, t, 200, 7);
  for (Index i = 0; i < set.samples.rows(); ++i) {
    CHECK((set.samples.row(i).transpose() - y).cwiseAbs().maxCoeff() < 1e-8);
  }
}

TEST_CASE("posterior sampling matches the closed-form GP posterior") {
  Rng rng(19);
  auto kernel = noisy_se(1.0, 0.5, 0.3);
  LayerStack stack;
  stack.covariance = CovarianceLayer(kernel);
  Vec t = linspace(0.0, 3.0, 6);
  Vec y = normal_vec(6, rng);
  Vec t_new = linspace(0.4, 2.7, 4);

  Mat ktt = gram(kernel, t, true);
  Mat kbt = gram(kernel, t_new, t, false);
  Mat kbb = gram(kernel, t_new, t_new, false);
  Vec mu = kbt * ktt.ldlt().solve(y);
  Mat cov = kbb - kbt * ktt.ldlt().solve(kbt.transpose());

  const int n_samples = 30000;
  auto set = stack_posterior_sample(stack, t, y, t_new, n_samples, 23);
  Vec emp_mean = set.samples.colwise().mean();
  Mat centered = set.samples.rowwise() - emp_mean.transpose();
  Mat emp_cov = centered.transpose() * centered / double(n_samples - 1);
  for (Index i = 0; i < t_new.size(); ++i) {
    double se = std::sqrt(cov(i, i) / n_samples);
    CHECK(std::abs(emp_mean[i] - mu[i]) < 3.5 * se);
    for (Index j = 0; j < t_new.size(); ++j) {
      double se_cov = std::sqrt((cov(i, i) * cov(j, j) + cov(i, j) * cov(i, j)) / n_samples);
      CHECK(std::abs(emp_cov(i, j) - cov(i, j)) < 4.0 * se_cov);
    }
  }
}

TEST_CASE("student-t posterior sampling: gaussian mean, inflated covariance") {
  Rng rng(23);
  const double nu_inv = 0.2, theta = 5.0;
  auto kernel = Kernel::squared_exponential(1.0, 0.5);
  LayerStack stack;
  stack.copula = EllipticalLayer::student_t(nu_inv);
  stack.covariance = CovarianceLayer(kernel);
  Vec t = linspace(0.0, 2.5, 5);
  Vec y = normal_vec(5, rng);
  Vec t_new(3);
  t_new << 0.3, 1.1, 2.2;

  Mat ktt = gram(kernel, t, true);
  Mat kbt = gram(kernel, t_new, t, false);
  Mat kbb = gram(kernel, t_new, t_new, false);
  Vec mu = kbt * ktt.ldlt().solve(y);
  Mat cond = kbb - kbt * ktt.ldlt().solve(kbt.transpose());
  // multivariate-t conditional: scale inflated by (theta + |x|^2)/(theta + n - 2)
  double quad = y.dot(ktt.ldlt().solve(y));
  Mat cov_t = (theta + quad) / (theta + 5.0 - 2.0) * cond;

  const int n_samples = 60000;
  auto set = stack_posterior_sample(stack, t, y, t_new, n_samples, 29);
  Vec emp_mean = set.samples.colwise().mean();
  Mat centered = set.samples.rowwise() - emp_mean.transpose();
  Mat emp_cov = centered.transpose() * centered / double(n_samples - 1);
  for (Index i = 0; i < t_new.size(); ++i) {
    // heavy tails inflate the standard error of the mean estimate
    double se = std::sqrt(cov_t(i, i) / n_samples);
    CHECK(std::abs(emp_mean[i] - mu[i]) < 4.0 * se);
    double se_cov = cov_t(i, i) * std::sqrt(2.0 / n_samples) *
                    std::sqrt((theta + 3.0 - 2.0) / (theta + 3.0 - 4.0));
    CHECK(std::abs(emp_cov(i, i) - cov_t(i, i)) < 5.0 * se_cov);
  }
}

TEST_CASE("archimedean stack posterior sampling stays on the copula") {
  Rng rng(29);
  LayerStack stack;
  stack.copula = ArchimedeanLayer::clayton(1.0);
  stack.marginals.push_back(MarginalLayer(Warping::log(), LocationFn::constant(0.0), 1.0));
  // simulate data from the stack prior
  const auto& arch = std::get<ArchimedeanLayer>(*stack.copula);
  Vec t = linspace(0.0, 1.0, 3);
  Vec y = marginal_forward(stack.marginals[0], t, arch.forward(normal_vec(3, rng)));
  auto set = stack_posterior_sample(stack, t, y, linspace(0.0, 1.0, 2), 4000, 31);
  CHECK(set.samples.rows() == 4000);
  // pushed through exp, all samples must stay positive
  CHECK(set.samples.minCoeff() > 0.0);
  // conditional marginals: u = psi(z) given the observations is uniform only
  // unconditionally; here check the draws' support and finiteness
  CHECK(set.samples.allFinite());
}

TEST_CASE("quantile table") {
  PosteriorSampleSet set;
  set.inputs = linspace(0.0, 1.0, 2);
  Rng rng(31);
  set.samples.resize(5000, 2);
  for (Index i = 0; i < set.samples.rows(); ++i) {
    set.samples(i, 0) = Dist1D::std_normal().sample(rng);
    set.samples(i, 1) = 7.0;  // constant column
  }
  Vec probs(3);
  probs << 0.025, 0.5, 0.975;
  auto table = stack_quantiles(set, probs);
  CHECK(table.quantiles(0, 1) == doctest::Approx(table.mean[0]).scale(1).epsilon(0.05));
  CHECK(table.quantiles(1, 0) == 7.0);
  CHECK(table.quantiles(1, 1) == 7.0);
  CHECK(table.quantiles(1, 2) == 7.0);

  PosteriorSampleSet tiny;
  tiny.inputs = set.inputs;
  tiny.samples = set.samples.topRows(50);
  CHECK_THROWS_AS(static_cast<void>(stack_quantiles(tiny, probs)), ValidationError);
}

TEST_CASE("credible band coverage on gaussian-simulated data") {
  Rng rng(37);
  auto kernel = noisy_se(1.0, 0.6, 0.2);
  LayerStack stack;
  stack.covariance = CovarianceLayer(kernel);
  Vec t_all = linspace(0.0, 4.0, 14);
  Vec t = t_all.head(8), t_new = t_all.tail(6);
  Mat full = gram(kernel, t_all, true);
  auto chol = cholesky_psd(full);
  Vec probs(2);
  probs << 0.025, 0.975;

  int inside = 0, total = 0;
  for (int rep = 0; rep < 150; ++rep) {
    Vec path = chol.lower * normal_vec(14, rng);
    auto set = stack_posterior_sample(stack, t, path.head(8), t_new, 400, 1000 + rep);
    auto table = stack_quantiles(set, probs);
    for (Index j = 0; j < 6; ++j) {
      bool in = path[8 + j] >= table.quantiles(j, 0) && path[8 + j] <= table.quantiles(j, 1);
      inside += in;
      ++total;
    }
  }
  double coverage = double(inside) / total;
  CHECK(coverage == doctest::Approx(0.95).scale(1).epsilon(0.03));
}

TEST_CASE("sparse stack: nll is finite and sampling runs through pseudo-data") {
  Rng rng(41);
  auto kernel = noisy_se(1.0, 0.5, 0.2);
  Vec t = linspace(0.0, 3.0, 9);
  Vec y = normal_vec(9, rng);
  Vec s = linspace(0.0, 3.0, 4);
  Vec z = normal_vec(4, rng);
  LayerStack stack;
  stack.covariance = CovarianceLayer(kernel, SparseConfig{s, z});
  double nll = stack_nll(stack, t, y);
  CHECK(std::isfinite(nll));
  auto set = stack_posterior_sample(stack, t, y, linspace(0.5, 2.5, 5), 500, 43);
  CHECK(set.samples.allFinite());
  // pseudo-data must stay below the data size
  Vec s_big = linspace(0.0, 3.0, 9);
  LayerStack bad;
  bad.covariance = CovarianceLayer(kernel, SparseConfig{s_big, normal_vec(9, rng)});
  CHECK_THROWS_AS(static_cast<void>(stack_nll(bad, t, y)), ValidationError);
}
