#include "doctest.h"

#include <cmath>
#include <sstream>
#include <string>
#include <vector>

#include "lmmix/emfit.hpp"
#include "lmmix/io.hpp"
#include "lmmix/rng.hpp"
#include "oracles.hpp"

using lmmix::BaseFamily;
using lmmix::Component;
using lmmix::DegenerateObservation;
using lmmix::EmConfig;
using lmmix::FitFailure;
using lmmix::FitReport;
using lmmix::Lambda;
using lmmix::Matrix;
using lmmix::MixtureModel;
using lmmix::classify;
using lmmix::component_mle;
using lmmix::fit;
using lmmix::initial_mixture;
using lmmix::loglik;
using lmmix::prune;
using lmmix::responsibilities;
using lmmix::update_proportions;

namespace {

std::vector<double> normal_sample(std::uint64_t seed, int n, double mean, double sd) {
  lmmix::Rng rng(seed);
  std::vector<double> xs;
  for (int i = 0; i < n; ++i) xs.push_back(mean + sd * rng.next_normal());
  return xs;
}

std::string serialize(const FitReport& report) {
  std::ostringstream out;
  lmmix::save_model(out, report.model, report.loglik_trace.back(), report.converged,
                    report.iterations);
  for (double v : report.loglik_trace) out << lmmix::format_double(v) << "\n";
  for (int a : report.assignments) out << a << ",";
  return out.str();
}

}  // namespace

TEST_CASE("responsibilities") {
  const BaseFamily norm = BaseFamily::normal(1.0);

  SUBCASE("identical components split evenly") {
    MixtureModel model;
    model.components.push_back({0.5, 0.0, norm, {}, 0});
    model.components.push_back({0.5, 1e-9, norm, {}, 1});  // effectively identical
    const Matrix w = responsibilities(model, {-1.0, 0.0, 2.0});
    for (const auto& row : w) {
      CHECK(row[0] == doctest::Approx(0.5).epsilon(1e-6));
      CHECK(row[0] + row[1] == doctest::Approx(1.0).epsilon(1e-12));
    }
  }
  SUBCASE("single component takes all the mass") {
    const MixtureModel model = initial_mixture(norm, {0.0});
    const Matrix w = responsibilities(model, {-2.0, 0.0, 3.0});
    for (const auto& row : w) CHECK(row[0] == 1.0);
  }
  SUBCASE("well-separated components: ratio is the density ratio e^-50") {
    const MixtureModel model = initial_mixture(norm, {0.0, 10.0});
    const Matrix w = responsibilities(model, {0.0});
    CHECK(w[0][0] + w[0][1] == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(w[0][1] / w[0][0] == doctest::Approx(std::exp(-50.0)).epsilon(1e-9));
  }
  SUBCASE("zero density everywhere raises naming the observation") {
    // a boundary lambda zeroes the single component's density at the
    // minimizing sample point
    const BaseFamily bin = BaseFamily::binomial(10);
    const double t = lmmix::max_feasible_step(bin, 5.0, {}, {0.0, 0.0, 0.0, 1.0});
    const Lambda boundary{0.0, 0.0, 0.0, t};
    const auto feas = lmmix::check_feasibility(bin, 5.0, boundary);
    REQUIRE(feas.argmin.has_value());
    MixtureModel model;
    model.components.push_back({1.0, 5.0, bin, boundary, 0});
    bool threw = false;
    try {
      responsibilities(model, {*feas.argmin});
    } catch (const DegenerateObservation& e) {
      threw = true;
      CHECK(std::string(e.what()).find("observation 0") != std::string::npos);
    }
    CHECK(threw);
  }
}

TEST_CASE("update_proportions arithmetic") {
  CHECK(update_proportions({{0.5, 0.5}, {0.5, 0.5}}) == std::vector<double>{0.5, 0.5});
  const std::vector<double> rho =
      update_proportions({{1.0, 0.0}, {1.0, 0.0}, {1.0, 0.0}, {0.0, 1.0}});
  CHECK(rho[0] == doctest::Approx(0.75));
  CHECK(rho[1] == doctest::Approx(0.25));
}

TEST_CASE("prune") {
  const BaseFamily norm = BaseFamily::normal(1.0);
  const MixtureModel model = initial_mixture(norm, {0.0, 5.0});

  SUBCASE("below-threshold component is removed and rho renormalized") {
    const auto [survivors, removed] = prune(model, {0.9, 0.1}, 0.15);
    REQUIRE(survivors.components.size() == 1);
    CHECK(survivors.components[0].rho == doctest::Approx(1.0));
    CHECK(survivors.components[0].mu == 0.0);
    REQUIRE(removed.size() == 1);
    CHECK(removed[0] == 1);
  }
  SUBCASE("no component below gamma leaves the model unchanged") {
    const auto [survivors, removed] = prune(model, {0.5, 0.5}, 0.15);
    CHECK(survivors.components.size() == 2);
    CHECK(removed.empty());
  }
  SUBCASE("pruning everything is a fit failure") {
    CHECK_THROWS_AS(prune(model, {0.5, 0.5}, 0.6), FitFailure);
  }
  SUBCASE("gamma outside (0,1) is rejected") {
    CHECK_THROWS_AS(prune(model, {0.5, 0.5}, 0.0), std::invalid_argument);
    CHECK_THROWS_AS(prune(model, {0.5, 0.5}, 1.0), std::invalid_argument);
  }
}

TEST_CASE("classify") {
  CHECK(classify({{0.6, 0.4}}) == std::vector<int>{0});
  CHECK(classify({{0.4, 0.6}}) == std::vector<int>{1});
  SUBCASE("ties break to the smallest index") {
    CHECK(classify({{0.5, 0.5}}) == std::vector<int>{0});
    CHECK(classify({{0.2, 0.4, 0.4}}) == std::vector<int>{1});
  }
  SUBCASE("separated clusters recover labels away from the midpoint") {
    const BaseFamily norm = BaseFamily::normal(1.0);
    MixtureModel model = initial_mixture(norm, {-3.0, 3.0});
    std::vector<double> data;
    std::vector<int> truth;
    lmmix::Rng rng(606);
    for (int i = 0; i < 100; ++i) {
      const bool second = i >= 30;
      data.push_back((second ? 3.0 : -3.0) + rng.next_normal());
      truth.push_back(second ? 1 : 0);
    }
    const std::vector<int> got = classify(responsibilities(model, data));
    for (std::size_t i = 0; i < data.size(); ++i)
      if (std::fabs(data[i]) > 1.0) CHECK(got[i] == truth[i]);
  }
}

TEST_CASE("component_mle") {
  const BaseFamily norm = BaseFamily::normal(1.0);

  SUBCASE("truth at the origin for base-family data") {
    const std::vector<double> data = normal_sample(42, 400, 0.0, 1.0);
    const Lambda fitted = component_mle(norm, 0.0, data, {});
    double size = 0.0;
    for (double l : fitted) size = std::max(size, std::fabs(l));
    CHECK(size < 0.5);
    CHECK(lmmix::detail::component_loglik(norm, 0.0, data, fitted) >=
          lmmix::detail::component_loglik(norm, 0.0, data, {}));
  }
  SUBCASE("single observation pushes toward the boundary but stays feasible") {
    const std::vector<double> data = {0.0};
    const Lambda fitted = component_mle(norm, 0.0, data, {});
    const auto rep = lmmix::check_feasibility(norm, 0.0, fitted);
    CHECK(rep.status != lmmix::FeasibilityStatus::kInfeasible);
    CHECK(rep.min_value >= -lmmix::kBoundaryBand);
    CHECK(lmmix::detail::component_loglik(norm, 0.0, data, fitted) >=
          lmmix::detail::component_loglik(norm, 0.0, data, {}));
    // a random search over the feasible set cannot do better
    lmmix::Rng rng(11);
    const double best = lmmix::detail::component_loglik(norm, 0.0, data, fitted);
    for (int trial = 0; trial < 10000; ++trial) {
      const Lambda probe = oracle::random_feasible_lambda(norm, 0.0, rng);
      CHECK(lmmix::detail::component_loglik(norm, 0.0, data, probe) <= best + 1e-6);
    }
  }
  SUBCASE("log-likelihood is quasi-concave along feasible segments") {
    const std::vector<double> data = normal_sample(4242, 60, 0.3, 1.1);
    lmmix::Rng rng(55);
    for (int trial = 0; trial < 20; ++trial) {
      const Lambda a = oracle::random_feasible_lambda(norm, 0.0, rng);
      const Lambda b = oracle::random_feasible_lambda(norm, 0.0, rng);
      Lambda mid{};
      for (int j = 0; j < 4; ++j) mid[j] = 0.5 * (a[j] + b[j]);
      const double la = lmmix::detail::component_loglik(norm, 0.0, data, a);
      const double lb = lmmix::detail::component_loglik(norm, 0.0, data, b);
      const double lm = lmmix::detail::component_loglik(norm, 0.0, data, mid);
      CHECK(lm >= std::min(la, lb) - 1e-9);
    }
  }
  SUBCASE("boundary init is pulled inside and still ascends") {
    const std::vector<double> data = normal_sample(7, 50, 0.0, 1.0);
    const Lambda boundary{0.0, 0.0, 0.0, 1.0 / 6.0};
    const Lambda fitted = component_mle(norm, 0.0, data, boundary);
    CHECK(lmmix::check_feasibility(norm, 0.0, fitted).status !=
          lmmix::FeasibilityStatus::kInfeasible);
  }
  SUBCASE("infeasible init is rejected") {
    CHECK_THROWS_AS(component_mle(norm, 0.0, {0.0}, {0.0, 0.0, 0.0, 0.2}),
                    std::invalid_argument);
  }
  SUBCASE("empty data subset is rejected") {
    CHECK_THROWS_AS(component_mle(norm, 0.0, {}, {}), std::invalid_argument);
  }
  SUBCASE("binomial subset") {
    const BaseFamily bin = BaseFamily::binomial(12);
    const std::vector<double> data = {4.0, 5.0, 5.0, 6.0, 7.0, 6.0, 5.0};
    const Lambda fitted = component_mle(bin, 6.0, data, {});
    CHECK(lmmix::check_feasibility(bin, 6.0, fitted).status !=
          lmmix::FeasibilityStatus::kInfeasible);
    CHECK(lmmix::detail::component_loglik(bin, 6.0, data, fitted) >=
          lmmix::detail::component_loglik(bin, 6.0, data, {}));
  }
  SUBCASE("deterministic") {
    const std::vector<double> data = normal_sample(99, 80, 0.1, 1.0);
    const Lambda a = component_mle(norm, 0.0, data, {});
    const Lambda b = component_mle(norm, 0.0, data, {});
    for (int j = 0; j < 4; ++j) CHECK(a[j] == b[j]);
  }
}

TEST_CASE("loglik identities") {
  const BaseFamily norm = BaseFamily::normal(1.0);
  const std::vector<double> data = normal_sample(3, 40, 0.5, 1.2);

  SUBCASE("single lambda=0 component equals the base log-likelihood") {
    const MixtureModel model = initial_mixture(norm, {0.5});
    double base = 0.0;
    for (double x : data) base += std::log(lmmix::density(norm, x, 0.5));
    CHECK(loglik(model, data) == doctest::Approx(base).epsilon(1e-13));
  }
  SUBCASE("component order does not matter") {
    MixtureModel a;
    a.components.push_back({0.3, -1.0, norm, {0.05, 0.0, 0.0, 0.01}, 0});
    a.components.push_back({0.7, 2.0, norm, {-0.1, 0.02, 0.0, 0.0}, 1});
    MixtureModel b;
    b.components.push_back({0.7, 2.0, norm, {-0.1, 0.02, 0.0, 0.0}, 1});
    b.components.push_back({0.3, -1.0, norm, {0.05, 0.0, 0.0, 0.01}, 0});
    // b violates the increasing-mean invariant, so compute directly
    const lmmix::MixtureDensity da(a);
    double la = 0.0, lb = 0.0;
    for (double x : data) la += std::log(da(x));
    for (double x : data) {
      double h = 0.0;
      for (const Component& c : b.components)
        h += c.rho * lmmix::lmm_density(lmmix::Lmm(c.family, c.mu, c.lambda), x);
      lb += std::log(h);
    }
    CHECK(la == doctest::Approx(lb).epsilon(1e-13));
  }
  SUBCASE("splitting a component in half changes nothing") {
    MixtureModel single;
    single.components.push_back({1.0, 0.5, norm, {0.1, 0.0, 0.0, 0.0}, 0});
    MixtureModel split;
    split.components.push_back({0.5, 0.5, norm, {0.1, 0.0, 0.0, 0.0}, 0});
    split.components.push_back({0.5, 0.5 + 1e-13, norm, {0.1, 0.0, 0.0, 0.0}, 1});
    CHECK(loglik(single, data) == doctest::Approx(loglik(split, data)).epsilon(1e-10));
  }
}

TEST_CASE("fit") {
  const BaseFamily norm = BaseFamily::normal(1.0);

  SUBCASE("single-component grid on base-family data") {
    const std::vector<double> data = normal_sample(17, 300, 1.0, 1.0);
    const FitReport report = fit(data, initial_mixture(norm, {1.0}));
    CHECK(report.order == 1);
    CHECK(report.converged);
    double size = 0.0;
    for (double l : report.model.components[0].lambda) size = std::max(size, std::fabs(l));
    CHECK(size < 0.5);
  }
  SUBCASE("two separated clusters keep two components") {
    std::vector<double> data = normal_sample(5, 90, -3.0, 1.0);
    const std::vector<double> upper = normal_sample(6, 210, 3.0, 1.0);
    data.insert(data.end(), upper.begin(), upper.end());
    const FitReport report = fit(data, initial_mixture(norm, {-3.0, 3.0}));
    REQUIRE(report.order == 2);
    CHECK(report.converged);
    CHECK(report.model.components[0].rho == doctest::Approx(0.3).epsilon(0.2));
    CHECK(report.model.components[1].rho == doctest::Approx(0.7).epsilon(0.1));
    CHECK(report.loglik_trace.back() >= report.loglik_trace.front());
    for (const Component& c : report.model.components)
      CHECK(lmmix::check_feasibility(c.family, c.mu, c.lambda).status !=
            lmmix::FeasibilityStatus::kInfeasible);
  }
  SUBCASE("far-away anchors are pruned with history") {
    const std::vector<double> data = normal_sample(8, 200, 0.0, 1.0);
    const FitReport report =
        fit(data, initial_mixture(norm, {-8.0, 0.0, 8.0}), {0.15, 1e-8, 500, {}, 0});
    CHECK(report.order == 1);
    CHECK(report.model.components[0].origin_index == 1);
    REQUIRE(!report.pruning_history.empty());
    CHECK(report.pruning_history[0].iteration == 1);
    REQUIRE(report.pruning_history[0].origin_indices.size() == 2);
    CHECK(report.pruning_history[0].origin_indices[0] == 0);
    CHECK(report.pruning_history[0].origin_indices[1] == 2);
  }
  SUBCASE("assignments partition the data") {
    const std::vector<double> data = normal_sample(9, 120, 0.0, 2.0);
    const FitReport report = fit(data, initial_mixture(norm, {-2.0, 2.0}));
    REQUIRE(report.assignments.size() == data.size());
    for (int a : report.assignments) {
      CHECK(a >= 0);
      CHECK(std::size_t(a) < report.order);
    }
  }
  SUBCASE("deterministic: identical runs are bit-identical") {
    std::vector<double> data = normal_sample(10, 150, -1.0, 1.0);
    const std::vector<double> upper = normal_sample(11, 150, 2.5, 1.0);
    data.insert(data.end(), upper.begin(), upper.end());
    const MixtureModel init = initial_mixture(norm, {-1.0, 2.5});
    const FitReport a = fit(data, init);
    const FitReport b = fit(data, init);
    CHECK(serialize(a) == serialize(b));
  }
  SUBCASE("input validation") {
    CHECK_THROWS_AS(fit({}, initial_mixture(norm, {0.0})), std::invalid_argument);
    EmConfig bad;
    bad.gamma = 1.5;
    CHECK_THROWS_AS(fit({0.0}, initial_mixture(norm, {0.0}), bad), std::invalid_argument);
  }
}

TEST_CASE("fit on the acidity fixture") {
  const std::vector<double> data =
      lmmix::read_observations(LMMIX_FIXTURE_DIR "/acidity.txt");
  REQUIRE(data.size() == 155);
  const BaseFamily norm = BaseFamily::normal(0.5);
  const std::vector<double> anchors = {3.6, 4.2, 4.8, 5.4, 6.0, 6.6, 7.0};

  SUBCASE("order decreases as the pruning threshold rises") {
    EmConfig config;
    config.gamma = 0.06;
    const FitReport fine = fit(data, initial_mixture(norm, anchors), config);
    config.gamma = 0.10;
    const FitReport mid = fit(data, initial_mixture(norm, anchors), config);
    config.gamma = 0.15;
    const FitReport coarse = fit(data, initial_mixture(norm, anchors), config);
    CHECK(fine.order == 4);
    CHECK(mid.order == 3);
    CHECK(coarse.order == 2);
    CHECK(fine.converged);
    CHECK(mid.converged);
    CHECK(coarse.converged);
  }
  SUBCASE("order is stable under a small grid perturbation") {
    EmConfig config;
    config.gamma = 0.15;
    const FitReport base = fit(data, initial_mixture(norm, anchors), config);
    const FitReport moved =
        fit(data, initial_mixture(norm, {3.6, 4.2, 4.8, 5.4, 6.0, 6.4, 7.0}), config);
    CHECK(moved.order == base.order);
  }
}
