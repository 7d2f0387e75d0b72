#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <limits>
#include <stdexcept>

#include "piv/nelder_mead.hpp"

using namespace piv;

namespace {

double rosenbrock(const Eigen::VectorXd& x)
{
    return 100.0 * std::pow(x[1] - x[0] * x[0], 2) + std::pow(1.0 - x[0], 2);
}

}  // namespace

TEST_CASE("Rosenbrock from the classic start")
{
    NelderMeadOptions opts;
    opts.max_iter = 5000;
    opts.initial_step = Eigen::Vector2d(0.5, 0.5);
    const auto r = nelder_mead(rosenbrock, Eigen::Vector2d(-1.2, 1.0), opts);
    CHECK(r.converged);
    CHECK(r.x[0] == doctest::Approx(1.0).epsilon(1e-6));
    CHECK(r.x[1] == doctest::Approx(1.0).epsilon(1e-6));
    CHECK(r.f < 1e-12);
    CHECK(r.iterations == r.best_history.size());
    for (std::size_t i = 1; i < r.best_history.size(); ++i) {
        CHECK(r.best_history[i] <= r.best_history[i - 1]);
    }
}

TEST_CASE("quadratic bowl in four dimensions")
{
    const Eigen::Vector4d target(1.0, -2.0, 0.5, 3.0);
    auto f = [&](const Eigen::VectorXd& x) { return (x - target).squaredNorm(); };
    const auto r = nelder_mead(f, Eigen::Vector4d::Zero());
    CHECK(r.converged);
    CHECK((r.x - target).cwiseAbs().maxCoeff() < 1e-4);
}

TEST_CASE("deterministic")
{
    const auto a = nelder_mead(rosenbrock, Eigen::Vector2d(0.0, 0.0));
    const auto b = nelder_mead(rosenbrock, Eigen::Vector2d(0.0, 0.0));
    CHECK(a.x == b.x);
    CHECK(a.evaluations == b.evaluations);
}

TEST_CASE("non-finite values act as a barrier")
{
    auto f = [](const Eigen::VectorXd& x) {
        if (x[0] < 0.5) {
            return std::numeric_limits<double>::quiet_NaN();
        }
        return (x[0] - 0.25) * (x[0] - 0.25);
    };
    Eigen::VectorXd x0(1);
    x0 << 2.0;
    const auto r = nelder_mead(f, x0);
    CHECK(std::isfinite(r.f));
    CHECK(r.x[0] >= 0.5);
    CHECK(r.x[0] == doctest::Approx(0.5).epsilon(1e-3));
}

TEST_CASE("iteration cap")
{
    NelderMeadOptions opts;
    opts.max_iter = 5;
    const auto r = nelder_mead(rosenbrock, Eigen::Vector2d(-1.2, 1.0), opts);
    CHECK_FALSE(r.converged);
    CHECK(r.iterations == 5);
}

TEST_CASE("argument checks")
{
    CHECK_THROWS_AS(nelder_mead(rosenbrock, Eigen::VectorXd()), std::invalid_argument);
    NelderMeadOptions opts;
    opts.initial_step = Eigen::Vector3d::Ones();
    CHECK_THROWS_AS(nelder_mead(rosenbrock, Eigen::Vector2d::Zero(), opts), std::invalid_argument);
    auto inf = [](const Eigen::VectorXd&) { return std::numeric_limits<double>::infinity(); };
    CHECK_THROWS_AS(nelder_mead(inf, Eigen::Vector2d::Zero()), std::invalid_argument);
}

TEST_CASE("one-dimensional parabola from zero")
{
    const auto r = nelder_mead([](const Eigen::VectorXd& x) { return (x[0] - 3.0) * (x[0] - 3.0); },
                               Eigen::VectorXd::Zero(1));
    CHECK(std::abs(r.x[0] - 3.0) < 1e-6);
}

TEST_CASE("round bowl from (1, 1)")
{
    const auto r = nelder_mead([](const Eigen::VectorXd& x) { return x.squaredNorm(); }, Eigen::Vector2d(1.0, 1.0));
    CHECK(r.f < 1e-10);
}

TEST_CASE("Rosenbrock with default options")
{
    const auto r = nelder_mead(rosenbrock, Eigen::Vector2d(-1.2, 1.0));
    CHECK(r.iterations <= 2000);
    CHECK(r.f < 1e-6);
}
