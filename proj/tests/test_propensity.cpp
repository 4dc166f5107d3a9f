#include <cmath>
#include <random>
#include <vector>

#include <gtest/gtest.h>

#include "reference_formulas.hpp"
#include "tsprop/oracle.hpp"
#include "tsprop/propensity.hpp"

using namespace tsprop;

namespace {

using Pairs = std::vector<std::pair<long, long>>;

BeliefSet random_normal_set(Rng& rng, int n) {
    std::normal_distribution<double> nd;
    std::uniform_real_distribution<double> uv(0.2, 2.0);
    std::vector<std::pair<double, double>> p;
    for (int i = 0; i < n; ++i) p.emplace_back(0.7 * nd(rng), uv(rng));
    return BeliefSet::normal(p);
}

Pairs random_pairs(Rng& rng, int n, long max_param) {
    std::uniform_int_distribution<long> k(1, max_param);
    Pairs p;
    for (int i = 0; i < n; ++i) p.emplace_back(k(rng), k(rng));
    return p;
}

}  // namespace

// ---------------------------------------------------------------------------
// Gaussian

TEST(GaussianPropensity, PairwiseClosedForm) {
    const auto set = BeliefSet::normal({{1.0, 1.0}, {0.0, 1.0}});
    EXPECT_NEAR(gaussian_propensity(set, 0).value, std_normal_cdf(1.0 / std::sqrt(2.0)), 1e-9);
    EXPECT_NEAR(gaussian_propensity(set, 0).value, 0.760250, 1e-6);
    Rng rng = make_rng(1);
    std::normal_distribution<double> nd;
    std::uniform_real_distribution<double> uv(0.1, 3.0);
    for (int i = 0; i < 50; ++i) {
        const double m1 = nd(rng), m2 = nd(rng), v1 = uv(rng), v2 = uv(rng);
        const auto s = BeliefSet::normal({{m1, v1}, {m2, v2}});
        EXPECT_NEAR(gaussian_propensity(s, 0).value, ref::normal_pairwise(m1, v1, m2, v2), 1e-6);
        EXPECT_NEAR(gaussian_propensity(s, 1).value, ref::normal_pairwise(m2, v2, m1, v1), 1e-6);
    }
}

TEST(GaussianPropensity, Exchangeable) {
    const auto set = BeliefSet::normal(std::vector<std::pair<double, double>>(5, {0.3, 1.7}));
    for (std::size_t t = 0; t < 5; ++t) EXPECT_NEAR(gaussian_propensity(set, t).value, 0.2, 1e-5);
}

TEST(GaussianPropensity, SeparatedSupports) {
    const auto set = BeliefSet::normal({{10.0, 0.01}, {0.0, 0.01}, {0.0, 0.01}});
    EXPECT_NEAR(gaussian_propensity(set, 0).value, 1.0, 1e-9);
    EXPECT_NEAR(gaussian_propensity(set, 1).value, 0.0, 1e-9);
}

TEST(GaussianPropensity, MatchesMonteCarlo) {
    Rng rng = make_rng(2);
    for (int rep = 0; rep < 12; ++rep) {
        const int n = 2 + rep % 7;
        const BeliefSet set = random_normal_set(rng, n);
        const McEstimate mc = mc_propensities(set, 1000000, derive_seed(2, "mc", rep));
        for (int t = 0; t < n; ++t) {
            const ProbEstimate e = gaussian_propensity(set, t);
            EXPECT_NEAR(e.value, mc.probs[t], 4.0 * mc.std_err[t] + e.abs_err) << rep << " " << t;
        }
    }
}

TEST(GaussianPropensity, SimplexWithinErrorBudget) {
    Rng rng = make_rng(3);
    for (int rep = 0; rep < 30; ++rep) {
        const int n = 2 + rep % 9;
        const PropensityVector v = propensities(random_normal_set(rng, n));
        EXPECT_EQ(v.method, PropensityMethod::GaussianMvn);
        EXPECT_NEAR(v.sum(), 1.0, n * v.abs_err + 1e-9);
        for (double p : v.probs) EXPECT_GE(p, 0.0);
    }
}

TEST(GaussianPropensity, WrongKindOrTarget) {
    EXPECT_THROW(gaussian_propensity(BeliefSet::beta({{1, 1}, {1, 1}}), 0), DomainError);
    EXPECT_THROW(gaussian_propensity(BeliefSet::normal({{0, 1}, {0, 1}}), 2), DomainError);
}

TEST(LognormalPropensity, BitIdenticalToGaussian) {
    Rng rng = make_rng(4);
    std::normal_distribution<double> nd;
    for (int rep = 0; rep < 20; ++rep) {
        const int n = 2 + rep % 6;
        std::vector<std::pair<double, double>> p;
        for (int i = 0; i < n; ++i) p.emplace_back(nd(rng), 0.1 + std::abs(nd(rng)));
        const auto g = BeliefSet::normal(p);
        const auto l = BeliefSet::lognormal(p);
        MvnOptions o;
        o.seed = 1000 + rep;
        for (int t = 0; t < n; ++t) {
            const auto a = gaussian_propensity(g, t, o);
            const auto b = lognormal_propensity(l, t, o);
            EXPECT_EQ(a.value, b.value);
            EXPECT_EQ(a.abs_err, b.abs_err);
        }
    }
}

TEST(LognormalPropensity, Examples) {
    EXPECT_NEAR(lognormal_propensity(BeliefSet::lognormal({{0, 1}, {0, 4}}), 0).value, 0.5, 1e-9);
    const auto three = BeliefSet::lognormal({{0.2, 0.5}, {0.2, 0.5}, {0.2, 0.5}});
    for (int t = 0; t < 3; ++t) EXPECT_NEAR(lognormal_propensity(three, t).value, 1.0 / 3.0, 1e-5);
}

// ---------------------------------------------------------------------------
// Joint Gaussian

TEST(JointPropensity, DiagonalMatchesMarginal) {
    Rng rng = make_rng(5);
    for (int rep = 0; rep < 10; ++rep) {
        const int n = 2 + rep % 5;
        const BeliefSet marg = random_normal_set(rng, n);
        const BeliefSet joint(marg.beliefs(), Matrix(marg.sigma2s().asDiagonal()));
        for (int t = 0; t < n; ++t) {
            const auto a = gaussian_propensity(marg, t);
            const auto b = gaussian_propensity_joint(joint, t);
            EXPECT_NEAR(a.value, b.value, 2 * (a.abs_err + b.abs_err) + 1e-12);
        }
    }
}

TEST(JointPropensity, DuplicateActionsSplitMass) {
    // Actions 1 and 2 share a feature vector; merged they behave like one
    // action, so each gets half of the merged mass.
    Vector mean(2);
    mean << 0.3, -0.2;
    Matrix f(3, 2);
    f << 1.0, 0.0, 0.5, 1.0, 0.5, 1.0;
    const LinearGaussianPosterior post(mean, Matrix::Identity(2, 2), f);
    const BeliefSet set = posterior_to_outcome(post);
    Matrix f2(2, 2);
    f2 << 1.0, 0.0, 0.5, 1.0;
    const BeliefSet merged = posterior_to_outcome(LinearGaussianPosterior(mean, Matrix::Identity(2, 2), f2));
    const auto a0 = gaussian_propensity_joint(set, 0);
    const auto a1 = gaussian_propensity_joint(set, 1);
    const auto a2 = gaussian_propensity_joint(set, 2);
    const auto merged1 = gaussian_propensity_joint(merged, 1);
    EXPECT_NEAR(a1.value, 0.5 * merged1.value, 1e-12);
    EXPECT_EQ(a1.value, a2.value);
    EXPECT_NEAR(a0.value + a1.value + a2.value, 1.0, 1e-9);
}

TEST(JointPropensity, AllIdenticalFeaturesUniform) {
    Vector mean = Vector::Constant(3, 0.4);
    Matrix f = Matrix::Constant(4, 3, 1.0);
    const BeliefSet set = posterior_to_outcome(LinearGaussianPosterior(mean, Matrix::Identity(3, 3), f));
    for (int t = 0; t < 4; ++t) EXPECT_DOUBLE_EQ(gaussian_propensity_joint(set, t).value, 0.25);
}

TEST(JointPropensity, MatchesParameterSampling) {
    Rng rng = make_rng(6);
    std::normal_distribution<double> nd;
    for (int rep = 0; rep < 5; ++rep) {
        const int d = 6;
        const int n = 4;
        Matrix a(d, d), f(n, d);
        Vector mean(d);
        for (int i = 0; i < d; ++i) {
            mean[i] = 0.3 * nd(rng);
            for (int j = 0; j < d; ++j) a(i, j) = nd(rng);
        }
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < d; ++j) f(i, j) = nd(rng);
        const LinearGaussianPosterior post(mean, a * a.transpose() / d, f);
        const BeliefSet set = posterior_to_outcome(post);
        const McEstimate mc = mc_propensities_param(post, 1000000, derive_seed(6, "p", rep));
        double total = 0.0;
        for (int t = 0; t < n; ++t) {
            const auto e = gaussian_propensity_joint(set, t);
            total += e.value;
            EXPECT_NEAR(e.value, mc.probs[t], 4.0 * mc.std_err[t] + e.abs_err);
        }
        EXPECT_NEAR(total, 1.0, 4e-5);
    }
}

TEST(JointPropensity, RequiresJointCov) {
    EXPECT_THROW(gaussian_propensity_joint(BeliefSet::normal({{0, 1}, {0, 1}}), 0), DomainError);
}

TEST(JointPropensity, DispatchPrefersJoint) {
    Vector mean(2);
    mean << 0.1, 0.2;
    Matrix f(3, 2);
    f << 1, 0, 0, 1, 1, 1;
    const BeliefSet set = posterior_to_outcome(LinearGaussianPosterior(mean, Matrix::Identity(2, 2), f));
    EXPECT_EQ(propensities(set).method, PropensityMethod::GaussianJoint);
    PropensityOptions o;
    o.gaussian_route = GaussianRoute::Mvn;
    EXPECT_EQ(propensities(set, o).method, PropensityMethod::GaussianMvn);
}

// ---------------------------------------------------------------------------
// Beta

TEST(BetaPairwise, ClosedForms) {
    EXPECT_NEAR(beta_pairwise(1, 1, 1, 1), 0.5, 1e-12);
    EXPECT_NEAR(beta_pairwise(2, 1, 1, 1), 2.0 / 3.0, 1e-12);
    EXPECT_THROW(beta_pairwise(0, 1, 1, 1), DomainError);
}

TEST(BetaPairwise, ComplementSymmetry) {
    Rng rng = make_rng(7);
    std::uniform_int_distribution<long> k(1, 40);
    for (int i = 0; i < 300; ++i) {
        const long a = k(rng), b = k(rng), c = k(rng), d = k(rng);
        EXPECT_NEAR(beta_pairwise(a, b, c, d) + beta_pairwise(c, d, a, b), 1.0, 1e-12);
    }
}

TEST(BetaPairwise, MatchesIntegral) {
    Rng rng = make_rng(8);
    std::uniform_int_distribution<long> k(1, 25);
    for (int i = 0; i < 40; ++i) {
        const long a = k(rng), b = k(rng), c = k(rng), d = k(rng);
        EXPECT_NEAR(beta_pairwise(a, b, c, d), ref::beta_pairwise_integral(a, b, c, d), 1e-9)
            << a << " " << b << " " << c << " " << d;
    }
}

TEST(BetaPmin, Examples) {
    const auto u3 = BeliefSet::beta({{1, 1}, {1, 1}, {1, 1}});
    EXPECT_NEAR(beta_pmin(u3, 0), 1.0 / 3.0, 1e-12);
    const auto two = BeliefSet::beta({{3, 5}, {4, 2}});
    EXPECT_NEAR(beta_pmin(two, 0), 1.0 - beta_pairwise(3, 5, 4, 2), 1e-12);
    const auto s = BeliefSet::beta({{1, 1}, {2, 2}, {3, 1}});
    EXPECT_NEAR(beta_pmin(s, 0), ref::pmin_nested({{1, 1}, {2, 2}, {3, 1}}), 1e-12);
}

TEST(BetaPmin, MatchesMonteCarloMinimum) {
    // Negate-and-argmax: the minimum of Beta(a, b) draws is the maximum of
    // Beta(b, a) draws.
    const auto swapped = BeliefSet::beta({{1, 1}, {2, 2}, {1, 3}});
    const McEstimate mc = mc_propensities(swapped, 1000000, 10);
    EXPECT_NEAR(beta_pmin(BeliefSet::beta({{1, 1}, {2, 2}, {3, 1}}), 0), mc.probs[0],
                4 * mc.std_err[0]);
}

TEST(BetaPmin, DpMatchesNestedSum) {
    Rng rng = make_rng(9);
    for (int i = 0; i < 100; ++i) {
        const int n = 2 + i % 3;
        const Pairs p = random_pairs(rng, n, 8);
        EXPECT_NEAR(detail::beta_pmin_dp(p), ref::pmin_nested(p), 1e-10);
    }
}

TEST(BetaPmaxDirect, Examples) {
    const auto s = BeliefSet::beta({{2, 1}, {1, 1}});
    EXPECT_NEAR(beta_pmax_direct(s, 0), 2.0 / 3.0, 1e-12);
    EXPECT_NEAR(beta_pmax_direct(s, 0), beta_pairwise(2, 1, 1, 1), 1e-12);
    const auto four = BeliefSet::beta({{3, 4}, {3, 4}, {3, 4}, {3, 4}});
    for (int t = 0; t < 4; ++t) EXPECT_NEAR(beta_pmax_direct(four, t), 0.25, 1e-12);
}

TEST(BetaPmaxDirect, ThreeActionSimplexAndMonteCarlo) {
    const auto s = BeliefSet::beta({{5, 3}, {2, 4}, {6, 6}});
    const McEstimate mc = mc_propensities(s, 1000000, 11);
    double total = 0.0;
    for (int t = 0; t < 3; ++t) {
        const double v = beta_pmax_direct(s, t);
        total += v;
        EXPECT_NEAR(v, mc.probs[t], 4 * mc.std_err[t]);
        EXPECT_NEAR(v, ref::beta_argmax_integral({{5, 3}, {2, 4}, {6, 6}}, t), 1e-9);
    }
    EXPECT_NEAR(total, 1.0, 1e-10);
}

TEST(BetaPmaxInclExcl, Examples) {
    const auto two = BeliefSet::beta({{4, 7}, {2, 3}});
    EXPECT_NEAR(beta_pmax_inclexcl(two, 0), beta_pairwise(4, 7, 2, 3), 1e-12);
    const auto s = BeliefSet::beta({{1, 1}, {2, 2}, {3, 1}});
    for (int t = 0; t < 3; ++t) {
        EXPECT_NEAR(beta_pmax_inclexcl(s, t), beta_pmax_direct(s, t), 1e-10);
    }
    const auto u3 = BeliefSet::beta({{1, 1}, {1, 1}, {1, 1}});
    EXPECT_NEAR(beta_pmax_inclexcl(u3, 2), 1.0 / 3.0, 1e-12);
}

TEST(BetaPmaxInclExcl, SubsetGuard) {
    const auto big = BeliefSet::beta(Pairs(21, {1, 1}));
    EXPECT_THROW(beta_pmax_inclexcl(big, 0), SizeError);
    EXPECT_NO_THROW(beta_pmax_direct(big, 0));
    EXPECT_NEAR(beta_pmax_direct(big, 0), 1.0 / 21.0, 1e-12);
}

TEST(BetaRoutes, AgreeOnRandomInstances) {
    Rng rng = make_rng(12);
    for (int i = 0; i < 200; ++i) {
        const int n = 2 + i % 4;
        const auto set = BeliefSet::beta(random_pairs(rng, n, 15));
        for (int t = 0; t < n; ++t) {
            EXPECT_NEAR(beta_pmax_direct(set, t), beta_pmax_inclexcl(set, t), 1e-9);
        }
    }
}

TEST(BetaRoutes, StochasticDominance) {
    Rng rng = make_rng(13);
    for (int i = 0; i < 100; ++i) {
        Pairs p = random_pairs(rng, 2 + i % 4, 12);
        const double before = beta_pmax_direct(BeliefSet::beta(p), 0);
        p[0].first += 1;
        EXPECT_GE(beta_pmax_direct(BeliefSet::beta(p), 0), before - 1e-15);
    }
}

TEST(BetaPropensities, AutoRouteAndExamples) {
    const auto u5 = BeliefSet::beta(Pairs(5, {1, 1}));
    const auto v = beta_propensities(u5);
    EXPECT_EQ(v.method, PropensityMethod::BetaDirect);  // sum beta == sum alpha
    for (double p : v.probs) EXPECT_NEAR(p, 0.2, 1e-12);

    const auto heavy_beta = BeliefSet::beta({{1, 9}, {2, 8}, {1, 5}});
    EXPECT_EQ(resolve_beta_route(heavy_beta, BetaRoute::Auto), BetaRoute::InclExcl);
    const auto many = BeliefSet::beta(Pairs(11, {1, 3}));
    EXPECT_EQ(resolve_beta_route(many, BetaRoute::Auto), BetaRoute::Direct);
    EXPECT_EQ(beta_propensities(heavy_beta).method, PropensityMethod::BetaInclExcl);

    const auto pair = beta_propensities(BeliefSet::beta({{10, 2}, {2, 10}}));
    EXPECT_NEAR(pair.probs[0], beta_pairwise(10, 2, 2, 10), 1e-12);
    EXPECT_NEAR(pair.probs[1], 1.0 - beta_pairwise(10, 2, 2, 10), 1e-12);
}

TEST(BetaPropensities, SimplexOnRandomSets) {
    Rng rng = make_rng(14);
    for (int i = 0; i < 200; ++i) {
        const int n = 2 + i % 7;
        const auto set = BeliefSet::beta(random_pairs(rng, n, 30));
        for (auto route : {BetaRoute::Auto, BetaRoute::Direct, BetaRoute::InclExcl}) {
            const auto v = beta_propensities(set, route);
            EXPECT_NEAR(v.sum(), 1.0, 1e-9);
        }
    }
}

TEST(BetaPropensities, LargeCountsStayFinite) {
    const auto set = BeliefSet::beta({{400, 600}, {380, 620}, {410, 590}});
    const auto v = beta_propensities(set, BetaRoute::Direct);
    EXPECT_NEAR(v.sum(), 1.0, 1e-9);
    for (std::size_t t = 0; t < 3; ++t) {
        EXPECT_NEAR(v.probs[t], quadrature_propensity(set, t), 1e-8);
    }
}

// ---------------------------------------------------------------------------
// Quadrature

TEST(Quadrature, Examples) {
    EXPECT_NEAR(quadrature_propensity(BeliefSet::normal({{1, 1}, {0, 1}}), 0),
                std_normal_cdf(1.0 / std::sqrt(2.0)), 1e-8);
    EXPECT_NEAR(quadrature_propensity(BeliefSet::beta({{2, 1}, {1, 1}}), 0), 2.0 / 3.0, 1e-8);
}

TEST(Quadrature, AgreesWithAnalyticRoutes) {
    Rng rng = make_rng(15);
    // The lattice error estimate is a 3-sigma bound, so a few exceedances
    // are expected; gross ones are not.
    int compared = 0, outside = 0;
    for (int rep = 0; rep < 30; ++rep) {
        const int n = 2 + rep % 5;
        const BeliefSet g = random_normal_set(rng, n);
        const BeliefSet b = BeliefSet::beta(random_pairs(rng, n, 20));
        double sg = 0.0, sb = 0.0;
        for (int t = 0; t < n; ++t) {
            const double qg = quadrature_propensity(g, t);
            const double qb = quadrature_propensity(b, t);
            sg += qg;
            sb += qb;
            const ProbEstimate e = gaussian_propensity(g, t);
            ++compared;
            if (std::abs(qg - e.value) > e.abs_err + 1e-9) ++outside;
            EXPECT_NEAR(qg, e.value, 2 * e.abs_err + 1e-9);
            EXPECT_NEAR(qb, beta_pmax_direct(b, t), 1e-6);
        }
        EXPECT_NEAR(sg, 1.0, 1e-6);
        EXPECT_NEAR(sb, 1.0, 1e-6);
    }
    EXPECT_LE(outside, compared / 20);
}

TEST(Quadrature, RealValuedBetaParameters) {
    // Beta(0.5, 0.5) vs Beta(2.5, 1.5) etc., checked against a Monte Carlo
    // tally with gamma-ratio draws.
    const std::vector<std::pair<double, double>> p{{0.5, 0.5}, {2.5, 1.5}, {1.2, 3.3}};
    Rng rng = make_rng(16);
    std::vector<std::gamma_distribution<double>> ga, gb;
    for (auto [a, b] : p) {
        ga.emplace_back(a);
        gb.emplace_back(b);
    }
    std::vector<long> wins(3, 0);
    const int draws = 1000000;
    for (int i = 0; i < draws; ++i) {
        std::size_t best = 0;
        double bv = -1.0;
        for (std::size_t k = 0; k < 3; ++k) {
            const double x = ga[k](rng);
            const double y = gb[k](rng);
            const double v = x / (x + y);
            if (v > bv) {
                bv = v;
                best = k;
            }
        }
        ++wins[best];
    }
    double total = 0.0;
    for (std::size_t t = 0; t < 3; ++t) {
        const double q = beta_propensity_quadrature(p, t);
        total += q;
        const double f = static_cast<double>(wins[t]) / draws;
        EXPECT_NEAR(q, f, 4 * std::sqrt(f * (1 - f) / draws));
    }
    EXPECT_NEAR(total, 1.0, 1e-6);
}

TEST(Quadrature, TinyPropensitiesStayNonNegative) {
    const auto set = BeliefSet::normal({{0.0, 0.01}, {5.0, 0.01}, {4.0, 0.02}});
    const double q = quadrature_propensity(set, 0);
    EXPECT_GE(q, 0.0);
    EXPECT_LT(q, 1e-13);
}

TEST(Dispatch, RoutesAndErrors) {
    const auto b = BeliefSet::beta({{2, 3}, {3, 2}});
    PropensityOptions o;
    o.gaussian_route = GaussianRoute::Quadrature;
    EXPECT_EQ(propensities(b, o).method, PropensityMethod::Quadrature);
    EXPECT_NEAR(propensities(b, o).sum(), 1.0, 1e-6);
    const auto l = BeliefSet::lognormal({{0, 1}, {1, 1}});
    EXPECT_EQ(propensities(l).method, PropensityMethod::GaussianMvn);
    o.gaussian_route = GaussianRoute::Joint;
    EXPECT_THROW(propensities(l, o), DomainError);
}
