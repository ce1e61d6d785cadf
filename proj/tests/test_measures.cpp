#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "eot/error.hpp"
#include "eot/measures.hpp"
#include "test_support.hpp"

using namespace eot;
using testing::vec;

TEST_CASE("discrete measure validation") {
  CHECK_THROWS_WITH_AS(DiscreteMeasure({}, Eigen::VectorXd()), "empty sample", InputError);
  CHECK_THROWS_AS(DiscreteMeasure({{0.0}, {1.0}}, vec({1.0})), InputError);
  CHECK_THROWS_AS(DiscreteMeasure({{0.0}, {1.0}}, vec({1.5, -0.5})), InputError);
  CHECK_THROWS_AS(DiscreteMeasure({{0.0}, {1.0}}, vec({0.5, 0.6})), InputError);
  CHECK_THROWS_AS(DiscreteMeasure({{0.0}, {1.0, 2.0}}, vec({0.5, 0.5})), InputError);
  CHECK_NOTHROW(DiscreteMeasure({{0.0}, {1.0}}, vec({0.25, 0.75})));
}

TEST_CASE("empirical measures carry total mass one") {
  for (std::size_t n : {1, 3, 7, 11, 997}) {
    SampleSet s;
    for (std::size_t i = 0; i < n; ++i) s.points.push_back({static_cast<double>(i) / 3.0});
    const DiscreteMeasure m = from_samples(s);
    CHECK(std::abs(m.weights().sum() - 1.0) <= 1e-12);
    CHECK(m.sample_size() == n);
    CHECK(m.size() == n);
  }
}

TEST_CASE("duplicates stay distinct atoms in from_samples") {
  SampleSet s{{{1.0}, {1.0}, {2.0}}, "dup"};
  const DiscreteMeasure m = from_samples(s);
  CHECK(m.size() == 3);
  CHECK(m.weight(0) == doctest::Approx(1.0 / 3.0));
}

TEST_CASE("from_counts merges repeats and keeps the draw count") {
  const DiscreteMeasure m = DiscreteMeasure::from_counts({{0.0}, {1.0}, {2.0}}, {3, 0, 1});
  CHECK(m.size() == 2);
  CHECK(m.sample_size() == 4);
  CHECK(m.atom(1)[0] == 2.0);
  CHECK(m.weight(0) == doctest::Approx(0.75));
}

TEST_CASE("cost functions") {
  const Point a{0.0, 0.0};
  const Point b{3.0, 4.0};
  CHECK(CostFunction::sq_euclidean()(a, b) == 25.0);
  CHECK(CostFunction::euclidean()(a, b) == doctest::Approx(5.0));
  CHECK(CostFunction::lp(1.0)(a, b) == doctest::Approx(7.0));
  CHECK(CostFunction::indicator(5.0)(a, b) == 0.0);
  CHECK(CostFunction::indicator(4.9)(a, b) == 1.0);
  CHECK(CostFunction::constant(0.7)(a, b) == 0.7);
  CHECK(CostFunction::parse("lp:3").name() == "lp:3");
  CHECK(CostFunction::parse("euclidean")(a, b) == doctest::Approx(5.0));
  CHECK_THROWS_AS(CostFunction::parse("manhattan"), InputError);
  CHECK_THROWS_AS(CostFunction::parse("lp:0.5"), InputError);
  CHECK_THROWS_AS(CostFunction::sq_euclidean()({0.0}, {1.0, 2.0}), InputError);

  Eigen::MatrixXd t(2, 2);
  t << 0, 1, 2, 3;
  const CostFunction table = CostFunction::table(t);
  CHECK(table({1.0}, {0.0}) == 2.0);
  CHECK_THROWS_AS(table({2.0}, {0.0}), InputError);
}

TEST_CASE("cost context") {
  const auto x = DiscreteMeasure::uniform({{0.0}, {1.0}});
  const auto y = DiscreteMeasure::uniform({{0.0}, {2.0}, {3.0}});
  const CostContext ctx = build_cost(CostFunction::sq_euclidean(), x, y, 0.5);
  CHECK(ctx.rows() == 2);
  CHECK(ctx.cols() == 3);
  CHECK(ctx.cost()(1, 2) == 4.0);
  CHECK(ctx.scaled()(1, 2) == 8.0);
  CHECK(ctx.sup_bound() == 9.0);
  CHECK(ctx.scaled_sup_bound() == 18.0);
  const double s = ctx.scaled_sup_bound();
  CHECK(ctx.gibbs().minCoeff() >= std::exp(-s));
  CHECK(ctx.gibbs().maxCoeff() <= std::exp(s));

  CHECK_THROWS_AS(build_cost(CostFunction::sq_euclidean(), x, y, 0.0), InputError);
  CHECK_THROWS_AS(build_cost(CostFunction::sq_euclidean(), x, y, -1.0), InputError);
  const CostFunction inf("inf", [](const Point&, const Point&) { return INFINITY; });
  CHECK_THROWS_WITH_AS(build_cost(inf, x, y, 1.0), "unbounded cost", InputError);
  CHECK_THROWS_AS(build_cost(Eigen::MatrixXd::Zero(3, 3), x, y, 1.0), InputError);
}

TEST_CASE("gibbs kernel stays within its bounds on random costs") {
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 20; ++trial) {
    const auto x = testing::random_measure(rng, 6, 2);
    const auto y = testing::random_measure(rng, 5, 2);
    for (double eps : {0.1, 1.0, 10.0}) {
      const CostContext ctx = build_cost(CostFunction::sq_euclidean(), x, y, eps);
      const double s = ctx.scaled_sup_bound();
      CHECK(ctx.gibbs().minCoeff() >= std::exp(-s) * (1.0 - 1e-14));
      CHECK(ctx.gibbs().maxCoeff() <= std::exp(s));
    }
  }
}

TEST_CASE("CSV and JSON samples") {
  const SampleSet one = parse_samples("0.0\n1.0\n", SampleFormat::csv);
  CHECK(one.size() == 2);
  CHECK(one.dim() == 1);
  const SampleSet two = parse_samples("1,2\n3,4\n", SampleFormat::csv);
  CHECK(two.size() == 2);
  CHECK(two.dim() == 2);
  CHECK(two.points[1][0] == 3.0);
  CHECK(parse_samples("x,y\n1, 2\r\n\n3,4", SampleFormat::csv, true).size() == 2);
  CHECK_THROWS_WITH_AS(parse_samples("[[1,2],[3]]", SampleFormat::json), "ragged rows at record 2",
                       InputError);
  CHECK_THROWS_AS(parse_samples("1,2\nfoo,4\n", SampleFormat::csv), InputError);
  CHECK_THROWS_WITH_AS(parse_samples("1,2\n3\n", SampleFormat::csv), "ragged rows at record 2", InputError);
  CHECK_THROWS_AS(parse_samples("[[1,\"a\"]]", SampleFormat::json), InputError);
  CHECK_THROWS_AS(parse_samples("{}", SampleFormat::json), InputError);
  CHECK_THROWS_AS(parse_samples("", SampleFormat::csv), InputError);
  CHECK(parse_samples("[1, 2, 3]", SampleFormat::json).size() == 3);
}

TEST_CASE("sample files") {
  const auto dir = std::filesystem::temp_directory_path() / "eot_measures_test";
  std::filesystem::create_directories(dir);
  {
    std::ofstream(dir / "a.csv") << "0.5,1\n2,3\n";
    std::ofstream(dir / "a.json") << "[[0.5,1],[2,3]]";
  }
  const SampleSet csv = load_samples(dir / "a.csv", format_from_path(dir / "a.csv"));
  const SampleSet json = load_samples(dir / "a.json", format_from_path(dir / "a.json"));
  CHECK(csv.points == json.points);
  CHECK_THROWS_AS(load_samples(dir / "missing.csv", SampleFormat::csv), InputError);
}

TEST_CASE("synthetic samples") {
  const Generator coin = make_generator("coin");
  const SampleSet big = sample_from(coin, 1000000, 123);
  double zeros = 0.0;
  for (const auto& p : big.points) zeros += p[0] == 0.0 ? 1.0 : 0.0;
  CHECK(std::abs(zeros / 1e6 - 0.5) <= 0.005);

  const SampleSet single = sample_from(coin, 1, 9);
  REQUIRE(single.size() == 1);
  CHECK((single.points[0][0] == 0.0 || single.points[0][0] == 1.0));

  CHECK(sample_from(make_generator("normal:3"), 50, 1).points ==
        sample_from(make_generator("normal:3"), 50, 1).points);
  CHECK(sample_from(make_generator("normal:3"), 50, 1).dim() == 3);
  CHECK(sample_from(make_generator("uniform"), 50, 1).points !=
        sample_from(make_generator("uniform"), 50, 2).points);
  CHECK_THROWS_AS(make_generator("cauchy"), InputError);
  CHECK_THROWS_AS(sample_from(coin, 0, 1), InputError);

  const auto counts = draw_counts({0.2, 0.3, 0.5}, 1000, 4);
  CHECK(counts[0] + counts[1] + counts[2] == 1000);
  CHECK(draw_counts({0.2, 0.3, 0.5}, 1000, 4) == counts);
  CHECK_THROWS_AS(draw_counts({0.2, 0.3}, 10, 4), InputError);
}
