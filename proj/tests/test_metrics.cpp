#include <doctest.h>

#include "refine/errors.hpp"
#include "refine/metrics.hpp"
#include "test_support.hpp"

using namespace refine;

TEST_CASE("precision values") {
  CHECK(precision(20, 20) == 1.0);
  CHECK(precision(0, 20) == 0.0);
  CHECK(precision(15, 20) == 0.75);
  CHECK_THROWS_AS(precision(0, 0), MetricError);
  CHECK_THROWS_AS(precision(3, 2), MetricError);
}

TEST_CASE("retrieval accuracy values") {
  CHECK(retrieval_accuracy(20, 20) == 1.0);
  CHECK(retrieval_accuracy(13, 20) == 0.65);
  CHECK(retrieval_accuracy(0, 20) == 0.0);
  CHECK_THROWS_AS(retrieval_accuracy(1, 0), MetricError);
  CHECK_THROWS_AS(retrieval_accuracy(21, 20), MetricError);
}

TEST_CASE("iteration number") {
  const std::vector<double> immediate{1.0};
  CHECK(rf_iteration_number(immediate, 6) == 0);
  const std::vector<double> never{0.1, 0.2, 0.3, 0.4, 0.5, 0.9};
  CHECK(rf_iteration_number(never, 6) == 6);
  const std::vector<double> third{0.2, 0.5, 0.9, 1.0};
  CHECK(rf_iteration_number(third, 6) == 3);
  CHECK(rf_iteration_number(std::vector<double>{}, 6) == 6);
}

TEST_CASE("mean of values") {
  const std::vector<double> v{1, 2, 3, 6};
  CHECK(mean(v) == 3.0);
  CHECK(mean(std::vector<double>{}) == 0.0);
}

TEST_CASE("session metrics follow the feedback") {
  Rng rng(1);
  const Dataset db = refine::testing::random_dataset(rng, 200, 3);
  SessionState s = start_session(db.id(0), db, SessionConfig{});
  CHECK_THROWS_AS(session_metrics(s), StateError);

  const auto mark = [&](std::size_t n) {
    std::vector<std::string> ids;
    for (std::size_t k = 0; k < n; ++k) ids.push_back(s.current_batch().entries[k].id);
    submit_feedback(s, db, ids);
  };
  mark(12);
  mark(5);
  const SessionMetrics running = progress_metrics(s);
  CHECK(running.cumulative_relevant == std::vector<std::size_t>{12, 17});
  CHECK(running.rf_iteration_number == 6);
  mark(3);
  REQUIRE(s.complete());
  const SessionMetrics m = session_metrics(s);
  CHECK(m.batch_size == std::vector<std::size_t>{20, 8, 3});
  CHECK(m.batch_relevant == std::vector<std::size_t>{12, 5, 3});
  CHECK(m.precision[0] == 0.6);
  CHECK(m.precision[1] == 0.625);
  CHECK(m.precision[2] == 1.0);
  CHECK(m.retrieval_accuracy == std::vector<double>{0.6, 0.85, 1.0});
  // At iteration 0 with a full batch, precision equals accuracy.
  CHECK(m.precision[0] == m.retrieval_accuracy[0]);
  CHECK(m.rf_iteration_number == 2);
  CHECK(m.final_accuracy() == 1.0);
  CHECK(m.accuracy_at(0) == 0.6);
  CHECK(m.accuracy_at(5) == 1.0);

  const auto j = to_json(m);
  CHECK(j["rf_iteration_number"] == 2);
  CHECK(j["retrieval_accuracy"].size() == 3);
}

TEST_CASE("accuracy never decreases over randomized sessions") {
  Rng rng(2);
  for (int trial = 0; trial < 30; ++trial) {
    const Dataset db = refine::testing::random_dataset(rng, 150, 3, 5);
    SessionState s = start_session(db.id(rng.uniform_index(150)), db, SessionConfig{});
    while (!s.complete()) {
      std::vector<std::string> ids;
      for (const auto& e : s.current_batch().entries)
        if (rng.uniform() < 0.4) ids.push_back(e.id);
      submit_feedback(s, db, ids);
    }
    const SessionMetrics m = session_metrics(s);
    for (std::size_t t = 1; t < m.retrieval_accuracy.size(); ++t) {
      CHECK(m.retrieval_accuracy[t] >= m.retrieval_accuracy[t - 1]);
    }
    for (double p : m.precision) {
      CHECK(p >= 0.0);
      CHECK(p <= 1.0);
    }
    CHECK(m.rf_iteration_number <= 6);
  }
}
