#include <doctest.h>

#include <cmath>
#include <random>

#include "flock/contact.hpp"

using namespace flock;

namespace {

PiecewiseTrajectory line(Vec2 p, Vec2 v, double t0, double t1) {
  return PiecewiseTrajectory::ballistic({p, v}, t0, t1);
}

double dist_at(const PiecewiseTrajectory &a, const PiecewiseTrajectory &b, double t) {
  return norm(b.sample(t).p - a.sample(t).p);
}

}  // namespace

TEST_CASE("tangency") {
  const double R = 0.1;
  auto n = tangency({2 * R, 0}, {0, 1}, {0, 0}, R);
  CHECK(n.n0 == doctest::Approx(0.0));
  CHECK(n.n1 == doctest::Approx(0.0));
  CHECK(n.n2 == doctest::Approx(-1.0));
  n = tangency({3 * R, 0}, {0.3, -2}, {5, 1}, R);
  CHECK(n.n0 == doctest::Approx(-5 * R * R));

  // n0 < 0 exactly when the pair is farther apart than 2R.
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> u(-1, 1);
  for (int k = 0; k < 50; ++k) {
    const auto a = connect_states({{u(rng), u(rng)}, {u(rng), u(rng)}}, {{u(rng), u(rng)}, {u(rng), u(rng)}}, 1.0);
    const auto b = connect_states({{u(rng), u(rng)}, {u(rng), u(rng)}}, {{u(rng), u(rng)}, {u(rng), u(rng)}}, 1.0);
    for (double t = 0; t <= 1.0; t += 0.01) {
      const auto sa = eval(a, t), sb = eval(b, t);
      const auto tv = tangency(sb.p - sa.p, sb.v - sa.v, sb.u - sa.u, 0.2);
      CHECK((tv.n0 < 0) == (norm(sb.p - sa.p) > 0.4));
    }
  }
}

TEST_CASE("contact_basis") {
  const double R = 0.1;
  auto b = contact_basis({2 * R, 0}, {0, 3}, R);
  CHECK(norm(b.p_hat - Vec2{1, 0}) < 1e-12);
  CHECK(norm(b.q_hat - Vec2{0, 1}) < 1e-12);
  CHECK(b.relative_speed == doctest::Approx(3.0));

  b = contact_basis({0, 2 * R}, {-2, 0}, R);
  CHECK(norm(b.p_hat - Vec2{0, 1}) < 1e-12);
  CHECK(norm(b.q_hat - Vec2{-1, 0}) < 1e-12);

  const double th = 0.7;
  const Vec2 s{2 * R * std::cos(th), 2 * R * std::sin(th)};
  const Vec2 sd{-std::sin(th) * 1.5, std::cos(th) * 1.5};
  b = contact_basis(s, sd, R);
  CHECK(std::abs(norm(b.p_hat) - 1) < 1e-12);
  CHECK(std::abs(norm(b.q_hat) - 1) < 1e-12);
  CHECK(std::abs(dot(b.p_hat, b.q_hat)) < 1e-12);

  CHECK_THROWS_AS(contact_basis({2 * R, 0}, {0, 0}, R), std::domain_error);
  CHECK_THROWS_AS(contact_basis({3 * R, 0}, {0, 1}, R), std::invalid_argument);
}

TEST_CASE("detect_contacts on constructed scenarios") {
  FlockParams p;
  p.R = 0.1;
  p.dt = 0.01;

  SUBCASE("parallel at 3R") {
    const auto own = line({0, 0}, {1, 0}, 0, 2);
    const TrajectoryMap others{{1, line({0, 3 * p.R}, {1, 0}, 0, 2)}};
    CHECK(detect_contacts(own, others, p).empty());
  }
  SUBCASE("head-on crossing") {
    const auto own = line({-1, 0}, {1, 0}, 0, 2);
    const TrajectoryMap others{{1, line({1, 0}, {-1, 0}, 0, 2)}};
    const auto c = detect_contacts(own, others, p);
    REQUIRE(c.size() == 1);
    // |s| = 2 - 2t < 2R for t in (0.9, 1.1).
    CHECK(c[0].start == doctest::Approx(0.9).epsilon(p.dt / 100));
    CHECK(c[0].end == doctest::Approx(1.1).epsilon(p.dt / 100));
    CHECK(c[0].start < 1.0);
    CHECK(c[0].end > 1.0);
    CHECK(c[0].participants == std::vector<AgentId>{1});
  }
  SUBCASE("chain of two disjoint encounters") {
    const auto own = line({0, 0}, {0, 0}, 0, 2);
    const TrajectoryMap others{{1, line({-1, 0.1}, {2, 0}, 0, 2)}, {2, line({-3, -0.1}, {2, 0}, 0, 2)}};
    const auto c = detect_contacts(own, others, p);
    REQUIRE(c.size() == 2);
    CHECK(c[0].participants == std::vector<AgentId>{1});
    CHECK(c[1].participants == std::vector<AgentId>{2});
    const double half = std::sqrt(0.04 - 0.01) / 2;  // |x| < sqrt((2R)^2 - 0.1^2), speed 2
    CHECK(c[0].start == doctest::Approx(0.5 - half).epsilon(1e-3));
    CHECK(c[0].end == doctest::Approx(0.5 + half).epsilon(1e-3));
    CHECK(c[1].start == doctest::Approx(1.5 - half).epsilon(1e-3));
    CHECK(c[1].end == doctest::Approx(1.5 + half).epsilon(1e-3));
  }
  SUBCASE("mismatched horizons") {
    const auto own = line({0, 0}, {0, 0}, 0, 2);
    const TrajectoryMap others{{1, line({1, 0}, {0, 0}, 0, 3)}};
    CHECK_THROWS_AS(detect_contacts(own, others, p), std::invalid_argument);
  }
}

TEST_CASE("detect_contacts is complete under dense resampling") {
  FlockParams p;
  p.R = 0.1;
  p.dt = 0.01;
  std::mt19937_64 rng(12);
  std::uniform_real_distribution<double> u(-1, 1);
  int with_contacts = 0;
  for (int trial = 0; trial < 40; ++trial) {
    auto random_traj = [&]() {
      PiecewiseTrajectory t;
      AgentState x{{0.5 * u(rng), 0.5 * u(rng)}, {u(rng), u(rng)}};
      double t0 = 0.0;
      for (double t1 : {0.4, 0.9, 1.2}) {
        const AgentState y{{0.5 * u(rng), 0.5 * u(rng)}, {u(rng), u(rng)}};
        t.append({t0, connect_states(x, y, t1 - t0), PieceKind::unconstrained});
        x = y;
        t0 = t1;
      }
      return t;
    };
    const auto own = random_traj();
    TrajectoryMap others;
    for (AgentId j = 1; j <= 3; ++j) others.emplace(j, random_traj());
    const auto contacts = detect_contacts(own, others, p);
    if (!contacts.empty()) ++with_contacts;
    for (double t = 0.0; t <= 1.2; t += p.dt / 10) {
      for (const auto &[id, other] : others) {
        if (dist_at(own, other, t) >= 2 * p.R - kContactSlack) continue;
        bool covered = false;
        for (const auto &c : contacts) {
          if (t >= c.start - p.dt / 100 && t <= c.end + p.dt / 100 &&
              std::find(c.participants.begin(), c.participants.end(), id) != c.participants.end()) {
            covered = true;
          }
        }
        CHECK(covered);
      }
    }
    for (std::size_t k = 0; k + 1 < contacts.size(); ++k) CHECK(contacts[k].end <= contacts[k + 1].start);
  }
  CHECK(with_contacts > 10);
}

TEST_CASE("make_constrained_arc") {
  const double R = 0.1;
  SUBCASE("shared velocity is the mean and the arc is ballistic") {
    const std::map<AgentId, AgentState> entry{{0, {{0, 0}, {1, 0}}}, {1, {{2 * R, 0}, {3, 0}}}};
    const auto arc = make_constrained_arc(entry, 1.0, 1.5, R);
    CHECK(arc.shared_velocity == Vec2{2, 0});
    CHECK(arc_energy(arc) == 0.0);
    for (AgentId id : {0u, 1u}) {
      const auto m = arc_motion(arc, id);
      CHECK(m.a == Vec2{0, 0});
      CHECK(m.b == Vec2{0, 0});
    }
    for (double t = 0; t <= 0.5; t += 0.05) {
      const double d = norm(eval(arc_motion(arc, 1), t).p - eval(arc_motion(arc, 0), t).p);
      CHECK(std::abs(d - 2 * R) < 1e-12);
    }
  }
  SUBCASE("matched entries reproduce ballistic motion") {
    const std::map<AgentId, AgentState> entry{{3, {{0, 0}, {0.5, -1}}}, {7, {{0, 3 * R}, {0.5, -1}}}};
    const auto arc = make_constrained_arc(entry, 0.0, 1.0, R);
    const auto m = arc_motion(arc, 7);
    CHECK(norm(eval(m, 0.8).p - Vec2{0.4, 3 * R - 0.8}) < 1e-14);
  }
  SUBCASE("rigid under a shared control") {
    const std::map<AgentId, AgentState> entry{
        {0, {{0, 0}, {0, 0}}}, {1, {{2 * R, 0}, {0, 0}}}, {2, {{R, std::sqrt(3.0) * R}, {0, 0}}}};
    const auto arc = make_constrained_arc(entry, 0.0, 1.0, R, {{1, 2}, {-3, 0.5}});
    for (double t = 0; t <= 1.0; t += 0.1) {
      for (AgentId i = 0; i < 3; ++i) {
        for (AgentId j = i + 1; j < 3; ++j) {
          const double d = norm(eval(arc_motion(arc, j), t).p - eval(arc_motion(arc, i), t).p);
          CHECK(std::abs(d - 2 * R) < 1e-12);
        }
      }
    }
  }
  SUBCASE("errors") {
    const std::map<AgentId, AgentState> close{{0, {{0, 0}, {}}}, {1, {{R, 0}, {}}}};
    CHECK_THROWS_AS(make_constrained_arc(close, 0.0, 1.0, R), std::invalid_argument);
    const std::map<AgentId, AgentState> ok{{0, {{0, 0}, {}}}, {1, {{2 * R, 0}, {}}}};
    CHECK_THROWS_AS(make_constrained_arc(ok, 1.0, 1.0, R), std::invalid_argument);
  }
}

TEST_CASE("separate_entries") {
  const double R = 0.1;
  std::map<AgentId, Vec2> pos{{0, {0, 0}}, {1, {0.05, 0}}, {2, {0.02, 0.03}}, {3, {1, 1}}};
  separate_entries(pos, R);
  for (auto i = pos.begin(); i != pos.end(); ++i)
    for (auto j = std::next(i); j != pos.end(); ++j) CHECK(norm(j->second - i->second) >= 2 * R - 1e-9);
  CHECK(pos.at(3) == Vec2{1, 1});

  std::map<AgentId, Vec2> same{{0, {0, 0}}, {1, {0, 0}}};
  separate_entries(same, R);
  CHECK(norm(same.at(1) - same.at(0)) == doctest::Approx(2 * R));
}

TEST_CASE("ode_residuals") {
  const double R = 0.1, dt = 0.01;
  std::vector<double> zero(20, 0.0), lin(20), quad(20);
  for (int k = 0; k < 20; ++k) {
    const double t = k * dt;
    lin[k] = 0.3 - 2.0 * t;
    quad[k] = 0.5 * 4.0 * t * t;  // m'' = 4
  }
  SUBCASE("matched branch with linear multiplier") {
    const auto r = ode_residuals(zero, lin, R, dt);
    CHECK(r.r1.size() == 16);
    CHECK(r.max_abs() < 1e-9);
  }
  SUBCASE("quadratic multiplier isolates the 2R m'' term") {
    const auto r = ode_residuals(zero, quad, R, dt);
    for (double x : r.r1) CHECK(x == doctest::Approx(2 * R * 4.0).epsilon(1e-8));
    for (double x : r.r2) CHECK(std::abs(x) < 1e-12);
  }
  SUBCASE("errors") {
    std::vector<double> four(4, 0.0);
    CHECK_THROWS_AS(ode_residuals(four, four, R, dt), std::invalid_argument);
    std::vector<double> five(5, 0.0);
    CHECK_THROWS_AS(ode_residuals(five, zero, R, dt), std::invalid_argument);
  }
  SUBCASE("stencils converge at second order on smooth series") {
    // Independent closed form of both residuals for a = sin t, m = cos t.
    auto exact = [R](double t) {
      const double a = std::sin(t), a1 = std::cos(t), a2 = -std::sin(t), a3 = -std::cos(t);
      const double m = std::cos(t), m1 = -std::sin(t), m2 = -std::cos(t);
      const double r1 = 4 * a * a2 / (2 * R) + 3 * a1 * a1 / (2 * R) + 2 * R * m2 -
                        std::pow(a, 4) / (8 * R * R * R) - m * a * a / (2 * R);
      const double r2 = m * a1 + m1 * a + 6 * a * a * a1 / (4 * R * R) - a3;
      return std::pair{r1, r2};
    };
    auto error_at = [&](double h) {
      const double t_mid = 0.7;
      std::vector<double> a, m;
      for (int k = -2; k <= 2; ++k) {
        a.push_back(std::sin(t_mid + k * h));
        m.push_back(std::cos(t_mid + k * h));
      }
      const auto r = ode_residuals(a, m, R, h);
      const auto [e1, e2] = exact(t_mid);
      return std::max(std::abs(r.r1[0] - e1), std::abs(r.r2[0] - e2));
    };
    const double slope = std::log(error_at(0.02) / error_at(0.01)) / std::log(2.0);
    CHECK(slope > 1.8);
  }
}

TEST_CASE("check_escape") {
  FlockParams p;
  p.R = 0.1;
  p.D = 0.1;
  p.v_d = {0, 0};
  p.dt = 0.01;
  const std::map<AgentId, AgentState> entry{{0, {{-p.R, 0}, {0, 0}}}, {1, {{p.R, 0}, {0, 0}}}};
  const auto arc = make_constrained_arc(entry, 0.0, 0.5, p.R);
  const TrajectoryMap others{{1, line({p.R, 0}, {0, 0}, 0.0, 1.2)}};

  SUBCASE("diverging attractor: accepted at the first check") {
    EscapeProblem pr{{{{-1.0, 0}}, {0, 0}}, 1.2};
    CHECK(check_escape(arc, 0, arc.start, pr, others, p).has_value());
  }
  SUBCASE("converging attractor: rejected everywhere inside the arc") {
    EscapeProblem pr{{{{1.0, 0}}, {0, 0}}, 1.2};
    for (double t = arc.start; t < arc.end; t += p.dt) {
      CHECK_FALSE(check_escape(arc, 0, t, pr, others, p).has_value());
    }
    const auto last = check_escape(arc, 0, arc.end, pr, others, p);
    REQUIRE(last.has_value());
    CHECK(norm(eval(*last, 0).p - Vec2{-p.R, 0}) < 1e-12);
  }
  SUBCASE("exit outside the arc") {
    EscapeProblem pr{{{{-1.0, 0}}, {0, 0}}, 1.2};
    CHECK_THROWS(check_escape(arc, 0, arc.end + 0.1, pr, others, p));
  }
}
