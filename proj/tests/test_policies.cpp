#include <doctest.h>

#include <cmath>

#include "frz/policies.hpp"
#include "frz/rng.hpp"

using namespace frz;

TEST_CASE("linear schedule closed form") {
  LinearFreezeConfig cfg;
  cfg.t0_fraction = 0.5;
  cfg.total_iterations = 100;
  cfg.base_lr = 0.8;
  cfg.num_units = 4;

  SUBCASE("zero times are linearly spaced from t0*total to total") {
    std::vector<double> t = linear_zero_times(cfg);
    REQUIRE(t.size() == 4);
    CHECK(t[0] == doctest::Approx(50.0));
    CHECK(t[1] == doctest::Approx(200.0 / 3.0));
    CHECK(t[2] == doctest::Approx(250.0 / 3.0));
    CHECK(t[3] == doctest::Approx(100.0));
  }
  SUBCASE("endpoint values") {
    CHECK(linear_lr(cfg, 0, 0) == doctest::Approx(0.8));        // cos 0 = 1
    CHECK(linear_lr(cfg, 0, 50) == doctest::Approx(0.0));       // cos pi = -1
    CHECK(linear_lr(cfg, 0, 25) == doctest::Approx(0.4));       // cos pi/2 = 0
    CHECK(linear_lr(cfg, 0, 60) == 0.0);                        // clamped after t_i
  }
  SUBCASE("closed form to 1e-12 over random draws") {
    Rng rng(14);
    std::vector<double> zeros = linear_zero_times(cfg);
    for (int rep = 0; rep < 10000; ++rep) {
      int unit = int(rng.below(4));
      std::int64_t t = std::int64_t(rng.below(100));
      double want = double(t) >= zeros[std::size_t(unit)]
                        ? 0.0
                        : 0.5 * 0.8 * (1.0 + std::cos(M_PI * double(t) / zeros[std::size_t(unit)]));
      CHECK(std::abs(linear_lr(cfg, unit, t) - want) <= 1e-12);
    }
  }
  SUBCASE("mask grows with t") {
    CHECK(linear_frozen_at(cfg, 0).empty());
    CHECK(linear_frozen_at(cfg, 70) == std::vector<int>{0, 1});
    CHECK(linear_frozen_at(cfg, 100) == std::vector<int>{0, 1, 2, 3});
  }
  SUBCASE("single unit freezes at t0") {
    LinearFreezeConfig one = cfg;
    one.num_units = 1;
    CHECK(linear_zero_times(one)[0] == doctest::Approx(50.0));
  }
}

TEST_CASE("gradnorm policy follows the percentile and prefix rules") {
  GradNormState st;
  FreezeMask mask(4);

  SUBCASE("no decision before two observations per active unit") {
    for (int u = 0; u < 4; ++u) st.observe(u, 1.0);
    CHECK(st.decide(mask, 0.5).empty());
  }

  SUBCASE("equal rates freeze the first half in unit order") {
    for (int u = 0; u < 4; ++u) st.observe(u, 1.0);
    for (int u = 0; u < 4; ++u) st.observe(u, 0.5);
    // all rates equal 0.5; bottom-50% by (rate, unit) = {0, 1}; both extend the prefix
    CHECK(st.decide(mask, 0.5) == std::vector<int>{0, 1});
  }

  SUBCASE("a quiet unit behind an active one must wait") {
    st.observe(0, 1.0);
    st.observe(1, 1.0);
    st.observe(2, 1.0);
    st.observe(0, 2.0);    // rate 1.0
    st.observe(1, 1.9);    // rate 0.9
    st.observe(2, 1.001);  // rate ~0.001 (lowest)
    FreezeMask m3(3);
    CHECK(st.decide(m3, 0.5).empty());  // unit 2 is freezable but units 0,1 are active
  }

  SUBCASE("lowest-rate leading unit freezes") {
    st.observe(0, 1.0);
    st.observe(1, 1.0);
    st.observe(2, 1.0);
    st.observe(3, 1.0);
    st.observe(0, 1.001);
    st.observe(1, 1.9);
    st.observe(2, 1.8);
    st.observe(3, 1.7);
    CHECK(st.decide(mask, 0.5) == std::vector<int>{0});
  }

  SUBCASE("percentile quota shrinks with the active set") {
    FreezeMask m(4);
    m.apply({0, 1, 2}, 0);
    st.observe(3, 1.0);
    st.observe(3, 1.0);
    // one active unit: floor(0.5 * 1) = 0 candidates
    CHECK(st.decide(m, 0.5).empty());
  }
}

namespace {

// scripted predictor: freeze when the last snapshot's l2 delta to the
// previous one falls under tau
class DeltaStub : public FreezePredictor {
 public:
  explicit DeltaStub(double tau) : tau_(tau) {}
  DecisionTrace decide_sequence(const Sequence& seq) const override {
    DecisionTrace t;
    t.alphas.assign(seq.size(), 1.0f / float(seq.size()));
    double d2 = 0.0;
    if (seq.size() >= 2) {
      const auto& a = seq[seq.size() - 1];
      const auto& b = seq[seq.size() - 2];
      for (std::size_t i = 0; i < a.size(); ++i) d2 += (double(a[i]) - b[i]) * (double(a[i]) - b[i]);
    } else {
      d2 = 1e9;
    }
    t.decision = std::sqrt(d2) < tau_ ? 1 : 0;
    t.confidence = {t.decision ? 0.1f : 0.9f, t.decision ? 0.9f : 0.1f};
    return t;
  }
  std::int64_t flops(int seq_len) const override { return 100 * seq_len; }

 private:
  double tau_;
};

}  // namespace

TEST_CASE("smart_decide runs the predictor over ready units only") {
  DeltaStub stub(0.5);
  HistoryBuffer buf(10);
  FreezeMask mask(3);

  // unit 0: converging trajectory; unit 1: still moving; unit 2: too little history
  for (int t = 1; t <= 6; ++t) {
    std::vector<WeightSnapshot> snaps;
    WeightSnapshot s0;
    s0.unit_id = 0;
    s0.timestamp = t;
    s0.values = {float(1.0 - std::exp(-t))};
    snaps.push_back(s0);
    WeightSnapshot s1;
    s1.unit_id = 1;
    s1.timestamp = t;
    s1.values = {float(t * 2.0)};
    snaps.push_back(s1);
    if (t > 4) {
      WeightSnapshot s2;
      s2.unit_id = 2;
      s2.timestamp = t;
      s2.values = {0.0f};
      snaps.push_back(s2);
    }
    buf.push(snaps);
  }

  SmartDecideResult r = smart_decide(stub, buf, mask, 5);
  REQUIRE(r.to_freeze.size() == 1);
  CHECK(r.to_freeze[0].unit == 0);
  // two decide calls (units 0 and 1 have >= 5 snapshots; unit 2 has 2)
  CHECK(r.predictor_flops_spent == 100 * 6 + 100 * 6);

  SUBCASE("no sequential constraint: a later unit can freeze first") {
    // make unit 1 the converged one instead
    HistoryBuffer b2(10);
    for (int t = 1; t <= 6; ++t) {
      WeightSnapshot s0;
      s0.unit_id = 0;
      s0.timestamp = t;
      s0.values = {float(t * 3.0)};
      WeightSnapshot s1;
      s1.unit_id = 1;
      s1.timestamp = t;
      s1.values = {2.0f};
      b2.push({s0, s1});
    }
    SmartDecideResult r2 = smart_decide(stub, b2, mask, 5);
    REQUIRE(r2.to_freeze.size() == 1);
    CHECK(r2.to_freeze[0].unit == 1);  // unit 0 stays active
  }

  SUBCASE("frozen units are skipped entirely") {
    FreezeMask m(3);
    m.apply({0}, 0);
    SmartDecideResult r3 = smart_decide(stub, buf, m, 5);
    CHECK(r3.to_freeze.empty());
    CHECK(r3.predictor_flops_spent == 100 * 6);  // only unit 1 consulted
  }
}

TEST_CASE("smart_decide on a scripted trajectory matches a hand simulation") {
  DeltaStub stub(0.11);
  const int units = 2;
  HistoryBuffer buf(30);
  FreezeMask mask(units);
  std::vector<int> frozen_at(units, -1);
  // unit deltas shrink geometrically at different speeds
  for (int t = 1; t <= 20; ++t) {
    std::vector<WeightSnapshot> snaps;
    for (int u = 0; u < units; ++u) {
      if (mask.is_frozen(u)) continue;
      WeightSnapshot s;
      s.unit_id = u;
      s.timestamp = t;
      double rate = u == 0 ? 0.5 : 0.8;
      s.values = {float(2.0 * (1.0 - std::pow(rate, t)))};
      snaps.push_back(s);
    }
    buf.push(snaps);
    SmartDecideResult r = smart_decide(stub, buf, mask, 3);
    std::vector<int> add;
    for (const auto& d : r.to_freeze) add.push_back(d.unit);
    for (int u : mask.apply(add, t)) {
      buf.drop(u);
      frozen_at[std::size_t(u)] = t;
    }
  }
  // hand simulation: delta at step t is 2*rate^(t-1)*(1-rate); first t with
  // >= 3 snapshots and delta < 0.11: unit 0 (rate .5): delta(t)=2^-t... t=4
  // gives 2*0.5^3*0.5=0.125, t=5 gives 0.0625 -> freeze at 5. unit 1 (rate
  // .8): delta(t) = 2*0.8^(t-1)*0.2 = 0.4*0.8^(t-1) < 0.11 at t=7 (0.105).
  CHECK(frozen_at[0] == 5);
  CHECK(frozen_at[1] == 7);
}

TEST_CASE("apply_mask is union-only and keeps first freeze iterations") {
  FreezeMask m(5);
  CHECK(m.apply({}, 10).empty());
  CHECK(m.frozen_count() == 0);

  m.apply({0}, 10);
  std::vector<int> added = m.apply({1, 3}, 40);
  CHECK(added == std::vector<int>{1, 3});
  CHECK(m.iteration_frozen(0) == 10);
  CHECK(m.iteration_frozen(1) == 40);
  CHECK(m.iteration_frozen(3) == 40);

  // re-adding keeps the original iteration
  CHECK(m.apply({0}, 99).empty());
  CHECK(m.iteration_frozen(0) == 10);

  // monotone growth in time: an earlier iteration is a contract violation
  CHECK_THROWS_AS(m.apply({2}, 5), contract_error);
  CHECK_THROWS_AS(m.apply({17}, 50), contract_error);
}

TEST_CASE("mask sizes are monotone under every policy's updates") {
  Rng rng(5);
  FreezeMask m(8);
  int last = 0;
  std::int64_t t = 0;
  for (int step = 0; step < 50; ++step) {
    std::vector<int> add;
    if (rng.next_double() < 0.4) add.push_back(int(rng.below(8)));
    t += 1 + std::int64_t(rng.below(3));
    m.apply(add, t);
    CHECK(m.frozen_count() >= last);
    last = m.frozen_count();
  }
}
