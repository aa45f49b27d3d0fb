#include <doctest.h>

#include <array>
#include <cmath>
#include <sstream>

#include "evcomp/event_world.hpp"

using namespace evc;

TEST_CASE("event functions") {
  CHECK(eval_event_fn(EventType::add, 0.5, 0.2) ==
        doctest::Approx(0.65).epsilon(1e-15));
  CHECK(eval_event_fn(EventType::sub, 1.0, 0.25) ==
        doctest::Approx(0.65).epsilon(1e-15));
  // sin(pi * 0.5) = 1
  CHECK(eval_event_fn(EventType::sine, 0.0, 0.5) ==
        doctest::Approx(1.0).epsilon(1e-12));
  CHECK(eval_event_fn(EventType::sine, 0.3, 0.0) ==
        doctest::Approx(0.3).epsilon(1e-12));
  for (double x : {-2.0, 0.0, 1.7})
    CHECK(eval_event_fn(EventType::con, x, 0.99) == x);
}

TEST_CASE("event names round-trip") {
  for (int i = 0; i < kNumEvents; ++i) {
    const EventType e = EventType(i);
    CHECK(event_from_name(event_name(e)) == e);
  }
  CHECK_THROWS_AS(event_from_name("mul"), std::invalid_argument);
}

TEST_CASE("schedules tile the stream with in-range segment lengths") {
  Rng rng(31);
  for (int trial = 0; trial < 200; ++trial) {
    const int steps = 40 + trial;
    EventSchedule s = make_schedule(rng, steps, OrderMode::fixed);
    CHECK(s.steps == steps);
    REQUIRE(!s.segments.empty());
    CHECK(s.segments.front().start == 0);
    CHECK(s.segments.back().end == steps);
    for (std::size_t k = 0; k + 1 < s.segments.size(); ++k) {
      CHECK(s.segments[k].end == s.segments[k + 1].start);  // no gap, no overlap
      CHECK(s.segments[k].length() >= 5);
      CHECK(s.segments[k].length() <= 12);
    }
    // only the final segment may be clipped short
    CHECK(s.segments.back().length() >= 1);
    CHECK(s.segments.back().length() <= 12);
  }
  CHECK_THROWS_AS(make_schedule(rng, 0, OrderMode::fixed),
                  std::invalid_argument);
}

TEST_CASE("fixed order cycles through the four events starting at add") {
  Rng rng(32);
  EventSchedule s = make_schedule(rng, 400, OrderMode::fixed);
  static const EventType cycle[4] = {EventType::add, EventType::sine,
                                     EventType::sub, EventType::con};
  for (std::size_t k = 0; k < s.segments.size(); ++k)
    CHECK(s.segments[k].event == cycle[k % 4]);
}

TEST_CASE("random order starts at add and draws events uniformly") {
  Rng rng(33);
  std::array<int, 4> counts{};
  for (int trial = 0; trial < 400; ++trial) {
    EventSchedule s = make_schedule(rng, 200, OrderMode::random);
    CHECK(s.segments.front().event == EventType::add);
    for (std::size_t k = 1; k < s.segments.size(); ++k)
      ++counts[std::size_t(s.segments[k].event)];
  }
  long total = 0;
  for (int c : counts) total += c;
  const double expect = double(total) / 4.0;
  double chi2 = 0.0;
  for (int c : counts) chi2 += (c - expect) * (c - expect) / expect;
  CHECK(chi2 < 16.27);  // df=3, p=0.001
}

TEST_CASE("no-repeat random order never repeats an event back to back") {
  Rng rng(34);
  for (int trial = 0; trial < 50; ++trial) {
    EventSchedule s = make_schedule(rng, 300, OrderMode::random, true);
    for (std::size_t k = 1; k < s.segments.size(); ++k)
      CHECK(s.segments[k].event != s.segments[k - 1].event);
  }
}

TEST_CASE("segment lengths are uniform over 5..12") {
  Rng rng(35);
  std::array<long, 8> counts{};
  long n = 0;
  while (n < 10000) {
    EventSchedule s = make_schedule(rng, 1000, OrderMode::fixed);
    for (std::size_t k = 0; k + 1 < s.segments.size(); ++k) {
      ++counts[std::size_t(s.segments[k].length() - 5)];
      ++n;
    }
  }
  const double expect = double(n) / 8.0;
  double chi2 = 0.0;
  for (long c : counts) {
    CHECK(c > 0);
    chi2 += (c - expect) * (c - expect) / expect;
  }
  CHECK(chi2 < 24.32);  // df=7, p=0.001
}

TEST_CASE("event lookup by step") {
  Rng rng(36);
  EventSchedule s = make_schedule(rng, 100, OrderMode::fixed);
  for (int t = 0; t < 100; ++t) {
    const int k = s.segment_index_at(t);
    CHECK(s.segments[std::size_t(k)].start <= t);
    CHECK(t < s.segments[std::size_t(k)].end);
    CHECK(s.event_at(t) == s.segments[std::size_t(k)].event);
  }
  CHECK_THROWS_AS(s.event_at(-1), std::invalid_argument);
  CHECK_THROWS_AS(s.event_at(100), std::invalid_argument);
}

TEST_CASE("same seed reproduces the same schedule and stream") {
  Rng a(37), b(37);
  EventSchedule sa = make_schedule(a, 500, OrderMode::random);
  EventSchedule sb = make_schedule(b, 500, OrderMode::random);
  REQUIRE(sa.segments.size() == sb.segments.size());
  for (std::size_t k = 0; k < sa.segments.size(); ++k) {
    CHECK(sa.segments[k].event == sb.segments[k].event);
    CHECK(sa.segments[k].start == sb.segments[k].start);
    CHECK(sa.segments[k].end == sb.segments[k].end);
  }
  EventStream ta = make_stream(a, sa, CiMode::early_switch, GateMode::gradual);
  EventStream tb = make_stream(b, sb, CiMode::early_switch, GateMode::gradual);
  for (int t = 0; t < 500; ++t) {
    CHECK(ta.samples[std::size_t(t)].x == tb.samples[std::size_t(t)].x);
    CHECK(ta.samples[std::size_t(t)].y == tb.samples[std::size_t(t)].y);
    CHECK(ta.samples[std::size_t(t)].ci == tb.samples[std::size_t(t)].ci);
  }
}

TEST_CASE("gate value patterns per mode") {
  Rng rng(38);
  EventSchedule s = make_schedule(rng, 300, OrderMode::fixed);

  const auto closed = gate_values(s, GateMode::always_closed);
  for (double v : closed) CHECK(v == 0.0);

  const auto open = gate_values(s, GateMode::always_open);
  for (double v : open) CHECK(v == 1.0);

  const auto oas = gate_values(s, GateMode::open_at_switch);
  CHECK(oas[0] == 0.0);  // an epoch start is not a switch
  for (std::size_t k = 1; k < s.segments.size(); ++k)
    CHECK(oas[std::size_t(s.segments[k].start)] == 1.0);
  long ones = 0;
  for (double v : oas) ones += (v == 1.0);
  CHECK(ones == long(s.segments.size()) - 1);  // nowhere else

  const auto grad = gate_values(s, GateMode::gradual);
  CHECK(grad[0] == 0.0);
  CHECK(grad[1] == 0.0);  // first switch is at least 5 steps in
  for (std::size_t k = 1; k < s.segments.size(); ++k) {
    const int at = s.segments[k].start;
    CHECK(grad[std::size_t(at)] == 1.0);
    CHECK(grad[std::size_t(at - 1)] == 0.5);
    if (at + 1 < s.steps) CHECK(grad[std::size_t(at + 1)] == 0.5);
  }
  for (int t = 0; t < s.steps; ++t)
    CHECK((grad[std::size_t(t)] == 0.0 || grad[std::size_t(t)] == 0.5 ||
           grad[std::size_t(t)] == 1.0));
}

TEST_CASE("stream chains x through the event functions") {
  Rng rng(39);
  EventSchedule s = make_schedule(rng, 300, OrderMode::random);
  EventStream st = make_stream(rng, s, CiMode::none, GateMode::open_at_switch);
  CHECK(st.samples[0].x == 0.0);
  for (int t = 0; t < 300; ++t) {
    const auto& smp = st.samples[std::size_t(t)];
    CHECK(smp.t == t);
    CHECK(smp.y >= -1.0);
    CHECK(smp.y < 1.0);
    CHECK(smp.event == s.event_at(t));
    CHECK(smp.target == eval_event_fn(smp.event, smp.x, smp.y));
    if (t + 1 < 300) CHECK(st.samples[std::size_t(t) + 1].x == smp.target);
    CHECK(smp.surprise == gate_values(s, GateMode::open_at_switch)[std::size_t(t)]);
  }

  EventStream st2 = make_stream(rng, s, CiMode::none, GateMode::always_closed, 0.25);
  CHECK(st2.samples[0].x == 0.25);
}

TEST_CASE("ci modes: zero vector, in-tune one-hot, early switch window") {
  Rng rng(40);
  EventSchedule s = make_schedule(rng, 400, OrderMode::fixed);

  EventStream none = make_stream(rng, s, CiMode::none, GateMode::always_closed);
  for (const auto& smp : none.samples)
    for (double c : smp.ci) CHECK(c == 0.0);

  EventStream tune = make_stream(rng, s, CiMode::in_tune, GateMode::always_closed);
  for (const auto& smp : tune.samples) {
    for (int e = 0; e < kNumEvents; ++e)
      CHECK(smp.ci[std::size_t(e)] == (e == int(smp.event) ? 1.0 : 0.0));
  }

  // early switch: within each segment the CI flips once to the next event,
  // no earlier than two steps in and no later than the last segment step
  EventStream early =
      make_stream(rng, s, CiMode::early_switch, GateMode::always_closed);
  auto shown = [&](int t) {
    const auto& ci = early.samples[std::size_t(t)].ci;
    for (int e = 0; e < kNumEvents; ++e)
      if (ci[std::size_t(e)] == 1.0) return EventType(e);
    FAIL("ci is not one-hot at step ", t);
    return EventType::add;
  };
  for (std::size_t k = 0; k < s.segments.size(); ++k) {
    const auto& seg = s.segments[k];
    if (k + 1 == s.segments.size()) {
      for (int t = seg.start; t < seg.end; ++t) CHECK(shown(t) == seg.event);
      continue;
    }
    const EventType next = s.segments[k + 1].event;
    int flip = seg.end;
    for (int t = seg.start; t < seg.end; ++t)
      if (shown(t) != seg.event) {
        flip = t;
        break;
      }
    REQUIRE(flip < seg.end);  // fixed order: the next event always differs
    CHECK(flip >= seg.start + 2);
    for (int t = seg.start; t < flip; ++t) CHECK(shown(t) == seg.event);
    for (int t = flip; t < seg.end; ++t) CHECK(shown(t) == next);
  }
}

TEST_CASE("identity predictor error: constant event is exactly zero") {
  EventSchedule s;
  s.steps = 50;
  s.segments = {{EventType::con, 0, 50}};
  Rng rng(41);
  EventStream st = make_stream(rng, s, CiMode::none, GateMode::always_closed);
  CHECK(identity_baseline_error(st) == 0.0);
}

TEST_CASE("identity predictor error: add-only stream sits near one half") {
  EventSchedule s;
  s.steps = 200000;
  s.segments = {{EventType::add, 0, s.steps}};
  Rng rng(42);
  EventStream st = make_stream(rng, s, CiMode::none, GateMode::always_closed);
  CHECK(identity_baseline_error(st) == doctest::Approx(0.5).epsilon(0.04));
}

TEST_CASE("identity predictor error: mixed stream plateau") {
  Rng rng(43);
  EventSchedule s = make_schedule(rng, 200000, OrderMode::fixed);
  EventStream st = make_stream(rng, s, CiMode::none, GateMode::always_closed);
  const double err = identity_baseline_error(st);
  CHECK(err > 0.389);
  CHECK(err < 0.429);
}

TEST_CASE("stream csv shape") {
  Rng rng(44);
  EventSchedule s = make_schedule(rng, 25, OrderMode::fixed);
  EventStream st = make_stream(rng, s, CiMode::in_tune, GateMode::gradual);
  std::ostringstream out;
  write_stream_csv(st, out);
  std::istringstream in(out.str());
  std::string line;
  REQUIRE(std::getline(in, line));
  CHECK(line == "t,x,y,target,event,ci0,ci1,ci2,ci3,surprise");
  int rows = 0;
  while (std::getline(in, line)) {
    if (rows == 7) {
      // x column round-trips through %.17g
      const auto c1 = line.find(','), c2 = line.find(',', c1 + 1);
      CHECK(std::stod(line.substr(c1 + 1, c2 - c1 - 1)) == st.samples[7].x);
    }
    ++rows;
  }
  CHECK(rows == 25);
}
