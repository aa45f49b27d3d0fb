#pragma once

#include <array>
#include <iosfwd>
#include <string>
#include <vector>

#include "evcomp/rng.hpp"

namespace evc {

// The four generating functions; one-hot dimension 4, in this order.
enum class EventType : int { add = 0, sine = 1, sub = 2, con = 3 };
inline constexpr int kNumEvents = 4;

const char* event_name(EventType e);
EventType event_from_name(const std::string& name);

// add: 0.9x + y   sine: x + sin(pi*y)   sub: 0.9x - y   con: x
double eval_event_fn(EventType e, double x, double y);

struct Segment {
  EventType event;
  int start = 0;  // inclusive
  int end = 0;    // exclusive
  int length() const { return end - start; }
};

// Segments tile [0, steps). Lengths are drawn uniformly from {5..12}; the
// final segment is clipped at the stream end, so only it may be shorter.
// The first segment is always `add`.
struct EventSchedule {
  std::vector<Segment> segments;
  int steps = 0;
  EventType event_at(int t) const;
  int segment_index_at(int t) const;
};

enum class OrderMode { fixed, random };
const char* order_name(OrderMode m);

// fixed: cycle add -> sine -> sub -> con. random: each next event drawn
// uniformly; repeats allowed unless no_repeat.
EventSchedule make_schedule(Rng& rng, int steps, OrderMode order,
                            bool no_repeat = false);

enum class CiMode { none, in_tune, early_switch };
const char* ci_name(CiMode m);

enum class GateMode { always_closed, always_open, open_at_switch, gradual };
const char* gate_name(GateMode m);

// Per-step surprise values for a schedule. Switches are the start steps of
// segments 1..n-1; there is no pulse at t = 0 (an epoch start is not a
// switch; the state reset covers it). gradual places `half_width` steps of
// 0.5 on each side of the full opening.
std::vector<double> gate_values(const EventSchedule& schedule, GateMode mode,
                                int half_width = 1);

struct StreamSample {
  int t = 0;
  double x = 0.0;
  double y = 0.0;
  double target = 0.0;  // f_e(x, y); becomes x at t+1
  EventType event = EventType::add;
  std::array<double, 4> ci{};  // one-hot (zero vector in none mode)
  double surprise = 0.0;
};

struct EventStream {
  EventSchedule schedule;
  std::vector<StreamSample> samples;
  CiMode ci_mode = CiMode::none;
  GateMode gate_mode = GateMode::always_closed;
};

// Draw order per stream: early-switch CI flip steps (one per segment with a
// successor), then y_t step by step. In early-switch mode the CI for segment
// k+1 first appears at a step drawn uniformly from
// [start_k + 2, start_{k+1} - 1].
EventStream make_stream(Rng& rng, const EventSchedule& schedule, CiMode ci_mode,
                        GateMode gate_mode, double x0 = 0.0);

// MAE of the predictor yhat_t = x_t. The early-training plateau of the
// networks sits at this level (~0.41 on a mixed stream).
double identity_baseline_error(const EventStream& stream);

// CSV with header: t,x,y,target,event,ci0,ci1,ci2,ci3,surprise
void write_stream_csv(const EventStream& stream, std::ostream& out);

}  // namespace evc
