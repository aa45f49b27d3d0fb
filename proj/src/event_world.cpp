#include "evcomp/event_world.hpp"

#include <cmath>
#include <ostream>

#include "evcomp/numerics.hpp"

namespace evc {

namespace {
constexpr int kMinSegment = 5;
constexpr int kMaxSegment = 12;
constexpr double kPi = 3.14159265358979323846;
}  // namespace

const char* event_name(EventType e) {
  switch (e) {
    case EventType::add: return "add";
    case EventType::sine: return "sin";
    case EventType::sub: return "sub";
    case EventType::con: return "con";
  }
  return "?";
}

EventType event_from_name(const std::string& name) {
  for (int i = 0; i < kNumEvents; ++i)
    if (name == event_name(EventType(i))) return EventType(i);
  throw std::invalid_argument("unknown event name: " + name);
}

double eval_event_fn(EventType e, double x, double y) {
  switch (e) {
    case EventType::add: return 0.9 * x + y;
    case EventType::sine: return x + std::sin(kPi * y);
    case EventType::sub: return 0.9 * x - y;
    case EventType::con: return x;
  }
  return 0.0;
}

EventType EventSchedule::event_at(int t) const {
  return segments[segment_index_at(t)].event;
}

int EventSchedule::segment_index_at(int t) const {
  require(t >= 0 && t < steps, "EventSchedule: step out of range");
  // segments are short; linear scan from a binary start would be overkill
  int lo = 0, hi = int(segments.size()) - 1;
  while (lo < hi) {
    const int mid = (lo + hi) / 2;
    if (segments[mid].end <= t)
      lo = mid + 1;
    else
      hi = mid;
  }
  return lo;
}

const char* order_name(OrderMode m) {
  return m == OrderMode::fixed ? "fixed" : "random";
}

EventSchedule make_schedule(Rng& rng, int steps, OrderMode order,
                            bool no_repeat) {
  require(steps >= 1, "make_schedule: steps must be >= 1");
  EventSchedule sched;
  sched.steps = steps;
  int at = 0;
  EventType ev = EventType::add;  // every epoch starts with the add event
  int k = 0;
  while (at < steps) {
    const int len = rng.uniform_int(kMinSegment, kMaxSegment);
    const int end = std::min(at + len, steps);
    sched.segments.push_back({ev, at, end});
    at = end;
    ++k;
    if (order == OrderMode::fixed) {
      ev = EventType((int(ev) + 1) % kNumEvents);
    } else {
      EventType next;
      do {
        next = EventType(rng.uniform_int(0, kNumEvents - 1));
      } while (no_repeat && next == ev);
      ev = next;
    }
  }
  return sched;
}

const char* ci_name(CiMode m) {
  switch (m) {
    case CiMode::none: return "none";
    case CiMode::in_tune: return "in-tune";
    case CiMode::early_switch: return "early-switch";
  }
  return "?";
}

const char* gate_name(GateMode m) {
  switch (m) {
    case GateMode::always_closed: return "always-closed";
    case GateMode::always_open: return "always-open";
    case GateMode::open_at_switch: return "open-at-switch";
    case GateMode::gradual: return "gradual";
  }
  return "?";
}

std::vector<double> gate_values(const EventSchedule& schedule, GateMode mode,
                                int half_width) {
  require(half_width >= 0, "gate_values: half_width must be >= 0");
  std::vector<double> s(schedule.steps, 0.0);
  switch (mode) {
    case GateMode::always_closed:
      break;
    case GateMode::always_open:
      for (auto& v : s) v = 1.0;
      break;
    case GateMode::open_at_switch:
      for (std::size_t k = 1; k < schedule.segments.size(); ++k)
        s[schedule.segments[k].start] = 1.0;
      break;
    case GateMode::gradual:
      for (std::size_t k = 1; k < schedule.segments.size(); ++k) {
        const int at = schedule.segments[k].start;
        s[at] = 1.0;
        for (int d = 1; d <= half_width; ++d) {
          if (at - d >= 0) s[at - d] = std::max(s[at - d], 0.5);
          if (at + d < schedule.steps) s[at + d] = std::max(s[at + d], 0.5);
        }
      }
      break;
  }
  return s;
}

EventStream make_stream(Rng& rng, const EventSchedule& schedule, CiMode ci_mode,
                        GateMode gate_mode, double x0) {
  require(schedule.steps >= 1 && !schedule.segments.empty(),
          "make_stream: empty schedule");
  EventStream stream;
  stream.schedule = schedule;
  stream.ci_mode = ci_mode;
  stream.gate_mode = gate_mode;

  // Early-switch CI: the upcoming event's CI appears before the actual
  // switch, but at least two steps after the previous one.
  std::vector<int> flip(schedule.segments.size(), -1);
  if (ci_mode == CiMode::early_switch) {
    for (std::size_t k = 0; k + 1 < schedule.segments.size(); ++k) {
      const auto& seg = schedule.segments[k];
      flip[k] = rng.uniform_int(seg.start + 2, seg.end - 1);
    }
  }

  const std::vector<double> surprise = gate_values(schedule, gate_mode);

  stream.samples.resize(schedule.steps);
  double x = x0;
  std::size_t seg_idx = 0;
  for (int t = 0; t < schedule.steps; ++t) {
    if (t >= schedule.segments[seg_idx].end) ++seg_idx;
    const auto& seg = schedule.segments[seg_idx];

    StreamSample& sample = stream.samples[t];
    sample.t = t;
    sample.x = x;
    sample.y = rng.uniform(-1.0, 1.0);
    sample.event = seg.event;
    sample.target = eval_event_fn(seg.event, sample.x, sample.y);
    sample.surprise = surprise[t];

    sample.ci.fill(0.0);
    if (ci_mode == CiMode::in_tune) {
      sample.ci[int(seg.event)] = 1.0;
    } else if (ci_mode == CiMode::early_switch) {
      // after this segment's flip step, show the next segment's event
      const bool flipped = flip[seg_idx] >= 0 && t >= flip[seg_idx];
      const EventType shown =
          flipped ? schedule.segments[seg_idx + 1].event : seg.event;
      sample.ci[int(shown)] = 1.0;
    }

    x = sample.target;  // chain: x_{t+1} = f_e(x_t, y_t)
  }
  return stream;
}

double identity_baseline_error(const EventStream& stream) {
  require(!stream.samples.empty(), "identity_baseline_error: empty stream");
  double acc = 0.0;
  for (const auto& s : stream.samples) acc += std::abs(s.target - s.x);
  return acc / double(stream.samples.size());
}

void write_stream_csv(const EventStream& stream, std::ostream& out) {
  out << "t,x,y,target,event,ci0,ci1,ci2,ci3,surprise\n";
  char buf[512];
  for (const auto& s : stream.samples) {
    std::snprintf(buf, sizeof(buf),
                  "%d,%.17g,%.17g,%.17g,%s,%g,%g,%g,%g,%g\n", s.t, s.x, s.y,
                  s.target, event_name(s.event), s.ci[0], s.ci[1], s.ci[2],
                  s.ci[3], s.surprise);
    out << buf;
  }
}

}  // namespace evc
