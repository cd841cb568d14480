#pragma once

#include <array>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <string_view>

namespace streamrank {

using UserId = std::uint64_t;
using ItemId = std::uint64_t;
using AuthorId = std::uint64_t;
using SessionId = std::uint64_t;
using EventId = std::uint64_t;
/// Simulated wall-clock time in seconds.
using Seconds = double;

enum class Domain : std::uint8_t { kLive, kShortVideo };

enum class BehaviorKind : std::uint8_t {
  kImpression,
  kClick,
  kEffectiveView,
  kLongView,
  kLike,
  kComment,
  kGift,
  kExit,
};
inline constexpr std::size_t kNumBehaviors = 8;

/// The predicted interaction rates. Every task is a behavior that can go
/// positive during a session (impression and exit are bookkeeping).
enum class Task : std::uint8_t {
  kClick,
  kEffectiveView,
  kLongView,
  kLike,
  kComment,
  kGift,
};
inline constexpr std::size_t kNumTasks = 6;
inline constexpr std::array<Task, kNumTasks> kAllTasks = {
    Task::kClick, Task::kEffectiveView, Task::kLongView,
    Task::kLike,  Task::kComment,       Task::kGift};

template <typename T>
using PerTask = std::array<T, kNumTasks>;

constexpr std::size_t index(Task t) { return static_cast<std::size_t>(t); }
constexpr std::size_t index(BehaviorKind b) { return static_cast<std::size_t>(b); }

/// Maps a behavior to the task it labels; impression and exit map to nothing.
constexpr bool behavior_task(BehaviorKind b, Task& out) {
  switch (b) {
    case BehaviorKind::kClick: out = Task::kClick; return true;
    case BehaviorKind::kEffectiveView: out = Task::kEffectiveView; return true;
    case BehaviorKind::kLongView: out = Task::kLongView; return true;
    case BehaviorKind::kLike: out = Task::kLike; return true;
    case BehaviorKind::kComment: out = Task::kComment; return true;
    case BehaviorKind::kGift: out = Task::kGift; return true;
    default: return false;
  }
}

constexpr BehaviorKind task_behavior(Task t) {
  return static_cast<BehaviorKind>(static_cast<std::uint8_t>(t) + 1);
}

std::string_view to_string(Domain d);
std::string_view to_string(BehaviorKind b);
std::string_view to_string(Task t);

Domain parse_domain(std::string_view s);
BehaviorKind parse_behavior(std::string_view s);
Task parse_task(std::string_view s);

// Error taxonomy. Callers that only care about "something went wrong" catch
// std::runtime_error / std::logic_error.

/// An input event log violates the session structure.
class MalformedLogError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A probability or intermediate value left its valid domain.
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A training sample's flow tag does not belong to the objective mode.
class RoutingError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

}  // namespace streamrank
