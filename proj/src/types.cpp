#include "streamrank/types.hpp"

#include <string>

namespace streamrank {
namespace {

constexpr std::array<std::string_view, kNumBehaviors> kBehaviorNames = {
    "impression", "click", "effective_view", "long_view",
    "like",       "comment", "gift",         "exit"};

constexpr std::array<std::string_view, kNumTasks> kTaskNames = {
    "click", "effective_view", "long_view", "like", "comment", "gift"};

}  // namespace

std::string_view to_string(Domain d) {
  return d == Domain::kLive ? "live" : "short_video";
}

std::string_view to_string(BehaviorKind b) { return kBehaviorNames[index(b)]; }

std::string_view to_string(Task t) { return kTaskNames[index(t)]; }

Domain parse_domain(std::string_view s) {
  if (s == "live") return Domain::kLive;
  if (s == "short_video") return Domain::kShortVideo;
  throw std::invalid_argument("unknown domain '" + std::string(s) + "'");
}

BehaviorKind parse_behavior(std::string_view s) {
  for (std::size_t i = 0; i < kBehaviorNames.size(); ++i) {
    if (kBehaviorNames[i] == s) return static_cast<BehaviorKind>(i);
  }
  throw std::invalid_argument("unknown behavior '" + std::string(s) + "'");
}

Task parse_task(std::string_view s) {
  for (std::size_t i = 0; i < kTaskNames.size(); ++i) {
    if (kTaskNames[i] == s) return static_cast<Task>(i);
  }
  throw std::invalid_argument("unknown task '" + std::string(s) + "'");
}

}  // namespace streamrank
