#pragma once

#include <array>
#include <string>
#include <string_view>

#include "fedreview/errors.hpp"

namespace fedreview {

// T1: review necessity (yes/no), T2: review comment generation, T3: code refinement.
enum class Task { t1, t2, t3 };

inline constexpr std::array<Task, 3> kAllTasks{Task::t1, Task::t2, Task::t3};

enum class TaskKind { classification, generation };

constexpr TaskKind kind_of(Task t) noexcept {
  return t == Task::t1 ? TaskKind::classification : TaskKind::generation;
}

inline std::string to_string(Task t) {
  switch (t) {
    case Task::t1:
      return "T1";
    case Task::t2:
      return "T2";
    case Task::t3:
      return "T3";
  }
  return "?";
}

inline Task parse_task(std::string_view s) {
  if (s == "T1" || s == "t1") return Task::t1;
  if (s == "T2" || s == "t2") return Task::t2;
  if (s == "T3" || s == "t3") return Task::t3;
  throw ConfigError("unknown task '" + std::string(s) + "'");
}

constexpr std::size_t index_of(Task t) noexcept { return static_cast<std::size_t>(t); }

}  // namespace fedreview
