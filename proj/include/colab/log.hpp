// Copyright 2026 The colab-lab Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <atomic>
#include <iostream>
#include <mutex>
#include <string_view>

namespace colab {

enum class LogLevel { kDebug = 0, kInfo = 1, kWarn = 2, kError = 3, kOff = 4 };

inline std::atomic<LogLevel>& log_threshold() {
  static std::atomic<LogLevel> level{LogLevel::kInfo};
  return level;
}

inline void log(LogLevel level, std::string_view msg) {
  if (level < log_threshold().load()) return;
  static std::mutex mu;
  static constexpr std::string_view tags[] = {"debug", "info", "warn", "error"};
  std::lock_guard lock(mu);
  std::clog << "[" << tags[static_cast<int>(level)] << "] " << msg << '\n';
}

inline void log_info(std::string_view msg) { log(LogLevel::kInfo, msg); }
inline void log_warn(std::string_view msg) { log(LogLevel::kWarn, msg); }

}  // namespace colab
