/*
 Copyright 2026 The diffoc Authors

 Licensed under the Apache License, Version 2.0 (the "License");
 you may not use this file except in compliance with the License.
 You may obtain a copy of the License at

      https://www.apache.org/licenses/LICENSE-2.0

 Unless required by applicable law or agreed to in writing, software
 distributed under the License is distributed on an "AS IS" BASIS,
 WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 See the License for the specific language governing permissions and
 limitations under the License.
*/

#pragma once

#include <cstdlib>
#include <iostream>
#include <mutex>
#include <string>
#include <string_view>

namespace diffoc {

enum class LogLevel { error = 0, info = 1, debug = 2 };

/// Level from DOC_LOG_LEVEL (error | info | debug); defaults to error.
inline LogLevel log_level() {
  static const LogLevel level = [] {
    const char* env = std::getenv("DOC_LOG_LEVEL");
    const std::string_view v = env ? env : "";
    if (v == "debug") return LogLevel::debug;
    if (v == "info") return LogLevel::info;
    return LogLevel::error;
  }();
  return level;
}

inline void log_at(LogLevel level, std::string_view tag, const std::string& msg) {
  if (static_cast<int>(level) > static_cast<int>(log_level())) return;
  static std::mutex mu;
  std::lock_guard<std::mutex> lock(mu);
  std::cerr << "[" << tag << "] " << msg << '\n';
}

inline void log_error(const std::string& msg) { log_at(LogLevel::error, "error", msg); }
inline void log_info(const std::string& msg) { log_at(LogLevel::info, "info", msg); }
inline void log_debug(const std::string& msg) { log_at(LogLevel::debug, "debug", msg); }

}  // namespace diffoc
