#include "ppgn/diagnostics.hpp"

#include <iostream>
#include <mutex>
#include <utility>

namespace ppgn {
namespace {

std::mutex& sink_mutex() {
  static std::mutex m;
  return m;
}

WarningSink& sink() {
  static WarningSink s = [](const std::string& msg) { std::cerr << "warning: " << msg << '\n'; };
  return s;
}

}  // namespace

WarningSink set_warning_sink(WarningSink next) {
  std::lock_guard lock(sink_mutex());
  return std::exchange(sink(), std::move(next));
}

void warn(const std::string& message) {
  std::lock_guard lock(sink_mutex());
  if (sink()) sink()(message);
}

}  // namespace ppgn
