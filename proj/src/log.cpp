#include "gesturerep/log.hpp"

#include <iostream>
#include <mutex>

namespace gesturerep {

namespace {
std::mutex g_mutex;
WarningSink g_sink;
}  // namespace

void warn(std::string_view message) {
  std::lock_guard lock(g_mutex);
  if (g_sink) {
    g_sink(message);
  } else {
    std::cerr << "warning: " << message << '\n';
  }
}

WarningSink set_warning_sink(WarningSink sink) {
  std::lock_guard lock(g_mutex);
  std::swap(g_sink, sink);
  return sink;
}

}  // namespace gesturerep
