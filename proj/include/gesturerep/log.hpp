#pragma once

#include <functional>
#include <string>
#include <string_view>

namespace gesturerep {

// Warnings go to stderr unless a sink is installed (tests capture them).
using WarningSink = std::function<void(std::string_view)>;

void warn(std::string_view message);
// Returns the previous sink. An empty sink restores stderr output.
WarningSink set_warning_sink(WarningSink sink);

}  // namespace gesturerep
