#pragma once

#include <functional>
#include <string>

namespace gridcal {

using WarningHandler = std::function<void(const std::string&)>;

// Default handler prints "warning: <msg>" to stderr.
void warn(const std::string& message);

// Returns the previous handler. Passing an empty function restores the default.
WarningHandler set_warning_handler(WarningHandler handler);

} // namespace gridcal
